"""
Persistência: formato TNSR, checkpoints, datasets, bundles de posterior e renderizações
"""

from .bundles import load_posterior, save_posterior
from .checkpoints import load_checkpoint, save_checkpoint
from .datasets import DatasetStore
from .rendering import render_db, write_pgm
from .tnsr import TnsrFile, read_array, read_tnsr, write_tnsr

__all__ = [
    'DatasetStore', 'TnsrFile', 'load_checkpoint', 'load_posterior', 'read_array', 'read_tnsr',
    'render_db', 'save_checkpoint', 'save_posterior', 'write_pgm', 'write_tnsr',
]

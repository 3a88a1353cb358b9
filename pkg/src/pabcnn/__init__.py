"""
pa-bcnn - reconstrução fotoacústica com U-Net bayesiana

Simulação de phantoms e medidas, rede treinada com verossimilhanças
híbridas, predição por Monte Carlo dropout, calibração das incertezas e
processamento de confiança.
"""

__version__ = '1.0.0'

from .config import RunConfig
from .errors import PABCNNError
from .losses import LossKind

__all__ = ['LossKind', 'PABCNNError', 'RunConfig', '__version__']

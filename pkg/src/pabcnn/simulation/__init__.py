"""
Simulação: phantoms de vasos e modelo acústico
"""

from .phantom import (
    GridSpec,
    VesselParams,
    SimulationConfig,
    Phantom,
    Dataset,
    generate_phantom,
    generate_dataset,
    split_indices,
)
from .acoustics import (
    ArrayGeometry,
    RawChannelData,
    MCVolume,
    DASImage,
    synthesize_pulse,
    forward_project,
    add_noise,
    mc_transform,
    das_reconstruct,
    normalize_volume,
    ingest_raw,
)

__all__ = [
    'GridSpec', 'VesselParams', 'SimulationConfig', 'Phantom', 'Dataset',
    'generate_phantom', 'generate_dataset', 'split_indices',
    'ArrayGeometry', 'RawChannelData', 'MCVolume', 'DASImage',
    'synthesize_pulse', 'forward_project', 'add_noise', 'mc_transform',
    'das_reconstruct', 'normalize_volume', 'ingest_raw',
]

"""
Rede neural em numpy: camadas, U-Net bayesiana, Adam, treino e checagem de gradiente
"""

from .gradcheck import GradientCheckReport, TensorCheck, gradient_check
from .layers import ForwardContext, Mode
from .optim import Adam, AdamState
from .training import TrainConfig, TrainingData, TrainingResult, train
from .unet import (
    Checkpoint,
    HeadKind,
    HeadMaps,
    NetConfig,
    UNet,
    build_network,
    check_pairing,
    expected_parameter_count,
    forward,
)

__all__ = [
    'Adam', 'AdamState', 'Checkpoint', 'ForwardContext', 'GradientCheckReport', 'HeadKind',
    'HeadMaps', 'Mode', 'NetConfig', 'TensorCheck', 'TrainConfig', 'TrainingData',
    'TrainingResult', 'UNet', 'build_network', 'check_pairing', 'expected_parameter_count',
    'forward', 'gradient_check', 'train',
]

"""
Persistência de checkpoints em TNSR multi-mapa

Mapas: `param/<nome>`, `buffer/<nome>`, `adam_m/<nome>`, `adam_v/<nome>`,
sempre em f64. Configurações, época, perda e estado do RNG vão no meta.
"""

import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import ValidationError

from ..errors import CheckpointVersionError, CorruptPayloadError, TnsrTruncatedError
from ..losses import LossKind
from ..nn.optim import AdamState
from ..nn.unet import Checkpoint, NetConfig, UNet
from ..utils.data_validators import DataSanitizer
from .tnsr import read_tnsr, write_tnsr

logger = logging.getLogger(__name__)

FORMAT = 'pabcnn-checkpoint'
VERSION = 1


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    """Grava o checkpoint; arrays convertidos para f64"""
    maps: Dict[str, np.ndarray] = {}
    for name, value in ckpt.params.items():
        maps[f'param/{name}'] = np.asarray(value, dtype=np.float64)
    for name, value in ckpt.buffers.items():
        maps[f'buffer/{name}'] = np.asarray(value, dtype=np.float64)
    optimizer = ckpt.optimizer
    if optimizer is not None:
        for name in optimizer.m:
            maps[f'adam_m/{name}'] = np.asarray(optimizer.m[name], dtype=np.float64)
            maps[f'adam_v/{name}'] = np.asarray(optimizer.v[name], dtype=np.float64)

    meta = {
        'format': FORMAT,
        'version': VERSION,
        'net_config': ckpt.net_config.model_dump(mode='json'),
        'train_config': ckpt.train_config,
        'input_channels': ckpt.input_channels,
        'input_shape': list(ckpt.input_shape) if ckpt.input_shape else None,
        'epoch': ckpt.epoch,
        'best_val_loss': ckpt.best_val_loss,
        'parameter_count': ckpt.parameter_count,
        'adam_step': optimizer.step if optimizer is not None else None,
        'loss_kind': ckpt.loss_kind.value if ckpt.loss_kind else None,
        'rng_state': ckpt.rng_state,
    }
    path = write_tnsr(path, maps, meta)
    logger.info(f"Checkpoint gravado: {path} (época {ckpt.epoch}, {ckpt.parameter_count} parâmetros)")
    return path


def _group(maps: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    start = len(prefix) + 1
    return {key[start:]: value for key, value in maps.items() if key.startswith(prefix + '/')}


def _loss_value(value) -> float:
    result = DataSanitizer.safe_float(value)
    return float('inf') if result is None else result


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Lê um checkpoint e confere nomes, formatos e contagem de parâmetros

    Raises:
        CheckpointVersionError: formato ou versão desconhecidos
        CorruptPayloadError: payload truncado ou inconsistente com a configuração
    """
    path = Path(path)
    try:
        content = read_tnsr(path)
    except TnsrTruncatedError as e:
        raise CorruptPayloadError(f"Checkpoint truncado: {e}", str(path)) from e

    meta = content.meta
    if meta.get('format') != FORMAT or meta.get('version') != VERSION:
        raise CheckpointVersionError(
            f"Checkpoint {meta.get('format')} v{meta.get('version')} não suportado "
            f"(esperado {FORMAT} v{VERSION})", str(path)
        )

    try:
        cfg = NetConfig.model_validate(meta['net_config'])
        input_channels = int(meta['input_channels'])
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise CorruptPayloadError(f"Configuração de rede inválida no checkpoint: {e}", str(path)) from e

    dtype = np.dtype(cfg.dtype)
    params = {k: v.astype(dtype) for k, v in _group(content.maps, 'param').items()}
    buffers = {k: v.astype(dtype) for k, v in _group(content.maps, 'buffer').items()}

    reference = UNet(cfg, input_channels)
    for label, stored, expected in (('parâmetros', params, reference.named_parameters()),
                                    ('buffers', buffers, reference.named_buffers())):
        if list(stored) != list(expected):
            missing = sorted(set(expected) - set(stored))
            extra = sorted(set(stored) - set(expected))
            raise CorruptPayloadError(
                f"Nomes de {label} divergem da configuração (faltando {missing[:3]}, sobrando {extra[:3]})",
                str(path)
            )
        for name, value in stored.items():
            if value.shape != expected[name].shape:
                raise CorruptPayloadError(
                    f"{name} com formato {value.shape}, esperado {expected[name].shape}", str(path)
                )

    count = int(sum(v.size for v in params.values()))
    if meta.get('parameter_count') != count:
        raise CorruptPayloadError(
            f"Contagem de parâmetros {count} difere do registrado ({meta.get('parameter_count')})", str(path)
        )

    optimizer = None
    if meta.get('adam_step') is not None:
        optimizer = AdamState(
            m={k: v.astype(dtype) for k, v in _group(content.maps, 'adam_m').items()},
            v={k: v.astype(dtype) for k, v in _group(content.maps, 'adam_v').items()},
            step=int(meta['adam_step']),
        )

    shape = meta.get('input_shape')
    ckpt = Checkpoint(
        net_config=cfg,
        input_channels=input_channels,
        params=params,
        buffers=buffers,
        input_shape=tuple(shape) if shape else None,
        optimizer=optimizer,
        best_val_loss=_loss_value(meta.get('best_val_loss')),
        epoch=int(meta.get('epoch', 0)),
        rng_state=meta.get('rng_state'),
        loss_kind=LossKind(meta['loss_kind']) if meta.get('loss_kind') else None,
        train_config=meta.get('train_config'),
    )
    logger.info(f"Checkpoint carregado: {path} (época {ckpt.epoch})")
    return ckpt

"""
Bundles de posterior: todos os mapas agregados e o stack MC num único TNSR
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..errors import CorruptPayloadError
from ..losses import Likelihood, LossKind
from ..uncertainty import Posterior, SampleStack
from .tnsr import read_tnsr, write_tnsr

logger = logging.getLogger(__name__)

FORMAT = 'pabcnn-posterior'
STACK_PREFIX = 'stack/'


def save_posterior(path: Union[str, Path], posterior: Posterior, stack: Optional[SampleStack] = None,
                   extra_meta: Optional[Dict[str, Any]] = None) -> Path:
    """Grava mapas do posterior (f64, final_seg u8) e, opcionalmente, o stack"""
    maps: Dict[str, np.ndarray] = {}
    for name, value in posterior.maps().items():
        maps[name] = value.astype(np.uint8) if name == 'final_seg' else np.asarray(value, dtype=np.float64)

    meta: Dict[str, Any] = {'format': FORMAT, 'likelihood': posterior.likelihood.value,
                            'maps': list(maps)}
    if stack is not None:
        if stack.mu1 is not None:
            maps[f'{STACK_PREFIX}mu1'] = stack.mu1
        maps[f'{STACK_PREFIX}mu2'] = stack.mu2
        maps[f'{STACK_PREFIX}sigma'] = stack.sigma
        meta.update({
            'passes': stack.passes,
            'loss_kind': stack.loss_kind.value if stack.loss_kind else None,
            # Seeds de 64 bits como texto: JSON não garante inteiros acima de 2^53
            'seeds': [str(s) for s in stack.seeds],
        })
    meta.update(extra_meta or {})
    return write_tnsr(path, maps, meta)


def load_posterior(path: Union[str, Path]) -> Tuple[Posterior, Optional[SampleStack], Dict[str, Any]]:
    """
    Lê um bundle

    Returns:
        (posterior, stack ou None, meta)

    Raises:
        CorruptPayloadError: bundle sem os mapas obrigatórios
    """
    content = read_tnsr(path)
    meta = content.meta
    if meta.get('format') != FORMAT:
        raise CorruptPayloadError(f"Arquivo não é um bundle de posterior: {meta.get('format')}", str(path))

    try:
        fields = {name: content[name] for name in meta['maps']}
        posterior = Posterior(likelihood=Likelihood(meta['likelihood']), **fields)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptPayloadError(f"Bundle de posterior incompleto: {e}", str(path)) from e

    stack = None
    if f'{STACK_PREFIX}mu2' in content:
        stack = SampleStack(
            mu1=content.maps.get(f'{STACK_PREFIX}mu1'),
            mu2=content[f'{STACK_PREFIX}mu2'],
            sigma=content[f'{STACK_PREFIX}sigma'],
            seeds=tuple(int(s) for s in meta.get('seeds', [])),
            loss_kind=LossKind(meta['loss_kind']) if meta.get('loss_kind') else None,
        )
    return posterior, stack, meta

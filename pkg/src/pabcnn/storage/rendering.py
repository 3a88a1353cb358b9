"""
Renderizações 8 bits em escala dB (PGM)
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from ..errors import StorageError

logger = logging.getLogger(__name__)

DEFAULT_DYNAMIC_RANGE_DB = 50.0


def render_db(image: np.ndarray, peak: Optional[float] = None,
              dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB) -> np.ndarray:
    """
    20 log10(|x| / peak) limitado a [-dynamic_range_db, 0] e mapeado em 0..255

    Sem peak, usa o pico da própria imagem. Imagem nula vira preto.
    """
    magnitude = np.abs(np.asarray(image, dtype=np.float64))
    peak = float(magnitude.max()) if peak is None else float(peak)
    if peak <= 0:
        return np.zeros(magnitude.shape, dtype=np.uint8)
    with np.errstate(divide='ignore'):
        db = 20 * np.log10(magnitude / peak)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return np.round((db + dynamic_range_db) / dynamic_range_db * 255).astype(np.uint8)


def write_pgm(path: Union[str, Path], image: np.ndarray, peak: Optional[float] = None,
              dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB) -> Path:
    """Grava a renderização dB como PGM binário"""
    path = Path(path)
    pixels = render_db(image, peak, dynamic_range_db)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(path, format='PPM')
    except OSError as e:
        raise StorageError(f"Falha ao gravar PGM ({e})", str(path)) from e
    logger.debug(f"PGM gravado: {path}")
    return path

"""
Processamento de confiança por incerteza relativa (SD/M)
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigMismatchError, ThresholdSweepError
from .uncertainty import Posterior

logger = logging.getLogger(__name__)


class ConfidenceParams(BaseModel):
    """Limiares do processamento de confiança"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    soft_threshold: float = Field(0.05, gt=0)
    seg_rel_threshold: float = Field(1.0, gt=0)
    img_rel_threshold: float = Field(0.9, ge=0)
    seg_round_threshold: float = Field(0.5, gt=0)
    sweep_thresholds: Tuple[float, ...] = (0.9, 0.7, 0.5, 0.3)

    @model_validator(mode='after')
    def _soft_below_round(self):
        if self.soft_threshold >= self.seg_round_threshold:
            raise ValueError("soft_threshold deve ser menor que seg_round_threshold")
        return self


def relative_uncertainty(mean_map: np.ndarray, unc_map: np.ndarray,
                         support_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """unc/mean onde o suporte vale 1 e mean > 0; NaN no resto"""
    mean_map = np.asarray(mean_map, dtype=np.float64)
    unc_map = np.asarray(unc_map, dtype=np.float64)
    defined = mean_map > 0
    if support_mask is not None:
        defined &= np.asarray(support_mask).astype(bool)
    ratio = np.full(mean_map.shape, np.nan)
    ratio[defined] = unc_map[defined] / mean_map[defined]
    return ratio


def confident_segmentation(posterior: Posterior, params: ConfidenceParams = ConfidenceParams()) -> np.ndarray:
    """1 onde seg_mean > soft, SD/M < seg_rel e seg_mean > 0.5"""
    if not posterior.has_segmentation:
        raise ConfigMismatchError("Posterior sem mapas de segmentação (cabeça laplacian-only)")
    support = posterior.seg_mean > params.soft_threshold
    rel = relative_uncertainty(posterior.seg_mean, posterior.seg_unc, support)
    with np.errstate(invalid='ignore'):
        keep = support & (rel < params.seg_rel_threshold) & (posterior.seg_mean > params.seg_round_threshold)
    return keep.astype(np.uint8)


def confident_image(posterior: Posterior, conf_seg: np.ndarray,
                    params: ConfidenceParams = ConfidenceParams()) -> np.ndarray:
    """Média mascarada mantida onde SD/M <= img_rel; zero no resto"""
    mask = np.asarray(conf_seg, dtype=np.float64)
    masked_mean = posterior.img_mean * mask
    if math.isinf(params.img_rel_threshold):
        return masked_mean
    masked_unc = posterior.img_unc * mask
    rel = relative_uncertainty(masked_mean, masked_unc, mask > 0)
    with np.errstate(invalid='ignore'):
        keep = rel <= params.img_rel_threshold
    return np.where(keep, masked_mean, 0.0)


def threshold_sweep(posterior: Posterior, params: ConfidenceParams = ConfidenceParams(),
                    thresholds: Optional[Sequence[float]] = None) -> List[np.ndarray]:
    """
    Uma imagem confiável por limiar, em ordem decrescente de limiar

    Raises:
        ThresholdSweepError: lista vazia ou fora de ordem decrescente
    """
    thresholds = list(params.sweep_thresholds if thresholds is None else thresholds)
    if not thresholds:
        raise ThresholdSweepError("Varredura sem limiares")
    if any(b > a for a, b in zip(thresholds, thresholds[1:])):
        raise ThresholdSweepError(f"Limiares devem estar em ordem decrescente: {thresholds}")

    conf_seg = confident_segmentation(posterior, params)
    images = [confident_image(posterior, conf_seg, params.model_copy(update={'img_rel_threshold': t}))
              for t in thresholds]
    logger.info("Varredura: " + ', '.join(
        f"{t:g} -> {int(np.count_nonzero(img))} px" for t, img in zip(thresholds, images)))
    return images

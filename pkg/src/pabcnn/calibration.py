"""
Qualidade das incertezas e métricas de imagem

- Mapa de credibilidade: massa de probabilidade preditiva em [mu - eps, mu + eps]
- Diagrama de confiabilidade: ACC x Cred por bins, com CC e inclinação
- Cobertura em 2 sigma (geral e na faixa em torno de metade do máximo)
- PSNR, acurácia de segmentação e CC incerteza x erro de segmentação

Avaliações de credibilidade, confiabilidade e cobertura usam apenas os
pixels com segmentação final = 1.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats
from skimage.metrics import peak_signal_noise_ratio

from .errors import EmptyEvaluationError, InvalidScaleError
from .losses import Likelihood
from .uncertainty import Posterior, SampleStack
from .utils.data_validators import ArrayValidator
from .utils.safe_print import SafeLogger

logger = SafeLogger(logging.getLogger(__name__))

BAND_HALF_WIDTH = 0.05


class CalibrationConfig(BaseModel):
    """Parâmetros das avaliações de calibração"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    bins: int = Field(10, ge=1)
    eps_factor: float = Field(0.2, gt=0)
    pooled: bool = True


# ============================================================================
# CDFs
# ============================================================================

def _check_scale(sigma) -> None:
    if np.any(np.asarray(sigma) <= 0):
        raise InvalidScaleError("Escala sigma deve ser positiva")


def laplace_cdf(a, mu, sigma):
    """F(a) = 1/2 exp((a-mu)/sigma) abaixo da mediana, 1 - 1/2 exp(-(a-mu)/sigma) acima"""
    _check_scale(sigma)
    z = (np.asarray(a, dtype=np.float64) - mu) / sigma
    tail = 0.5 * np.exp(-np.abs(z))
    result = np.where(z < 0, tail, 1.0 - tail)
    return float(result) if result.ndim == 0 else result


def gaussian_cdf(a, mu, sigma):
    _check_scale(sigma)
    result = stats.norm.cdf(a, loc=mu, scale=sigma)
    return float(result) if np.ndim(result) == 0 else result


# ============================================================================
# Credibilidade
# ============================================================================

@dataclass
class CredibilityMap:
    """Credibilidade por pixel; NaN fora do conjunto avaliado"""
    values: np.ndarray
    evaluated: np.ndarray
    eps: np.ndarray
    excluded_count: int

    @property
    def evaluated_count(self) -> int:
        return int(self.evaluated.sum())


def evaluation_mask(posterior: Posterior) -> np.ndarray:
    """Pixels com segmentação final = 1 (todos, para cabeças laplacian-only)"""
    if posterior.final_seg is not None:
        return posterior.final_seg.astype(bool)
    return np.ones(posterior.img_mean.shape, dtype=bool)


def credibility_map(stack: SampleStack, posterior: Posterior, eps_factor: float = 0.2) -> CredibilityMap:
    """
    c_m = (1/K) sum_k [F^k(mu + eps_m) - F^k(mu - eps_m)], eps_m = eps_factor * mu_m

    Pixels avaliados com média <= 0 são excluídos e contados em excluded_count.
    """
    cdf = laplace_cdf if posterior.likelihood is Likelihood.LAPLACE else gaussian_cdf
    region = evaluation_mask(posterior)
    mu = posterior.img_mean
    positive = mu > 0
    evaluated = region & positive
    excluded = int(np.count_nonzero(region & ~positive))
    if excluded:
        logger.debug(f"{excluded} pixels com μ <= 0 excluídos do mapa de credibilidade")

    eps = np.where(evaluated, eps_factor * mu, 0.0)
    values = np.full(mu.shape, np.nan)
    if evaluated.any():
        centers = mu[evaluated]
        widths = eps[evaluated]
        mu_k = stack.mu2[:, evaluated]
        sigma_k = stack.sigma[:, evaluated]
        mass = cdf(centers + widths, mu_k, sigma_k) - cdf(centers - widths, mu_k, sigma_k)
        values[evaluated] = np.clip(mass.mean(axis=0), 0.0, 1.0)
    return CredibilityMap(values=values, evaluated=evaluated, eps=eps, excluded_count=excluded)


# ============================================================================
# Diagrama de confiabilidade
# ============================================================================

@dataclass
class ReliabilityDiagram:
    bins: int
    cred: np.ndarray     # (H,), NaN em bins vazios
    acc: np.ndarray      # (H,), NaN em bins vazios
    counts: np.ndarray   # (H,)
    cc: Optional[float]
    slope: Optional[float]

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    def to_frame(self) -> pd.DataFrame:
        edges = np.arange(self.bins + 1) / self.bins
        return pd.DataFrame({
            'bin_low': edges[:-1], 'bin_high': edges[1:],
            'cred': self.cred, 'acc': self.acc, 'count': self.counts,
        })

    def to_dict(self) -> Dict:
        return {
            'bins': self.bins,
            'cred': [None if math.isnan(v) else float(v) for v in self.cred],
            'acc': [None if math.isnan(v) else float(v) for v in self.acc],
            'counts': [int(c) for c in self.counts],
            'cc': self.cc,
            'slope': self.slope,
        }


def bin_index(cred: np.ndarray, bins: int) -> np.ndarray:
    """Bin h (0-based) tal que c em ((h)/H, (h+1)/H]; c = 0 cai no primeiro"""
    return np.clip(np.ceil(cred * bins).astype(int), 1, bins) - 1


def _fit(cred: np.ndarray, acc: np.ndarray):
    """(cc, slope); ACC constante tem inclinação 0 mas Pearson indefinido"""
    if cred.size < 2 or np.ptp(cred) == 0:
        return None, None
    if np.ptp(acc) == 0:
        return None, 0.0
    cc = float(stats.pearsonr(cred, acc)[0])
    slope = float(stats.linregress(cred, acc).slope)
    return cc, slope


def diagram_from_pixels(cred: np.ndarray, hits: np.ndarray, bins: int) -> ReliabilityDiagram:
    """Diagrama a partir de credibilidades e acertos (|y - mu| <= eps) por pixel"""
    index = bin_index(cred, bins)
    counts = np.bincount(index, minlength=bins)
    cred_sum = np.bincount(index, weights=cred, minlength=bins)
    hit_sum = np.bincount(index, weights=hits.astype(np.float64), minlength=bins)
    with np.errstate(invalid='ignore', divide='ignore'):
        cred_mean = np.where(counts > 0, cred_sum / counts, np.nan)
        acc_mean = np.where(counts > 0, hit_sum / counts, np.nan)
    occupied = counts > 0
    cc, slope = _fit(cred_mean[occupied], acc_mean[occupied])
    if cc is None:
        logger.debug(f"CC indefinido: {int(occupied.sum())} bins ocupados, inclinação {slope}")
    return ReliabilityDiagram(bins=bins, cred=cred_mean, acc=acc_mean, counts=counts, cc=cc, slope=slope)


def _pixel_hits(cred: CredibilityMap, posterior: Posterior, ground_truth: np.ndarray):
    ArrayValidator.require_same_shape({'credibility': cred.values, 'ground_truth': ground_truth})
    mask = cred.evaluated
    hits = np.abs(ground_truth[mask] - posterior.img_mean[mask]) <= cred.eps[mask]
    return cred.values[mask], hits


def reliability_diagram(cred: CredibilityMap, posterior: Posterior, ground_truth: np.ndarray,
                        bins: int = 10) -> ReliabilityDiagram:
    """
    ACC(B_h) = fração de pixels do bin com |y - mu| <= eps; Cred(B_h) = média de c

    Raises:
        EmptyEvaluationError: nenhum pixel avaliado
    """
    values, hits = _pixel_hits(cred, posterior, np.asarray(ground_truth, dtype=np.float64))
    if values.size == 0:
        raise EmptyEvaluationError("Nenhum pixel avaliado para o diagrama de confiabilidade")
    return diagram_from_pixels(values, hits, bins)


def pooled_reliability(items: Sequence, bins: int = 10) -> ReliabilityDiagram:
    """
    Diagrama com pixels de todas as imagens juntos

    Args:
        items: sequência de (CredibilityMap, Posterior, ground truth)
    """
    all_values, all_hits = [], []
    for cred, posterior, truth in items:
        values, hits = _pixel_hits(cred, posterior, np.asarray(truth, dtype=np.float64))
        all_values.append(values)
        all_hits.append(hits)
    if not all_values or sum(v.size for v in all_values) == 0:
        raise EmptyEvaluationError("Nenhum pixel avaliado no corpus")
    return diagram_from_pixels(np.concatenate(all_values), np.concatenate(all_hits), bins)


def per_image_reliability(diagrams: Sequence[ReliabilityDiagram]) -> Dict[str, Optional[float]]:
    """Média e desvio de CC e inclinação entre diagramas por imagem (indefinidos ignorados)"""
    result = {}
    for key in ('cc', 'slope'):
        values = np.array([getattr(d, key) for d in diagrams if getattr(d, key) is not None])
        result[f'{key}_mean'] = float(values.mean()) if values.size else None
        result[f'{key}_std'] = float(values.std()) if values.size else None
        result[f'{key}_n'] = int(values.size)
    return result


# ============================================================================
# Cobertura
# ============================================================================

@dataclass
class CoverageReport:
    overall: float
    band: Optional[float]
    evaluated: int
    band_count: int
    band_center: float

    def to_dict(self) -> Dict:
        return {'overall': self.overall, 'band': self.band, 'evaluated': self.evaluated,
                'band_count': self.band_count, 'band_center': self.band_center}


def coverage_report(posterior: Posterior, ground_truth: np.ndarray) -> CoverageReport:
    """
    Fração de pixels com |y - mu| <= 2 sigma, no geral e na faixa
    2 sigma em [0.95, 1.05] x (metade do maior 2 sigma)

    Raises:
        EmptyEvaluationError: segmentação final vazia
    """
    truth = np.asarray(ground_truth, dtype=np.float64)
    ArrayValidator.require_same_shape({'img_mean': posterior.img_mean, 'ground_truth': truth})
    mask = evaluation_mask(posterior)
    if not mask.any():
        raise EmptyEvaluationError("Cobertura sem pixels avaliados")

    two_sigma = 2 * posterior.img_unc[mask]
    inside = np.abs(truth[mask] - posterior.img_mean[mask]) <= two_sigma
    center = 0.5 * float(two_sigma.max())
    in_band = np.abs(two_sigma - center) <= BAND_HALF_WIDTH * center
    band = float(inside[in_band].mean()) if in_band.any() else None
    return CoverageReport(overall=float(inside.mean()), band=band, evaluated=int(mask.sum()),
                          band_count=int(in_band.sum()), band_center=center)


def absolute_error_scatter(posterior: Posterior, ground_truth: np.ndarray) -> pd.DataFrame:
    """Pares (2 sigma, |erro|) dos pixels avaliados"""
    truth = np.asarray(ground_truth, dtype=np.float64)
    mask = evaluation_mask(posterior)
    return pd.DataFrame({
        'two_sigma': 2 * posterior.img_unc[mask],
        'abs_error': np.abs(truth[mask] - posterior.img_mean[mask]),
    })


# ============================================================================
# Métricas de imagem e segmentação
# ============================================================================

def psnr(reconstruction: np.ndarray, ground_truth: np.ndarray, peak: float) -> float:
    """10 log10(peak^2 / MSE); inf quando MSE = 0"""
    if peak <= 0:
        raise ValueError(f"peak deve ser positivo: {peak}")
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    truth = np.asarray(ground_truth, dtype=np.float64)
    ArrayValidator.require_same_shape({'reconstruction': reconstruction, 'ground_truth': truth})
    if np.array_equal(reconstruction, truth):
        return math.inf
    return float(peak_signal_noise_ratio(truth, reconstruction, data_range=peak))


def seg_accuracy(final_seg: np.ndarray, ground_truth_seg: np.ndarray) -> float:
    final_seg = np.asarray(final_seg).astype(bool)
    truth = np.asarray(ground_truth_seg).astype(bool)
    ArrayValidator.require_same_shape({'final_seg': final_seg, 'ground_truth_seg': truth})
    return float(np.mean(final_seg == truth))


def seg_uncertainty_cc(seg_unc: np.ndarray, final_seg: np.ndarray,
                       ground_truth_seg: np.ndarray) -> Optional[float]:
    """Pearson entre incerteza de segmentação e |final_seg - verdade|; None sem variância"""
    error = np.abs(np.asarray(final_seg, dtype=np.float64) - np.asarray(ground_truth_seg, dtype=np.float64))
    unc = np.asarray(seg_unc, dtype=np.float64)
    ArrayValidator.require_same_shape({'seg_unc': unc, 'error': error})
    if np.ptp(unc) == 0 or np.ptp(error) == 0:
        return None
    return float(stats.pearsonr(unc.ravel(), error.ravel())[0])


# ============================================================================
# Resumo estilo tabela
# ============================================================================

def _mean_std(values) -> Optional[str]:
    values = np.array([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    if values.size == 0:
        return None
    return f"{values.mean():.4f} ({values.std():.4f})"


def summarize_metrics(per_image: pd.DataFrame, pooled: Optional[ReliabilityDiagram] = None) -> Dict[str, Optional[str]]:
    """
    Linhas "média (desvio)" por métrica

    Com um diagrama agregado, CC e inclinação vêm dele (sem desvio);
    caso contrário, da média dos diagramas por imagem.
    """
    columns = {
        'Segmentation Accuracy': 'seg_accuracy',
        'Image PSNR (dB)': 'psnr',
        'Segmentation CC': 'seg_cc',
        'ACC vs Cred CC': 'cc',
        'ACC vs Cred Slope': 'slope',
        'DAS PSNR, pico do GT (dB)': 'das_psnr_gt_peak',
    }
    summary: Dict[str, Optional[str]] = {}
    for row, column in columns.items():
        if column not in per_image:
            continue
        summary[row] = _mean_std(per_image[column].tolist())
    if pooled is not None:
        summary['ACC vs Cred CC'] = None if pooled.cc is None else f"{pooled.cc:.4f}"
        summary['ACC vs Cred Slope'] = None if pooled.slope is None else f"{pooled.slope:.4f}"
    return summary

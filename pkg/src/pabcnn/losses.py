"""
Verossimilhanças negativas: Bernoulli + Laplace, só Laplace, Bernoulli + Gauss

As funções públicas recebem mapas já transformados (mu1, mu2, sigma) e
devolvem a soma sobre pixels. `head_loss_and_grad` trabalha nos logits da
cabeça da rede e é o caminho usado no treino.
"""

import math
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .errors import ConfigMismatchError
from .utils.data_validators import ArrayValidator

MU1_CLAMP = 1e-7
LOGIT_CLAMP = math.log((1 - MU1_CLAMP) / MU1_CLAMP)
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class Likelihood(Enum):
    LAPLACE = 'laplace'
    GAUSS = 'gauss'


class LossKind(Enum):
    """Perda de treino"""
    HYBRID_LAPLACE = 'hybrid_laplace'
    LAPLACE_ONLY = 'laplace_only'
    HYBRID_GAUSS = 'hybrid_gauss'

    @property
    def is_hybrid(self) -> bool:
        return self is not LossKind.LAPLACE_ONLY

    @property
    def head_channels(self) -> int:
        return 3 if self.is_hybrid else 2

    @property
    def likelihood(self) -> Likelihood:
        return Likelihood.GAUSS if self is LossKind.HYBRID_GAUSS else Likelihood.LAPLACE


def _check(arrays: dict) -> None:
    ArrayValidator.require_same_shape(arrays)
    for name, array in arrays.items():
        ArrayValidator.require_finite(name, np.asarray(array, dtype=np.float64))


def bernoulli_nll(mu1, y_seg) -> float:
    """sum[(y-1) log(1-mu1) - y log(mu1)], mu1 limitado a [1e-7, 1-1e-7]"""
    mu1 = np.clip(np.asarray(mu1, dtype=np.float64), MU1_CLAMP, 1 - MU1_CLAMP)
    y = np.asarray(y_seg, dtype=np.float64)
    return float(np.sum((y - 1) * np.log1p(-mu1) - y * np.log(mu1)))


def laplace_nll(mu2, sigma, y_img, mask=None) -> float:
    """sum mask * (|y - mu2|/sigma + log(2 sigma))"""
    mu2, sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu2, sigma, y_img))
    terms = np.abs(y - mu2) / sigma + np.log(2 * sigma)
    if mask is not None:
        terms = terms * np.asarray(mask, dtype=np.float64)
    return float(np.sum(terms))


def gaussian_nll(mu2, sigma, y_img, mask=None) -> float:
    """sum mask * ((y - mu2)^2 / (2 sigma^2) + log(sqrt(2 pi) sigma))"""
    mu2, sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu2, sigma, y_img))
    terms = (y - mu2) ** 2 / (2 * sigma ** 2) + LOG_SQRT_2PI + np.log(sigma)
    if mask is not None:
        terms = terms * np.asarray(mask, dtype=np.float64)
    return float(np.sum(terms))


def hybrid_laplace_loss(mu1, mu2, sigma, y_seg, y_img) -> float:
    """Bernoulli em todos os pixels + Laplace só onde y_seg = 1"""
    _check({'mu1': mu1, 'mu2': mu2, 'sigma': sigma, 'y_seg': y_seg, 'y_img': y_img})
    return bernoulli_nll(mu1, y_seg) + laplace_nll(mu2, sigma, y_img, mask=y_seg)


def laplace_only_loss(mu2, sigma, y_img) -> float:
    """Laplace em todos os pixels, fundo incluído"""
    _check({'mu2': mu2, 'sigma': sigma, 'y_img': y_img})
    return laplace_nll(mu2, sigma, y_img)


def hybrid_gauss_loss(mu1, mu2, sigma, y_seg, y_img) -> float:
    """Bernoulli em todos os pixels + Gauss só onde y_seg = 1"""
    _check({'mu1': mu1, 'mu2': mu2, 'sigma': sigma, 'y_seg': y_seg, 'y_img': y_img})
    return bernoulli_nll(mu1, y_seg) + gaussian_nll(mu2, sigma, y_img, mask=y_seg)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def head_loss_and_grad(kind: LossKind, logits: np.ndarray, y_seg: Optional[np.ndarray],
                       y_img: np.ndarray, sigma_floor: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Perda por imagem e gradiente em relação aos logits da cabeça

    Args:
        kind: Tipo de perda
        logits: (N, C, H, W); C = 3 (z1, z2, z3) ou 2 (z2, z3)
        y_seg: (N, H, W) binário; ignorado em laplace_only
        y_img: (N, H, W)
        sigma_floor: piso somado ao softplus de z3

    Returns:
        (perda por imagem (N,), d(soma das perdas)/d logits (N, C, H, W))
    """
    if logits.shape[1] != kind.head_channels:
        raise ConfigMismatchError(
            f"{kind.value} exige {kind.head_channels} canais de cabeça, recebeu {logits.shape[1]}"
        )
    grad = np.zeros_like(logits)
    per_image = np.zeros(logits.shape[0], dtype=logits.dtype)

    if kind.is_hybrid:
        y = y_seg.astype(logits.dtype)
        z1 = np.clip(logits[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
        inside = np.abs(logits[:, 0]) < LOGIT_CLAMP
        # -y log(mu1) - (1-y) log(1-mu1) = softplus(z1) - y z1
        per_image += np.sum(_softplus(z1) - y * z1, axis=(1, 2))
        grad[:, 0] = (expit(z1) - y) * inside
        z2, z3 = logits[:, 1], logits[:, 2]
        mask = y
        i_mu, i_sigma = 1, 2
    else:
        z2, z3 = logits[:, 0], logits[:, 1]
        mask = np.ones_like(z2)
        i_mu, i_sigma = 0, 1

    sigma = _softplus(z3) + sigma_floor
    residual = y_img - z2

    if kind.likelihood is Likelihood.LAPLACE:
        per_image += np.sum(mask * (np.abs(residual) / sigma + np.log(2 * sigma)), axis=(1, 2))
        d_mu = -np.sign(residual) / sigma * mask
        d_sigma = (1 / sigma - np.abs(residual) / sigma ** 2) * mask
    else:
        per_image += np.sum(mask * (residual ** 2 / (2 * sigma ** 2) + LOG_SQRT_2PI + np.log(sigma)),
                            axis=(1, 2))
        d_mu = -residual / sigma ** 2 * mask
        d_sigma = (1 / sigma - residual ** 2 / sigma ** 3) * mask

    grad[:, i_mu] = d_mu
    grad[:, i_sigma] = d_sigma * expit(z3)
    return per_image, grad

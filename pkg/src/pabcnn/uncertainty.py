"""
Predição por Monte Carlo dropout e agregação das incertezas

K passes com dropout ativo e estatísticas de BN acumuladas. A agregação
calcula médias e decompõe a incerteza total em parte de dados (espalhamento
de cada distribuição predita) e parte de modelo (espalhamento das médias
entre os passes).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ConfigMismatchError
from .losses import Likelihood, LossKind
from .nn.layers import Mode
from .nn.unet import Checkpoint, HeadKind, forward
from .simulation.acoustics import MCVolume, normalize_volume

logger = logging.getLogger(__name__)

SEG_THRESHOLD = 0.5


class PredictConfig(BaseModel):
    """Parâmetros da predição MC"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    passes: int = Field(50, ge=1)
    seed: int = 0


@dataclass(frozen=True)
class SampleStack:
    """Saídas dos K passes, (K, H, W) cada; mu1 é None para cabeças laplacian-only"""
    mu1: Optional[np.ndarray]
    mu2: np.ndarray
    sigma: np.ndarray
    seeds: tuple
    loss_kind: Optional[LossKind] = None

    @property
    def passes(self) -> int:
        return self.mu2.shape[0]

    @property
    def shape(self):
        return self.mu2.shape[1:]

    def permuted(self, order) -> 'SampleStack':
        order = np.asarray(order)
        return SampleStack(
            mu1=None if self.mu1 is None else self.mu1[order],
            mu2=self.mu2[order], sigma=self.sigma[order],
            seeds=tuple(self.seeds[i] for i in order), loss_kind=self.loss_kind,
        )


@dataclass(frozen=True)
class Posterior:
    """Médias, incertezas (total, dados, modelo) e mapas mascarados"""
    img_mean: np.ndarray
    img_unc: np.ndarray
    img_data: np.ndarray
    img_model: np.ndarray
    masked_img_mean: np.ndarray
    masked_img_unc: np.ndarray
    likelihood: Likelihood
    seg_mean: Optional[np.ndarray] = None
    seg_unc: Optional[np.ndarray] = None
    seg_data: Optional[np.ndarray] = None
    seg_model: Optional[np.ndarray] = None
    final_seg: Optional[np.ndarray] = None

    @property
    def has_segmentation(self) -> bool:
        return self.seg_mean is not None

    def maps(self) -> Dict[str, np.ndarray]:
        """Mapas presentes, por nome"""
        names = ('seg_mean', 'seg_unc', 'seg_data', 'seg_model', 'final_seg',
                 'img_mean', 'img_unc', 'img_data', 'img_model',
                 'masked_img_mean', 'masked_img_unc')
        return {name: getattr(self, name) for name in names if getattr(self, name) is not None}


def pass_seed(seed: int, k: int) -> int:
    """Seed do passe k: primeira palavra de 64 bits de SeedSequence([seed, k])"""
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def _as_input(x: Union[MCVolume, np.ndarray]) -> np.ndarray:
    if isinstance(x, MCVolume):
        return normalize_volume(x)[None]
    x = np.asarray(x)
    return x[None] if x.ndim == 3 else x


def predict_mc(ckpt: Checkpoint, x: Union[MCVolume, np.ndarray], passes: int, seed: int,
               expected_kind: Optional[LossKind] = None, progress: bool = False) -> SampleStack:
    """
    K forwards em modo mc_predict, cada um com seu próprio seed de máscaras

    Args:
        ckpt: Checkpoint treinado
        x: MCVolume (normalizado aqui) ou array (C, H, W) já normalizado
        passes: K >= 1
        seed: Seed base; o passe k usa pass_seed(seed, k)
        expected_kind: Perda com que o chamador vai agregar; validada contra o checkpoint

    Raises:
        ConfigMismatchError: perda esperada incompatível com o checkpoint
        ValueError: passes < 1
    """
    if passes < 1:
        raise ValueError(f"passes deve ser >= 1, recebeu {passes}")
    kind = ckpt.loss_kind
    if expected_kind is not None:
        expected_kind = LossKind(expected_kind)
        if kind is not None and kind is not expected_kind:
            raise ConfigMismatchError(
                f"Checkpoint treinado com {kind.value}, predição pedida para {expected_kind.value}"
            )
        if (ckpt.net_config.head_kind is HeadKind.HYBRID) != expected_kind.is_hybrid:
            raise ConfigMismatchError(
                f"Cabeça {ckpt.net_config.head_kind.value} incompatível com {expected_kind.value}"
            )
        kind = expected_kind

    inputs = _as_input(x)
    if inputs.shape[0] != 1:
        raise ValueError("predict_mc recebe uma única entrada por chamada")

    seeds = tuple(pass_seed(seed, k) for k in range(passes))
    iterator = seeds
    if progress:
        from tqdm import tqdm
        iterator = tqdm(seeds, desc='Passes MC', unit='passe', leave=False)

    mu1, mu2, sigma = [], [], []
    for s in iterator:
        maps = forward(ckpt, inputs, mode=Mode.MC_PREDICT, seed=s)
        if maps.mu1 is not None:
            mu1.append(maps.mu1[0])
        mu2.append(maps.mu2[0])
        sigma.append(maps.sigma[0])

    return SampleStack(
        mu1=np.stack(mu1).astype(np.float64) if mu1 else None,
        mu2=np.stack(mu2).astype(np.float64),
        sigma=np.stack(sigma).astype(np.float64),
        seeds=seeds,
        loss_kind=kind,
    )


def _decompose(data_var: np.ndarray, means: np.ndarray):
    center = means.mean(axis=0)
    model_var = np.mean((means - center) ** 2, axis=0)
    data = np.sqrt(data_var)
    model = np.sqrt(model_var)
    return center, np.sqrt(data_var + model_var), data, model


def aggregate(stack: SampleStack, kind: Union[Likelihood, str, LossKind]) -> Posterior:
    """
    Médias e incertezas sobre os K passes

    Segmentação: variância de dados mean_k[mu1 (1 - mu1)], de modelo
    mean_k[(mu1 - média)^2]. Imagem: variância de dados 2 sigma^2 (Laplace)
    ou sigma^2 (Gauss), de modelo mean_k[(mu2 - média)^2]. A imagem
    mascarada usa a média truncada em zero vezes a segmentação final.

    Raises:
        ConfigMismatchError: tipo incompatível com a perda que gerou o stack
    """
    if isinstance(kind, LossKind):
        if stack.loss_kind is not None and stack.loss_kind is not kind:
            raise ConfigMismatchError(
                f"Stack gerado com {stack.loss_kind.value}, agregação pedida para {kind.value}"
            )
        kind = kind.likelihood
    kind = Likelihood(kind)
    if stack.loss_kind is not None and stack.loss_kind.likelihood is not kind:
        raise ConfigMismatchError(
            f"Stack gerado com {stack.loss_kind.value}, incompatível com verossimilhança {kind.value}"
        )
    if stack.passes < 1:
        raise ValueError("Stack vazio")

    factor = 2.0 if kind is Likelihood.LAPLACE else 1.0
    img_mean, img_unc, img_data, img_model = _decompose(
        np.mean(factor * stack.sigma ** 2, axis=0), stack.mu2)

    if stack.mu1 is None:
        return Posterior(img_mean=img_mean, img_unc=img_unc, img_data=img_data, img_model=img_model,
                         masked_img_mean=img_mean.copy(), masked_img_unc=img_unc.copy(),
                         likelihood=kind)

    seg_mean, seg_unc, seg_data, seg_model = _decompose(
        np.mean(stack.mu1 * (1 - stack.mu1), axis=0), stack.mu1)
    final_seg = (seg_mean > SEG_THRESHOLD).astype(np.uint8)
    return Posterior(
        img_mean=img_mean, img_unc=img_unc, img_data=img_data, img_model=img_model,
        masked_img_mean=np.clip(img_mean, 0.0, None) * final_seg,
        masked_img_unc=img_unc * final_seg,
        likelihood=kind,
        seg_mean=seg_mean, seg_unc=seg_unc, seg_data=seg_data, seg_model=seg_model,
        final_seg=final_seg,
    )

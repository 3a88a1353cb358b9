"""
Treinamento com Adam, penalidade L2 e early stopping pela perda de validação
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DatasetSizeError, TrainingDivergedError
from ..losses import LossKind, head_loss_and_grad
from ..utils.safe_print import SafeLogger
from .layers import Conv2d, ForwardContext, Mode
from .optim import Adam, AdamState
from .unet import Checkpoint, check_input, check_pairing

logger = SafeLogger(logging.getLogger(__name__))


class TrainConfig(BaseModel):
    """Hiperparâmetros de treino"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    learning_rate: float = Field(5e-4, gt=0)
    batch_size: int = Field(8, ge=1)
    max_epochs: int = Field(1000, ge=1)
    patience: int = Field(50, ge=1)
    seed: int = 0
    loss_kind: LossKind = LossKind.HYBRID_LAPLACE

    @model_validator(mode='after')
    def _patience_below_max(self):
        if self.patience >= self.max_epochs:
            raise ValueError(f"patience ({self.patience}) deve ser menor que max_epochs ({self.max_epochs})")
        return self


@dataclass
class TrainingData:
    """Entradas normalizadas e alvos, com índices de treino e validação"""
    inputs: np.ndarray      # (N, C, H, W)
    seg: np.ndarray         # (N, H, W)
    img: np.ndarray         # (N, H, W)
    train_idx: np.ndarray
    val_idx: np.ndarray

    def batch(self, idx: np.ndarray, dtype=np.float64) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.inputs[idx].astype(dtype),
                self.seg[idx].astype(dtype),
                self.img[idx].astype(dtype))


@dataclass
class TrainingResult:
    checkpoint: Checkpoint
    history: pd.DataFrame
    stopped_epoch: int


def l2_penalty(ckpt: Checkpoint) -> float:
    """l2_factor * soma dos quadrados de kernels e biases de convolução"""
    factor = ckpt.net_config.l2_factor
    if factor == 0:
        return 0.0
    return factor * float(sum(np.sum(ckpt.params[k] ** 2) for k in ckpt.network().l2_keys()))


def batch_objective(ckpt: Checkpoint, x: np.ndarray, seg: np.ndarray, img: np.ndarray,
                    loss_kind: LossKind, ctx: ForwardContext, backward: bool = True) -> Tuple[float, float]:
    """
    Perda de dados (média por imagem da soma sobre pixels) e penalidade L2

    Com backward=True os gradientes do total ficam acumulados nas camadas.
    """
    net = ckpt.network()
    cfg = ckpt.net_config
    net.zero_grad()
    logits = net.forward(x, ctx)
    per_image, dlogits = head_loss_and_grad(loss_kind, logits, seg, img, cfg.sigma_floor)
    data_loss = float(per_image.mean())

    if backward:
        net.backward(dlogits / x.shape[0])
        if cfg.l2_factor:
            for leaf in net.leaf_layers():
                if isinstance(leaf, Conv2d):
                    for key in ('weight', 'bias'):
                        leaf.grads[key] += 2 * cfg.l2_factor * leaf.params[key]
    return data_loss, l2_penalty(ckpt)


def evaluate_loss(ckpt: Checkpoint, data: TrainingData, indices: np.ndarray,
                  loss_kind: LossKind, batch_size: int) -> float:
    """Perda de validação: modo determinístico, média por imagem, mais L2"""
    ctx = ForwardContext(mode=Mode.DETERMINISTIC)
    dtype = ckpt.net_config.dtype
    total = 0.0
    for start in range(0, len(indices), batch_size):
        idx = indices[start:start + batch_size]
        x, seg, img = data.batch(idx, dtype)
        loss, _ = batch_objective(ckpt, x, seg, img, loss_kind, ctx, backward=False)
        total += loss * len(idx)
    return total / len(indices) + l2_penalty(ckpt)


def train(ckpt: Checkpoint, data: TrainingData, loss_kind, tcfg: TrainConfig,
          progress: bool = False) -> TrainingResult:
    """
    Treina até esgotar a paciência ou max_epochs

    A época 0 do histórico registra a perda de validação dos pesos iniciais.
    Devolve uma cópia do checkpoint com a menor perda de validação.

    Raises:
        ConfigMismatchError: perda incompatível com a cabeça
        DatasetSizeError: partição de treino ou validação vazia
        TrainingDivergedError: perda de treino não finita
    """
    loss_kind = LossKind(loss_kind)
    check_pairing(ckpt.net_config.head_kind, loss_kind)
    if len(data.train_idx) == 0 or len(data.val_idx) == 0:
        raise DatasetSizeError("Treino exige partições de treino e validação não vazias")
    check_input(ckpt, data.inputs[:1])

    work = ckpt.copy()
    work.loss_kind = loss_kind
    work.train_config = tcfg.model_dump(mode='json')
    optimizer = Adam(tcfg.learning_rate, state=work.optimizer or AdamState())
    work.optimizer = optimizer.state
    net = work.network()
    dtype = work.net_config.dtype
    rng = np.random.default_rng(tcfg.seed)

    best_loss = evaluate_loss(work, data, data.val_idx, loss_kind, tcfg.batch_size)
    work.best_val_loss = best_loss
    work.rng_state = rng.bit_generator.state
    best = work.copy()
    rows = [{'epoch': 0, 'train_loss': math.nan, 'val_loss': best_loss,
             'epoch_time_s': 0.0, 'is_best': True}]
    logger.info(f"Época 0: validação {best_loss:.4f} ({loss_kind.value})")

    epochs = range(1, tcfg.max_epochs + 1)
    if progress:
        from tqdm import tqdm
        epochs = tqdm(epochs, desc=f'Treino {loss_kind.value}', unit='época')

    since_best = 0
    epoch = 0
    for epoch in epochs:
        started = time.perf_counter()
        order = rng.permutation(data.train_idx)
        running = 0.0
        for batch_index, start in enumerate(range(0, len(order), tcfg.batch_size)):
            idx = order[start:start + tcfg.batch_size]
            x, seg, img = data.batch(idx, dtype)
            ctx = ForwardContext(mode=Mode.TRAIN, rng=rng, update_stats=True)
            data_loss, penalty = batch_objective(work, x, seg, img, loss_kind, ctx)
            total = data_loss + penalty
            if not math.isfinite(total):
                raise TrainingDivergedError(epoch, batch_index, total)
            optimizer.step(work.params, net.named_grads())
            running += total * len(idx)

        train_loss = running / len(order)
        val_loss = evaluate_loss(work, data, data.val_idx, loss_kind, tcfg.batch_size)
        improved = val_loss < best_loss
        if improved:
            best_loss = val_loss
            since_best = 0
            work.epoch = epoch
            work.best_val_loss = val_loss
            work.rng_state = rng.bit_generator.state
            best = work.copy()
        else:
            since_best += 1

        rows.append({'epoch': epoch, 'train_loss': train_loss, 'val_loss': val_loss,
                     'epoch_time_s': time.perf_counter() - started, 'is_best': improved})
        logger.debug(f"Época {epoch}: treino {train_loss:.4f}, validação {val_loss:.4f}")

        if since_best >= tcfg.patience:
            logger.info(f"Early stopping na época {epoch}: {tcfg.patience} épocas sem melhora")
            break

    logger.info(f"Melhor época {best.epoch}: validação {best.best_val_loss:.4f}")
    return TrainingResult(checkpoint=best, history=pd.DataFrame(rows), stopped_epoch=epoch)

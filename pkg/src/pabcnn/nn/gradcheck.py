"""
Checagem de gradientes por diferenças finitas centrais

Rede pequena em float64, modo de treino sem atualizar estatísticas e
máscaras de dropout congeladas após o primeiro forward. Índices cuja
perturbação atravessa uma quina (LeakyReLU ou |y - mu2|) são trocados por
outros e contados em `kinks_skipped`.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import NetworkConfigError
from ..losses import LossKind, head_loss_and_grad
from .layers import ForwardContext, LeakyReLU, Mode
from .training import batch_objective, l2_penalty
from .unet import HeadKind, NetConfig, build_network

logger = logging.getLogger(__name__)

MAX_PARAMETERS = 10_000
# Piso do denominador do erro relativo; abaixo dele o critério vira erro
# absoluto <= tolerância * piso (1e-7 com os padrões)
DENOMINATOR_FLOOR = 1e-3
MAX_RESAMPLES = 20


@dataclass
class TensorCheck:
    name: str
    layer: str
    max_rel_error: float
    n_checked: int


@dataclass
class GradientCheckReport:
    loss_kind: str
    tolerance: float
    max_rel_error: float
    passed: bool
    parameter_count: int
    kinks_skipped: int
    tensors: List[TensorCheck] = field(default_factory=list)

    def by_layer(self) -> Dict[str, float]:
        """Maior erro relativo por camada"""
        result: Dict[str, float] = {}
        for t in self.tensors:
            result[t.layer] = max(result.get(t.layer, 0.0), t.max_rel_error)
        return result

    def to_dict(self) -> Dict:
        return {
            'loss_kind': self.loss_kind,
            'tolerance': self.tolerance,
            'max_rel_error': self.max_rel_error,
            'passed': self.passed,
            'parameter_count': self.parameter_count,
            'kinks_skipped': self.kinks_skipped,
            'by_layer': self.by_layer(),
            'tensors': [asdict(t) for t in self.tensors],
        }


def relative_error(exact: float, numeric: float, floor: float = DENOMINATOR_FLOOR) -> float:
    """|a - n| / max(|a|, |n|, piso)"""
    return abs(exact - numeric) / max(abs(exact), abs(numeric), floor)


def gradient_check(cfg: NetConfig, loss_kind, tolerance: float = 1e-4,
                   samples_per_tensor: int = 3, step: float = 1e-5, seed: int = 0,
                   input_channels: int = 3, batch_size: int = 2,
                   grid_size: Optional[int] = None,
                   denominator_floor: float = DENOMINATOR_FLOOR) -> GradientCheckReport:
    """
    Compara gradientes analíticos com diferenças finitas centrais

    A cabeça é escolhida pela perda (3 canais para híbridas, 2 para
    laplace_only). Falhas são reportadas, nunca lançadas.

    Componentes com |g| abaixo de denominator_floor são julgadas pelo erro
    absoluto dividido pelo piso; com passo 1e-5 o arredondamento das
    diferenças finitas fica perto de 1e-10.

    Raises:
        NetworkConfigError: configuração acima de 10^4 parâmetros
    """
    loss_kind = LossKind(loss_kind)
    head = HeadKind.HYBRID if loss_kind.is_hybrid else HeadKind.LAPLACIAN_ONLY
    cfg = cfg.model_copy(update={'dtype': 'float64', 'head_kind': head})
    size = grid_size or max(8, 2 ** (cfg.depth + 1))

    ckpt = build_network(cfg, input_channels, (size, size), seed=seed)
    if ckpt.parameter_count > MAX_PARAMETERS:
        raise NetworkConfigError(
            f"Checagem de gradiente exige <= {MAX_PARAMETERS} parâmetros; configuração tem {ckpt.parameter_count}"
        )

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch_size, input_channels, size, size))
    seg = (rng.random((batch_size, size, size)) < 0.5).astype(np.float64)
    img = np.where(seg > 0, rng.uniform(0.5, 2.0, seg.shape), 0.0)

    net = ckpt.network()
    relus = [layer for layer in net.leaf_layers() if isinstance(layer, LeakyReLU)]
    ctx = ForwardContext(mode=Mode.TRAIN, rng=rng, update_stats=False)

    def objective():
        logits = net.forward(x, ctx)
        per_image, _ = head_loss_and_grad(loss_kind, logits, seg, img, cfg.sigma_floor)
        mu2 = logits[:, 1] if loss_kind.is_hybrid else logits[:, 0]
        signature = [r.positive.copy() for r in relus] + [np.sign(img - mu2)]
        return float(per_image.mean()) + l2_penalty(ckpt), signature

    # Primeiro forward sorteia as máscaras; depois ficam congeladas
    batch_objective(ckpt, x, seg, img, loss_kind, ctx)
    ctx.frozen_masks = True
    batch_objective(ckpt, x, seg, img, loss_kind, ctx)
    analytic = {k: g.copy() for k, g in net.named_grads().items()}
    _, base_signature = objective()

    def same(signature):
        return all(np.array_equal(a, b) for a, b in zip(signature, base_signature))

    tensors: List[TensorCheck] = []
    kinks = 0
    for name, param in ckpt.params.items():
        candidates = list(rng.permutation(param.size))
        worst = 0.0
        checked = 0
        resamples = 0
        while candidates and checked < min(samples_per_tensor, param.size):
            i = candidates.pop()
            original = param.flat[i]
            param.flat[i] = original + step
            plus, sig_plus = objective()
            param.flat[i] = original - step
            minus, sig_minus = objective()
            param.flat[i] = original
            if not (same(sig_plus) and same(sig_minus)) and resamples < MAX_RESAMPLES:
                kinks += 1
                resamples += 1
                continue

            numeric = (plus - minus) / (2 * step)
            exact = float(analytic[name].flat[i])
            worst = max(worst, relative_error(exact, numeric, denominator_floor))
            checked += 1

        tensors.append(TensorCheck(name=name, layer=name.rsplit('.', 1)[0],
                                   max_rel_error=worst, n_checked=checked))

    max_error = max(t.max_rel_error for t in tensors)
    report = GradientCheckReport(
        loss_kind=loss_kind.value, tolerance=tolerance, max_rel_error=max_error,
        passed=bool(max_error < tolerance), parameter_count=ckpt.parameter_count,
        kinks_skipped=kinks, tensors=tensors,
    )
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"Gradcheck {loss_kind.value}: erro relativo máximo {max_error:.2e} "
                      f"(tolerância {tolerance:.0e}, {kinks} quinas evitadas)")
    return report

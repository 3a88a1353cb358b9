"""
U-Net bayesiana com dropout antes de cada convolução

Codificador: nível 0 com duas unidades; cada nível l = 1..depth desce com
uma unidade de stride 2 e aplica mais uma unidade. Decodificador:
upsample x2, unidade de redução de canais, concatenação com o skip do
nível e unidade de fusão. Cabeça: dropout + convolução 1x1 sem BN.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from ..errors import ConfigMismatchError, NetworkConfigError, ShapeMismatchError
from ..losses import LossKind
from .layers import Conv2d, ConvUnit, Dropout, ForwardContext, Layer, Mode, Upsample2x
from .optim import AdamState

logger = logging.getLogger(__name__)


class HeadKind(Enum):
    HYBRID = 'hybrid'
    LAPLACIAN_ONLY = 'laplacian-only'

    @property
    def channels(self) -> int:
        return 3 if self is HeadKind.HYBRID else 2


class NetConfig(BaseModel):
    """Hiperparâmetros da rede"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    depth: int = Field(2, ge=1)
    base_channels: int = Field(8, ge=1)
    kernel_size: int = Field(3, ge=1)
    dropout_rate: float = Field(0.1, ge=0, lt=1)
    leaky_slope: float = Field(0.01, ge=0)
    l2_factor: float = Field(1e-6, ge=0)
    head_kind: HeadKind = HeadKind.HYBRID
    sigma_floor: float = Field(1e-4, gt=0)
    dtype: str = Field('float64', pattern='^(float32|float64)$')

    @property
    def output_channels(self) -> int:
        return self.head_kind.channels


def check_pairing(head_kind: HeadKind, loss_kind: LossKind) -> None:
    """Perdas híbridas exigem cabeça de 3 canais; laplace_only, de 2"""
    if (head_kind is HeadKind.HYBRID) != loss_kind.is_hybrid:
        raise ConfigMismatchError(
            f"Perda {loss_kind.value} incompatível com cabeça {head_kind.value}"
        )


def check_grid_shape(cfg: NetConfig, shape: Tuple[int, int]) -> None:
    """Dimensões espaciais precisam ser divisíveis por 2^depth"""
    factor = 2 ** cfg.depth
    if shape[0] % factor or shape[1] % factor:
        raise NetworkConfigError(
            f"Grade {shape} incompatível com depth={cfg.depth}: dimensões devem ser múltiplas de {factor}"
        )


@dataclass
class HeadMaps:
    """Saídas transformadas da cabeça, (N, H, W) cada"""
    mu1: Optional[np.ndarray]
    mu2: np.ndarray
    sigma: np.ndarray
    logits: np.ndarray = field(repr=False)


class UNet:
    """Rede montada a partir de um NetConfig; parâmetros nomeados por caminho"""

    def __init__(self, cfg: NetConfig, input_channels: int, seed: int = 0):
        self.cfg = cfg
        self.input_channels = input_channels
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(seed)
        b, k = cfg.base_channels, cfg.kernel_size

        def unit(name, cin, cout, stride=1):
            return ConvUnit(name, cin, cout, k, stride, cfg.dropout_rate, cfg.leaky_slope, rng, dtype)

        self.encoder: List[List[ConvUnit]] = [[unit('enc0.0', input_channels, b), unit('enc0.1', b, b)]]
        for level in range(1, cfg.depth + 1):
            cin, cout = b * 2 ** (level - 1), b * 2 ** level
            self.encoder.append([unit(f'enc{level}.0', cin, cout, stride=2),
                                 unit(f'enc{level}.1', cout, cout)])

        self.upsamplers: List[Upsample2x] = []
        self.up_units: List[ConvUnit] = []
        self.fuse_units: List[ConvUnit] = []
        for level in range(cfg.depth):
            width = b * 2 ** level
            self.upsamplers.append(Upsample2x(f'dec{level}.upsample'))
            self.up_units.append(unit(f'dec{level}.up', 2 * width, width))
            self.fuse_units.append(unit(f'dec{level}.fuse', 2 * width, width))

        self.head_drop = Dropout('head.drop', cfg.dropout_rate)
        self.head_conv = Conv2d('head.conv', b, cfg.output_channels, 1, 1, rng, dtype)

    # ------------------------------------------------------------------
    # Registro de parâmetros
    # ------------------------------------------------------------------

    def leaf_layers(self) -> List[Layer]:
        """Camadas elementares em ordem de construção"""
        units = [u for level in self.encoder for u in level]
        for level in range(self.cfg.depth):
            units += [self.up_units[level], self.fuse_units[level]]
        leaves = [layer for u in units for layer in u.layers]
        return leaves + [self.head_drop, self.head_conv]

    def named_parameters(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value
                for layer in self.leaf_layers() for key, value in layer.params.items()}

    def named_buffers(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": value
                for layer in self.leaf_layers() for key, value in layer.buffers.items()}

    def named_grads(self) -> Dict[str, np.ndarray]:
        return {f"{layer.name}.{key}": layer.grads[key]
                for layer in self.leaf_layers() for key in layer.params}

    def l2_keys(self) -> List[str]:
        """Kernels e biases de convolução (alvo da penalidade L2)"""
        return [f"{layer.name}.{key}" for layer in self.leaf_layers()
                if isinstance(layer, Conv2d) for key in ('weight', 'bias')]

    def dropout_layers(self) -> List[Dropout]:
        return [layer for layer in self.leaf_layers() if isinstance(layer, Dropout)]

    def bind(self, params: Dict[str, np.ndarray], buffers: Dict[str, np.ndarray]) -> None:
        """Faz as camadas usarem os arrays dados (atualizações in-place aparecem nos dicts)"""
        for layer in self.leaf_layers():
            for key in list(layer.params):
                layer.params[key] = params[f"{layer.name}.{key}"]
            for key in list(layer.buffers):
                layer.buffers[key] = buffers[f"{layer.name}.{key}"]
            layer.zero_grad()

    def zero_grad(self) -> None:
        for layer in self.leaf_layers():
            layer.zero_grad()

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------

    def forward(self, x: np.ndarray, ctx: ForwardContext) -> np.ndarray:
        """Logits da cabeça, (N, C_out, H, W)"""
        skips = []
        h = x
        for level in self.encoder:
            for unit in level:
                h = unit.forward(h, ctx)
            skips.append(h)

        for level in reversed(range(self.cfg.depth)):
            h = self.upsamplers[level].forward(h, ctx)
            h = self.up_units[level].forward(h, ctx)
            h = np.concatenate([h, skips[level]], axis=1)
            h = self.fuse_units[level].forward(h, ctx)

        return self.head_conv.forward(self.head_drop.forward(h, ctx), ctx)

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        """Acumula gradientes dos parâmetros; retorna d/d entrada"""
        g = self.head_drop.backward(self.head_conv.backward(grad_logits))

        skip_grads = []
        for level in range(self.cfg.depth):
            g = self.fuse_units[level].backward(g)
            width = self.up_units[level].layers[1].out_channels
            skip_grads.append(g[:, width:])
            g = self.up_units[level].backward(g[:, :width])
            g = self.upsamplers[level].backward(g)

        for level in reversed(range(self.cfg.depth + 1)):
            if level < self.cfg.depth:
                g = g + skip_grads[level]
            for unit in reversed(self.encoder[level]):
                g = unit.backward(g)
        return g


def head_maps(logits: np.ndarray, head_kind: HeadKind, sigma_floor: float) -> HeadMaps:
    """
    mu1 = logística(z1), mu2 = z2, sigma = softplus(z3) + piso

    mu1 fica em [eps, 1 - eps] do dtype dos logits: em float32 a logística
    satura em 0 e 1 exatos para |z1| acima de ~17.
    """
    if head_kind is HeadKind.HYBRID:
        z1, z2, z3 = logits[:, 0], logits[:, 1], logits[:, 2]
        tiny = np.finfo(logits.dtype).eps
        mu1 = np.clip(expit(z1), tiny, 1 - tiny)
    else:
        z2, z3 = logits[:, 0], logits[:, 1]
        mu1 = None
    sigma = np.logaddexp(0.0, z3) + sigma_floor
    return HeadMaps(mu1=mu1, mu2=z2.copy(), sigma=sigma, logits=logits)


@dataclass
class Checkpoint:
    """Estado completo da rede: parâmetros, buffers, otimizador e progresso"""
    net_config: NetConfig
    input_channels: int
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    input_shape: Optional[Tuple[int, int]] = None
    optimizer: Optional[AdamState] = None
    best_val_loss: float = float('inf')
    epoch: int = 0
    rng_state: Optional[Dict[str, Any]] = None
    loss_kind: Optional[LossKind] = None
    train_config: Optional[Dict[str, Any]] = None
    _network: Optional[UNet] = field(default=None, repr=False, compare=False)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def flat_parameters(self) -> np.ndarray:
        """Vetor W concatenado na ordem de registro"""
        return np.concatenate([p.ravel() for p in self.params.values()])

    def network(self) -> UNet:
        """UNet ligada aos arrays deste checkpoint"""
        if self._network is None:
            net = UNet(self.net_config, self.input_channels)
            net.bind(self.params, self.buffers)
            self._network = net
        return self._network

    def copy(self) -> 'Checkpoint':
        """Cópia profunda dos arrays e do estado"""
        return Checkpoint(
            net_config=self.net_config,
            input_channels=self.input_channels,
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            input_shape=self.input_shape,
            optimizer=self.optimizer.copy() if self.optimizer else None,
            best_val_loss=self.best_val_loss,
            epoch=self.epoch,
            rng_state=copy.deepcopy(self.rng_state),
            loss_kind=self.loss_kind,
            train_config=copy.deepcopy(self.train_config),
        )


def expected_parameter_count(cfg: NetConfig, input_channels: int) -> int:
    """Contagem analítica de pesos, biases e parâmetros de BN"""
    b, k = cfg.base_channels, cfg.kernel_size

    def unit(cin, cout):
        return cout * cin * k * k + cout + 2 * cout

    total = unit(input_channels, b) + unit(b, b)
    for level in range(1, cfg.depth + 1):
        cin, cout = b * 2 ** (level - 1), b * 2 ** level
        total += unit(cin, cout) + unit(cout, cout)
    for level in range(cfg.depth):
        width = b * 2 ** level
        total += unit(2 * width, width) + unit(2 * width, width)
    return total + cfg.output_channels * b + cfg.output_channels


def build_network(cfg: NetConfig, input_channels: int,
                  grid_shape: Optional[Tuple[int, int]] = None, seed: int = 0) -> Checkpoint:
    """
    Checkpoint inicializado

    Args:
        cfg: Configuração da rede
        input_channels: Canais de entrada (= n_elem da geometria)
        grid_shape: (nz, nx) esperado; valida a profundidade
        seed: Seed da inicialização

    Raises:
        NetworkConfigError: profundidade incompatível com a grade
    """
    if input_channels < 1:
        raise NetworkConfigError(f"input_channels inválido: {input_channels}")
    if grid_shape is not None:
        grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
        check_grid_shape(cfg, grid_shape)

    net = UNet(cfg, input_channels, seed=seed)
    params = net.named_parameters()
    buffers = net.named_buffers()
    ckpt = Checkpoint(net_config=cfg, input_channels=input_channels, params=params,
                      buffers=buffers, input_shape=grid_shape)
    ckpt._network = net
    logger.info(f"Rede construída: depth={cfg.depth}, base={cfg.base_channels}, "
                f"cabeça {cfg.head_kind.value}, {ckpt.parameter_count} parâmetros")
    return ckpt


def check_input(ckpt: Checkpoint, x: np.ndarray) -> np.ndarray:
    """Garante (N, C, H, W) compatível com o checkpoint"""
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != ckpt.input_channels:
        raise ShapeMismatchError(
            f"Entrada {x.shape} incompatível: esperado (N, {ckpt.input_channels}, H, W)"
        )
    if ckpt.input_shape is not None and tuple(x.shape[2:]) != tuple(ckpt.input_shape):
        raise ShapeMismatchError(f"Grade {x.shape[2:]} difere da grade do checkpoint {ckpt.input_shape}")
    try:
        check_grid_shape(ckpt.net_config, x.shape[2:])
    except NetworkConfigError as e:
        raise ShapeMismatchError(str(e)) from e
    return x.astype(ckpt.net_config.dtype, copy=False)


def forward(ckpt: Checkpoint, x: np.ndarray, mode: Mode = Mode.DETERMINISTIC,
            seed: Optional[int] = None) -> HeadMaps:
    """
    Forward sem gradiente

    mode=train usa estatísticas do batch (e atualiza as médias móveis);
    mc_predict sorteia máscaras de dropout a partir de seed com estatísticas
    acumuladas; deterministic desliga o dropout.

    Raises:
        ShapeMismatchError: entrada incompatível
    """
    mode = Mode(mode)
    x = check_input(ckpt, x)
    rng = np.random.default_rng(seed) if mode is not Mode.DETERMINISTIC else None
    ctx = ForwardContext(mode=mode, rng=rng, update_stats=mode is Mode.TRAIN)
    logits = ckpt.network().forward(x, ctx)
    cfg = ckpt.net_config
    return head_maps(logits, cfg.head_kind, cfg.sigma_floor)

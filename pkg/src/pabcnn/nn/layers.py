"""
Camadas com forward/backward explícitos sobre arrays numpy (N, C, H, W)

Cada camada guarda no forward o que o backward precisa. Parâmetros e
buffers são arrays nomeados; os gradientes ficam em `grads` com as mesmas
chaves. O modo de execução chega por um ForwardContext.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Mode(Enum):
    """Modo do forward"""
    TRAIN = 'train'                  # dropout ativo, estatísticas do batch
    MC_PREDICT = 'mc_predict'        # dropout ativo, estatísticas acumuladas
    DETERMINISTIC = 'deterministic'  # sem dropout, estatísticas acumuladas


@dataclass
class ForwardContext:
    """Estado compartilhado por todas as camadas num forward"""
    mode: Mode
    rng: Optional[np.random.Generator] = None
    update_stats: bool = True
    frozen_masks: bool = False

    @property
    def dropout_active(self) -> bool:
        return self.mode is not Mode.DETERMINISTIC

    @property
    def batch_stats(self) -> bool:
        return self.mode is Mode.TRAIN


class Layer:
    """Base das camadas"""

    def __init__(self, name: str):
        self.name = name
        self.params: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, ctx: ForwardContext) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)


class Dropout(Layer):
    """Dropout invertido elemento a elemento"""

    def __init__(self, name: str, rate: float):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise ValueError(f"Taxa de dropout fora de [0, 1): {rate}")
        self.rate = rate
        self.mask: Optional[np.ndarray] = None

    def draw_mask(self, shape, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
        keep = rng.random(shape) >= self.rate
        return keep.astype(dtype) / (1 - self.rate)

    def forward(self, x, ctx):
        if self.rate == 0 or not ctx.dropout_active:
            self.mask = None
            return x
        reuse = ctx.frozen_masks and self.mask is not None and self.mask.shape == x.shape
        if not reuse:
            if ctx.rng is None:
                raise ValueError(f"{self.name}: dropout ativo sem gerador aleatório")
            self.mask = self.draw_mask(x.shape, ctx.rng, x.dtype)
        return x * self.mask

    def backward(self, grad):
        return grad if self.mask is None else grad * self.mask


class Conv2d(Layer):
    """Convolução com padding k//2 e stride 1 ou 2"""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, rng: Optional[np.random.Generator] = None, dtype=np.float64):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2

        # Uniforme escalado pelo fan-in
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        bound_w = np.sqrt(6.0 / fan_in)
        bound_b = 1.0 / np.sqrt(fan_in)
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.params['weight'] = rng.uniform(-bound_w, bound_w, shape).astype(dtype)
        self.params['bias'] = rng.uniform(-bound_b, bound_b, out_channels).astype(dtype)
        self.zero_grad()

    @property
    def parameter_count(self) -> int:
        k = self.kernel_size
        return self.out_channels * self.in_channels * k * k + self.out_channels

    def forward(self, x, ctx):
        p, k, s = self.padding, self.kernel_size, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        out = np.tensordot(windows, self.params['weight'], axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + self.params['bias'][None, :, None, None]
        self._cache = (x.shape, xp.shape, windows)
        return np.ascontiguousarray(out)

    def backward(self, grad):
        x_shape, xp_shape, windows = self._cache
        p, k, s = self.padding, self.kernel_size, self.stride
        weight = self.params['weight']
        ho, wo = grad.shape[2], grad.shape[3]

        self.grads['weight'] += np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        self.grads['bias'] += grad.sum(axis=(0, 2, 3))

        dxp = np.zeros(xp_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(grad, weight[:, :, i, j], axes=([1], [0]))
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += contrib.transpose(0, 3, 1, 2)
        if p:
            return dxp[:, :, p:p + x_shape[2], p:p + x_shape[3]]
        return dxp


class BatchNorm2d(Layer):
    """Normalização por canal; gamma/beta treináveis, médias móveis como buffers"""

    def __init__(self, name: str, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float64):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params['gamma'] = np.ones(channels, dtype=dtype)
        self.params['beta'] = np.zeros(channels, dtype=dtype)
        self.buffers['running_mean'] = np.zeros(channels, dtype=dtype)
        self.buffers['running_var'] = np.ones(channels, dtype=dtype)
        self.zero_grad()

    @property
    def parameter_count(self) -> int:
        return 2 * self.channels

    def forward(self, x, ctx):
        axes = (0, 2, 3)
        if ctx.batch_stats:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if ctx.update_stats:
                m = x.shape[0] * x.shape[2] * x.shape[3]
                unbiased = var * m / (m - 1) if m > 1 else var
                self.buffers['running_mean'][...] = (1 - self.momentum) * self.buffers['running_mean'] + self.momentum * mean
                self.buffers['running_var'][...] = (1 - self.momentum) * self.buffers['running_var'] + self.momentum * unbiased
        else:
            mean = self.buffers['running_mean']
            var = self.buffers['running_var']

        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, ctx.batch_stats)
        return self.params['gamma'][None, :, None, None] * xhat + self.params['beta'][None, :, None, None]

    def backward(self, grad):
        xhat, inv_std, batch_stats = self._cache
        axes = (0, 2, 3)
        gamma = self.params['gamma']
        self.grads['gamma'] += np.sum(grad * xhat, axis=axes)
        self.grads['beta'] += np.sum(grad, axis=axes)

        dxhat = grad * gamma[None, :, None, None]
        if not batch_stats:
            return dxhat * inv_std[None, :, None, None]
        m = grad.shape[0] * grad.shape[2] * grad.shape[3]
        sum_d = dxhat.sum(axis=axes)[None, :, None, None]
        sum_dx = (dxhat * xhat).sum(axis=axes)[None, :, None, None]
        return (inv_std[None, :, None, None] / m) * (m * dxhat - sum_d - xhat * sum_dx)


class LeakyReLU(Layer):
    def __init__(self, name: str, slope: float = 0.01):
        super().__init__(name)
        self.slope = slope
        self.positive: Optional[np.ndarray] = None

    def forward(self, x, ctx):
        self.positive = x > 0
        return np.where(self.positive, x, self.slope * x)

    def backward(self, grad):
        return np.where(self.positive, grad, self.slope * grad)


class Upsample2x(Layer):
    """Vizinho mais próximo, fator 2"""

    def forward(self, x, ctx):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h, w = grad.shape
        return grad.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class ConvUnit(Layer):
    """Dropout -> Conv -> BatchNorm -> LeakyReLU"""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int, dropout_rate: float, leaky_slope: float,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__(name)
        self.layers = [
            Dropout(f"{name}.drop", dropout_rate),
            Conv2d(f"{name}.conv", in_channels, out_channels, kernel_size, stride, rng, dtype),
            BatchNorm2d(f"{name}.bn", out_channels, dtype=dtype),
            LeakyReLU(f"{name}.act", leaky_slope),
        ]

    def forward(self, x, ctx):
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

"""
Modelo acústico linear e pré-processamento

phantom -> dados brutos por elemento (forward_project), ruído branco
(add_noise), volume multicanal com atrasos aplicados (mc_transform) e
delay-and-sum (das_reconstruct). Atrasos são de ida apenas: a fonte
fotoacústica emite, o transdutor só recebe.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import gausspulse

from ..errors import GeometryMismatchError, ZeroSignalError
from ..utils.data_validators import ArrayValidator
from .phantom import GridSpec, Phantom

logger = logging.getLogger(__name__)

# Envelope truncado em 1e-3 do pico
PULSE_CUTOFF_DB = -60.0


class ArrayGeometry(BaseModel):
    """Transdutor linear na superfície z = 0, centrado em x = 0"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    n_elem: int = Field(32, ge=1)
    pitch: float = Field(0.4, gt=0)                 # mm
    fc: float = Field(3.125e6, gt=0)                # Hz
    fs: float = Field(25e6, gt=0)                   # Hz
    n_samples: int = Field(1024, ge=1)
    c: float = Field(1540.0, gt=0)                  # m/s
    fractional_bandwidth: float = Field(0.7, gt=0)

    @model_validator(mode='after')
    def _nyquist(self):
        if self.fs <= 2 * self.fc:
            raise ValueError(f"fs={self.fs} deve ser maior que 2*fc={2 * self.fc}")
        return self

    @classmethod
    def full_scale(cls) -> 'ArrayGeometry':
        """128 elementos, pitch 0.1 mm, 15.625 MHz amostrado a 62.5 MHz"""
        return cls(n_elem=128, pitch=0.1, fc=15.625e6, fs=62.5e6, n_samples=2048)

    @property
    def c_mm_per_s(self) -> float:
        return self.c * 1e3

    @property
    def window_mm(self) -> float:
        """Distância percorrida durante a janela temporal"""
        return self.n_samples * self.c_mm_per_s / self.fs

    def element_positions(self) -> np.ndarray:
        """Posições laterais x_j (mm)"""
        return (np.arange(self.n_elem) - (self.n_elem - 1) / 2) * self.pitch

    def distances(self, spec: GridSpec) -> np.ndarray:
        """Distância d(j, m) de cada elemento a cada centro de pixel, (n_elem, nz, nx)"""
        z, x = spec.pixel_centers()
        xe = self.element_positions()
        return np.sqrt(z[None, :, None] ** 2 + (x[None, None, :] - xe[:, None, None]) ** 2)

    def check_grid(self, spec: GridSpec) -> None:
        """
        A janela temporal precisa cobrir o maior caminho elemento-pixel

        Raises:
            GeometryMismatchError: janela curta demais
        """
        longest = float(delay_table(spec, self).max()) * self.c_mm_per_s / self.fs
        if self.window_mm < longest:
            raise GeometryMismatchError(
                f"Janela temporal cobre {self.window_mm:.2f} mm, "
                f"mas o maior caminho elemento-pixel é {longest:.2f} mm"
            )

    def round_trip_ok(self, spec: GridSpec) -> bool:
        """Checagem informativa n_samples*c/fs >= 2*profundidade"""
        return self.window_mm >= 2 * spec.depth_mm


@dataclass
class RawChannelData:
    """Traços temporais por elemento, (n_elem, n_samples)"""
    traces: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        ArrayValidator.require_shape('traces', self.traces,
                                     (self.geometry.n_elem, self.geometry.n_samples),
                                     error=GeometryMismatchError)
        ArrayValidator.require_finite('traces', self.traces)


@dataclass
class MCVolume:
    """Imagens atrasadas por elemento, sem soma, (n_elem, nz, nx)"""
    channels: np.ndarray
    geometry: ArrayGeometry
    spec: GridSpec

    def __post_init__(self):
        ArrayValidator.require_shape('channels', self.channels,
                                     (self.geometry.n_elem, self.spec.nz, self.spec.nx),
                                     error=GeometryMismatchError)


@dataclass
class DASImage:
    values: np.ndarray


def pulse_cutoff(geom: ArrayGeometry) -> float:
    """Meia largura temporal (s) onde o envelope cai a 1e-3 do pico"""
    return float(gausspulse('cutoff', fc=geom.fc, bw=geom.fractional_bandwidth, tpr=PULSE_CUTOFF_DB))


def synthesize_pulse(geom: ArrayGeometry) -> np.ndarray:
    """
    Cosseno modulado por gaussiana em fc, amostrado em fs

    O kernel tem 2m+1 amostras centradas em t = 0, com pico 1 no centro.
    """
    m = int(math.floor(pulse_cutoff(geom) * geom.fs))
    t = np.arange(-m, m + 1) / geom.fs
    return gausspulse(t, fc=geom.fc, bw=geom.fractional_bandwidth)


def project_image(image: np.ndarray, spec: GridSpec, geom: ArrayGeometry) -> np.ndarray:
    """
    trace_j(t_n) = sum_m image[m] * pulse(t_n - d(j,m)/c)

    O pulso é avaliado analiticamente no suporte de cada atraso, só para
    pixels não nulos. Aceita imagens reais quaisquer (o operador é linear).
    """
    ArrayValidator.require_shape('image', image, spec.shape, error=GeometryMismatchError)
    geom.check_grid(spec)
    traces = np.zeros((geom.n_elem, geom.n_samples), dtype=np.float64)
    nonzero = np.flatnonzero(image)
    if nonzero.size == 0:
        return traces

    amplitudes = image.ravel()[nonzero]
    delays = delay_table(spec, geom)[:, nonzero] / geom.fs
    half = int(math.floor(pulse_cutoff(geom) * geom.fs)) + 1
    offsets = np.arange(-half, half + 1)

    # (n_elem, P, L): amostras no suporte de cada atraso
    samples = np.floor(delays * geom.fs).astype(np.int64)[:, :, None] + offsets
    values = gausspulse(samples / geom.fs - delays[:, :, None],
                        fc=geom.fc, bw=geom.fractional_bandwidth) * amplitudes[None, :, None]
    valid = (samples >= 0) & (samples < geom.n_samples)
    rows = np.broadcast_to(np.arange(geom.n_elem)[:, None, None], samples.shape)
    flat = rows[valid] * geom.n_samples + samples[valid]
    traces += np.bincount(flat, weights=values[valid],
                          minlength=geom.n_elem * geom.n_samples).reshape(traces.shape)
    return traces


def forward_project(phantom: Phantom, spec: GridSpec, geom: ArrayGeometry) -> RawChannelData:
    """
    Dados brutos do phantom

    Raises:
        GeometryMismatchError: grade e janela temporal incompatíveis
    """
    return RawChannelData(traces=project_image(phantom.image, spec, geom), geometry=geom)


def add_noise(raw: RawChannelData, snr_db: float, seed: int) -> RawChannelData:
    """
    Ruído branco gaussiano com std = max|trace| / 10^(snr_db/20)

    snr_db = inf desativa o ruído.

    Raises:
        ZeroSignalError: entrada identicamente nula
    """
    peak = float(np.max(np.abs(raw.traces)))
    if peak == 0.0:
        raise ZeroSignalError("add_noise em dados nulos: SNR indefinido")
    if math.isinf(snr_db) and snr_db > 0:
        return RawChannelData(traces=raw.traces.copy(), geometry=raw.geometry)

    std = peak / 10 ** (snr_db / 20)
    noise = np.random.default_rng(seed).normal(0.0, std, size=raw.traces.shape)
    return RawChannelData(traces=raw.traces + noise, geometry=raw.geometry)


@functools.lru_cache(maxsize=8)
def delay_table(spec: GridSpec, geom: ArrayGeometry) -> np.ndarray:
    """Atraso d(j,m)/c em amostras, (n_elem, nz*nx); somente leitura"""
    table = (geom.distances(spec) / geom.c_mm_per_s * geom.fs).reshape(geom.n_elem, -1)
    table.setflags(write=False)
    return table


def mc_transform(raw: RawChannelData, spec: GridSpec, geom: Optional[ArrayGeometry] = None) -> MCVolume:
    """
    channel_j[m] = trace_j(d(j,m)/c) por interpolação linear

    Zero onde o atraso passa do fim da janela.
    """
    geom = geom or raw.geometry
    if geom != raw.geometry:
        raise GeometryMismatchError("Geometria dos dados brutos difere da solicitada")
    geom.check_grid(spec)

    table = delay_table(spec, geom)
    sample_axis = np.arange(geom.n_samples, dtype=np.float64)
    channels = np.empty((geom.n_elem, spec.nz * spec.nx), dtype=np.float64)
    for j in range(geom.n_elem):
        channels[j] = np.interp(table[j], sample_axis, raw.traces[j], right=0.0)
    return MCVolume(channels=channels.reshape(geom.n_elem, spec.nz, spec.nx), geometry=geom, spec=spec)


def das_reconstruct(mc: MCVolume) -> DASImage:
    """Soma sobre o eixo dos elementos"""
    return DASImage(values=mc.channels.sum(axis=0))


def das_display(das: DASImage, reference_peak: float) -> np.ndarray:
    """Valor absoluto reescalado para que o pico coincida com reference_peak"""
    magnitude = np.abs(das.values)
    peak = float(magnitude.max())
    if peak == 0.0:
        return magnitude
    return magnitude * (reference_peak / peak)


def normalize_volume(mc: Union[MCVolume, np.ndarray]) -> np.ndarray:
    """Entrada da rede: volume dividido pelo pico absoluto"""
    channels = mc.channels if isinstance(mc, MCVolume) else np.asarray(mc)
    peak = float(np.max(np.abs(channels)))
    if peak == 0.0:
        return channels.astype(np.float64, copy=True)
    return channels / peak


def ingest_raw(array: np.ndarray, geom: ArrayGeometry) -> RawChannelData:
    """
    Dados experimentais amostras x elementos x fibras -> RawChannelData

    O eixo das fibras é promediado; arrays 2-D são tratados como uma fibra.
    """
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3 or array.shape[:2] != (geom.n_samples, geom.n_elem):
        raise GeometryMismatchError(
            f"Dados brutos com formato {array.shape}, esperado "
            f"({geom.n_samples}, {geom.n_elem}, fibras)"
        )
    logger.info(f"Ingestão: média sobre {array.shape[2]} fibras")
    return RawChannelData(traces=np.ascontiguousarray(array.mean(axis=2).T), geometry=geom)


def simulate_measurement(phantom: Phantom, spec: GridSpec, geom: ArrayGeometry,
                         snr_range=(10.0, 35.0), seed: int = 0):
    """
    Phantom -> (dados brutos ruidosos, volume MC, snr sorteado)

    O SNR é sorteado uniforme em snr_range com o mesmo seed do ruído.
    """
    rng = np.random.default_rng(seed)
    snr_db = float(rng.uniform(*snr_range))
    noise_seed = int(rng.integers(0, 2 ** 63 - 1))
    raw = add_noise(forward_project(phantom, spec, geom), snr_db, noise_seed)
    return raw, mc_transform(raw, spec, geom), snr_db

"""
Geração de phantoms sintéticos de microvasos

Cada phantom é um par (segmentação binária, imagem de pressão inicial).
Vasos são passeios aleatórios suaves rasterizados como discos; cada vaso
recebe uma amplitude em [a, 10a] e a imagem é normalizada para potência
média unitária sobre os pixels não nulos.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.spatial import cKDTree

from ..errors import DatasetSizeError, PhantomParamsError

logger = logging.getLogger(__name__)


class GridSpec(BaseModel):
    """Grade de pixels da imagem (mm)"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    nz: int = Field(64, ge=8)
    nx: int = Field(32, ge=8)
    dz: float = Field(0.4, gt=0)
    dx: float = Field(0.4, gt=0)

    @classmethod
    def full_scale(cls) -> 'GridSpec':
        """512 x 128 pixels, 25.6 mm x 12.8 mm"""
        return cls(nz=512, nx=128, dz=0.05, dx=0.1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nz, self.nx)

    @property
    def depth_mm(self) -> float:
        return self.nz * self.dz

    @property
    def width_mm(self) -> float:
        return self.nx * self.dx

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordenadas (z, x) dos centros; x centrado na abertura"""
        z = (np.arange(self.nz) + 0.5) * self.dz
        x = (np.arange(self.nx) + 0.5) * self.dx - self.width_mm / 2
        return z, x

    def pixel_of(self, z: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Índices (iz, ix) do pixel que contém cada ponto"""
        iz = np.clip(np.floor(z / self.dz).astype(np.int64), 0, self.nz - 1)
        ix = np.clip(np.floor((x + self.width_mm / 2) / self.dx).astype(np.int64), 0, self.nx - 1)
        return iz, ix


class VesselParams(BaseModel):
    """Parâmetros do gerador de vasos"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    diameter_range: Tuple[float, float] = (0.05, 0.3)
    vessels_range: Tuple[int, int] = (1, 8)
    smoothness: float = Field(0.3, ge=0)
    fraction_band: Tuple[float, float] = (0.005, 0.25)
    length_range: Tuple[float, float] = (0.25, 0.75)
    amplitude_floor: float = Field(1.0, gt=0)
    max_attempts: int = Field(20, ge=1)

    @field_validator('diameter_range', 'length_range')
    @classmethod
    def _ordered_positive(cls, value):
        low, high = value
        if low <= 0 or high < low:
            raise ValueError(f"Intervalo inválido {value}: exige 0 < min <= max")
        return value

    @field_validator('vessels_range')
    @classmethod
    def _at_least_one(cls, value):
        low, high = value
        if low < 1 or high < low:
            raise ValueError(f"vessels_range inválido {value}: exige 1 <= min <= max")
        return value

    @field_validator('fraction_band')
    @classmethod
    def _fraction_in_unit(cls, value):
        low, high = value
        if not 0 <= low <= high <= 1:
            raise ValueError(f"fraction_band inválido {value}: exige 0 <= min <= max <= 1")
        return value

    def check_grid(self, spec: GridSpec) -> None:
        """Diâmetros devem caber em (0, min(extensão axial, lateral))"""
        extent = min(spec.depth_mm, spec.width_mm)
        if self.diameter_range[1] >= extent:
            raise PhantomParamsError(
                f"diameter_range {self.diameter_range} excede a extensão da grade ({extent:.3f} mm)"
            )


class SimulationConfig(BaseModel):
    """Tamanho do corpus, faixa de SNR e seed base"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    n_images: int = Field(500, ge=10)
    snr_range: Tuple[float, float] = (10.0, 35.0)
    seed: int = 0

    @field_validator('snr_range')
    @classmethod
    def _ordered(cls, value):
        if value[1] < value[0]:
            raise ValueError(f"snr_range fora de ordem: {value}")
        return value


@dataclass
class VesselTrace:
    """Caminho de um vaso (mm) e seus atributos"""
    path: np.ndarray
    diameter: float
    amplitude: float


@dataclass
class Phantom:
    """Par de referência: segmentação binária e imagem de pressão inicial"""
    segmentation: np.ndarray
    image: np.ndarray
    vessels: List[VesselTrace] = field(default_factory=list, repr=False)

    @classmethod
    def from_image(cls, image: np.ndarray) -> 'Phantom':
        """Phantom cuja segmentação é o indicador de image > 0"""
        image = np.asarray(image, dtype=np.float64)
        if np.any(image < 0):
            raise PhantomParamsError("Imagem de pressão inicial com valores negativos")
        return cls(segmentation=(image > 0).astype(np.uint8), image=image)

    @property
    def fraction(self) -> float:
        """Fração de pixels não nulos"""
        return float(self.segmentation.mean())


@dataclass
class Dataset:
    """Corpus de phantoms com partições embaralhadas 80/10/10"""
    phantoms: List[Phantom]
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    spec: GridSpec
    params: VesselParams

    def __len__(self) -> int:
        return len(self.phantoms)

    @property
    def splits(self) -> dict:
        return {'train': self.train, 'val': self.val, 'test': self.test}


def trace_vessel_path(spec: GridSpec, params: VesselParams, rng: np.random.Generator) -> np.ndarray:
    """
    Passeio aleatório suave dentro da grade

    Passo de min(dz, dx)/2 mm; a direção recebe uma perturbação U(-s, s) a
    cada passo. O passeio termina ao atingir o comprimento sorteado ou ao
    sair da grade.

    Returns:
        Array (n, 2) de pontos (z, x) em mm, todos dentro da grade
    """
    half_width = spec.width_mm / 2
    start = np.array([rng.uniform(0.0, spec.depth_mm), rng.uniform(-half_width, half_width)])
    heading0 = rng.uniform(0.0, 2 * math.pi)

    diagonal = math.hypot(spec.depth_mm, spec.width_mm)
    length = rng.uniform(*params.length_range) * diagonal
    step = min(spec.dz, spec.dx) / 2
    n_steps = max(1, int(math.ceil(length / step)))

    headings = heading0 + np.cumsum(rng.uniform(-params.smoothness, params.smoothness, n_steps))
    moves = step * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    points = np.vstack([start, start + np.cumsum(moves, axis=0)])

    inside = ((points[:, 0] >= 0) & (points[:, 0] < spec.depth_mm)
              & (points[:, 1] >= -half_width) & (points[:, 1] < half_width))
    exit_at = np.argmin(inside) if not inside.all() else len(points)
    return points[:exit_at]


def rasterize_vessel(spec: GridSpec, path: np.ndarray, diameter: float) -> np.ndarray:
    """
    Máscara booleana do vaso

    Um pixel pertence ao vaso se seu centro está estritamente a menos de
    diameter/2 de algum ponto do caminho, ou se contém um ponto do caminho.
    """
    mask = np.zeros(spec.shape, dtype=bool)
    iz, ix = spec.pixel_of(path[:, 0], path[:, 1])
    mask[iz, ix] = True

    radius = diameter / 2
    z, x = spec.pixel_centers()
    zmin, xmin = path.min(axis=0) - radius
    zmax, xmax = path.max(axis=0) + radius
    rows = np.nonzero((z > zmin) & (z < zmax))[0]
    cols = np.nonzero((x > xmin) & (x < xmax))[0]
    if rows.size and cols.size:
        zz, xx = np.meshgrid(z[rows], x[cols], indexing='ij')
        dist, _ = cKDTree(path).query(np.column_stack([zz.ravel(), xx.ravel()]), k=1)
        near = (dist < radius).reshape(zz.shape)
        mask[np.ix_(rows, cols)] |= near
    return mask


def _draw_image(spec: GridSpec, params: VesselParams, rng: np.random.Generator):
    n_vessels = int(rng.integers(params.vessels_range[0], params.vessels_range[1] + 1))
    image = np.zeros(spec.shape, dtype=np.float64)
    vessels = []
    a = params.amplitude_floor
    for _ in range(n_vessels):
        path = trace_vessel_path(spec, params, rng)
        diameter = float(rng.uniform(*params.diameter_range))
        amplitude = float(rng.uniform(a, 10 * a))
        mask = rasterize_vessel(spec, path, diameter)
        image[mask] = np.maximum(image[mask], amplitude)
        vessels.append(VesselTrace(path=path, diameter=diameter, amplitude=amplitude))
    return image, vessels


def generate_phantom(spec: GridSpec, params: VesselParams, seed: int) -> Phantom:
    """
    Gera um phantom determinístico para (spec, params, seed)

    Sorteios cuja fração não nula cai fora de fraction_band são refeitos
    no mesmo fluxo aleatório, até max_attempts vezes.

    Raises:
        PhantomParamsError: diâmetros maiores que a extensão da grade
    """
    params.check_grid(spec)
    rng = np.random.default_rng(seed)
    low, high = params.fraction_band

    for attempt in range(1, params.max_attempts + 1):
        image, vessels = _draw_image(spec, params, rng)
        fraction = float(np.count_nonzero(image)) / image.size
        if low <= fraction <= high:
            break
    else:
        logger.warning(
            f"Phantom seed={seed}: fração {fraction:.4f} fora de {params.fraction_band} "
            f"após {params.max_attempts} tentativas; mantendo o último sorteio"
        )

    support = image > 0
    power = float(np.mean(image[support] ** 2))
    scale = 1.0 / math.sqrt(power)
    image *= scale
    for vessel in vessels:
        vessel.amplitude *= scale

    return Phantom(segmentation=support.astype(np.uint8), image=image, vessels=vessels)


def split_indices(n: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Partição embaralhada 80/10/10

    val e test recebem floor(n/10) índices cada; o restante vai para treino.

    Raises:
        DatasetSizeError: n < 10
    """
    if n < 10:
        raise DatasetSizeError(f"n={n} não forma três partições não vazias (mínimo 10)")
    order = np.random.default_rng(seed).permutation(n)
    k = n // 10
    n_train = n - 2 * k
    return order[:n_train], order[n_train:n_train + k], order[n_train + k:]


def generate_dataset(n: int, spec: GridSpec, params: VesselParams, seed: int,
                     progress: bool = False) -> Dataset:
    """
    Gera n phantoms (seed do i-ésimo = seed + i) e as partições

    Args:
        n: Número de phantoms (>= 10)
        spec: Grade
        params: Parâmetros de vasos
        seed: Seed base
        progress: Mostra barra tqdm
    """
    train, val, test = split_indices(n, seed)
    params.check_grid(spec)

    iterator = range(n)
    if progress:
        from tqdm import tqdm
        iterator = tqdm(iterator, desc='Phantoms', unit='img')
    phantoms = [generate_phantom(spec, params, seed + i) for i in iterator]

    logger.info(f"Dataset gerado: {n} phantoms ({len(train)}/{len(val)}/{len(test)})")
    return Dataset(phantoms=phantoms, train=train, val=val, test=test,
                   seed=seed, spec=spec, params=params)


def corpus_statistics(phantoms: List[Phantom]) -> dict:
    """Estatísticas de esparsidade e faixa dinâmica do corpus"""
    fractions = np.array([p.fraction for p in phantoms])
    ratios = np.array([p.image[p.image > 0].max() / p.image[p.image > 0].min()
                       for p in phantoms if np.any(p.image > 0)] or [1.0])
    return {
        'n': len(phantoms),
        'fraction_mean': float(fractions.mean()),
        'fraction_min': float(fractions.min()),
        'fraction_max': float(fractions.max()),
        'dynamic_range_max': float(ratios.max()),
    }

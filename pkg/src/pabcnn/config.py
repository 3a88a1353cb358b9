"""
Configuração de execução: um documento JSON com uma seção por componente

Chaves desconhecidas são rejeitadas. Os padrões são os da escala de bancada;
`RunConfig.full_scale()` devolve o preset de 512 x 128 pixels e 128 elementos.
"""

import json
import logging
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, Field

from .calibration import CalibrationConfig
from .confidence import ConfidenceParams
from .errors import StorageError
from .nn.training import TrainConfig
from .nn.unet import NetConfig, check_grid_shape
from .simulation.acoustics import ArrayGeometry
from .simulation.phantom import GridSpec, SimulationConfig, VesselParams
from .uncertainty import PredictConfig

logger = logging.getLogger(__name__)


class PathsConfig(BaseModel):
    """Diretórios padrão dos artefatos"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    dataset: str = 'data/dataset'
    checkpoints: str = 'data/checkpoints'
    posteriors: str = 'data/posteriors'
    reports: str = 'data/reports'


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    grid: GridSpec = Field(default_factory=GridSpec)
    geometry: ArrayGeometry = Field(default_factory=ArrayGeometry)
    phantom: VesselParams = Field(default_factory=VesselParams)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    net: NetConfig = Field(default_factory=NetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    predict: PredictConfig = Field(default_factory=PredictConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    confidence: ConfidenceParams = Field(default_factory=ConfidenceParams)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @classmethod
    def full_scale(cls) -> 'RunConfig':
        """Preset completo: 16.000 imagens, grade 512 x 128, rede depth 4 com 32 canais base"""
        return cls(
            grid=GridSpec.full_scale(),
            geometry=ArrayGeometry.full_scale(),
            simulation=SimulationConfig(n_images=16000),
            net=NetConfig(depth=4, base_channels=32),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunConfig':
        """
        Lê e valida um arquivo JSON

        Raises:
            StorageError: arquivo ausente ou ilegível
            pydantic.ValidationError: chave desconhecida ou valor inválido
        """
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise StorageError(f"Configuração ilegível ({e.strerror or e})", str(path)) from e
        config = cls.model_validate_json(text)
        logger.info(f"Configuração carregada: {path}")
        return config

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.model_dump(mode='json'), indent=2), encoding='utf-8')
        except OSError as e:
            raise StorageError(f"Falha ao gravar configuração ({e.strerror or e})", str(path)) from e
        return path

    def with_seed(self, seed: int) -> 'RunConfig':
        """Cópia com o mesmo seed em simulação, treino e predição"""
        return self.model_copy(update={
            'simulation': self.simulation.model_copy(update={'seed': seed}),
            'train': self.train.model_copy(update={'seed': seed}),
            'predict': self.predict.model_copy(update={'seed': seed}),
        })

    def check(self) -> None:
        """
        Coerência entre seções

        Raises:
            PhantomParamsError: diâmetros maiores que a grade
            GeometryMismatchError: janela temporal curta para a grade
            NetworkConfigError: grade não divisível por 2^depth
        """
        self.phantom.check_grid(self.grid)
        self.geometry.check_grid(self.grid)
        check_grid_shape(self.net, self.grid.shape)

"""
Diretório de dataset simulado

    <root>/manifest.json
    <root>/phantoms/00000.tnsr   (seg u8, image f64)
    <root>/raw/00000.tnsr        (traços f32, elementos x amostras)
    <root>/mc/00000.tnsr         (volume MC f32, elementos x nz x nx)
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from ..errors import CorruptPayloadError, GeometryMismatchError, StorageError
from ..nn.training import TrainingData
from ..simulation.acoustics import ArrayGeometry, MCVolume, RawChannelData, normalize_volume
from ..simulation.phantom import GridSpec, Phantom, VesselParams
from ..utils.data_validators import DataSanitizer
from .tnsr import read_tnsr, write_tnsr

logger = logging.getLogger(__name__)

FORMAT = 'pabcnn-dataset'
VERSION = 1


class DatasetStore:
    """
    Leitura e escrita de um dataset em disco

    Mantém estatísticas da sessão (arquivos lidos e gravados) em `stats`.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self._manifest: Optional[Dict[str, Any]] = None
        self.stats = {
            'reads': 0,
            'writes': 0,
        }

    # ------------------------------------------------------------------
    # Caminhos
    # ------------------------------------------------------------------

    @staticmethod
    def item_name(index: int) -> str:
        return f"{index:05d}.tnsr"

    def phantom_path(self, index: int) -> Path:
        return self.root / 'phantoms' / self.item_name(index)

    def raw_path(self, index: int) -> Path:
        return self.root / 'raw' / self.item_name(index)

    def mc_path(self, index: int) -> Path:
        return self.root / 'mc' / self.item_name(index)

    @property
    def manifest_path(self) -> Path:
        return self.root / 'manifest.json'

    # ------------------------------------------------------------------
    # Escrita
    # ------------------------------------------------------------------

    def write_phantom(self, index: int, phantom: Phantom) -> Path:
        self.stats['writes'] += 1
        return write_tnsr(self.phantom_path(index),
                          {'seg': phantom.segmentation.astype(np.uint8), 'image': phantom.image},
                          {'fraction': phantom.fraction, 'vessels': len(phantom.vessels)})

    def write_measurement(self, index: int, raw: RawChannelData, mc: MCVolume, snr_db: float) -> None:
        self.stats['writes'] += 2
        write_tnsr(self.raw_path(index), raw.traces.astype(np.float32), {'snr_db': snr_db})
        write_tnsr(self.mc_path(index), mc.channels.astype(np.float32), {'snr_db': snr_db})

    def write_manifest(self, manifest: Dict[str, Any]) -> Path:
        document = {'format': FORMAT, 'version': VERSION, **manifest}
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            self.manifest_path.write_text(
                json.dumps(DataSanitizer.json_safe(document), indent=2, allow_nan=False), encoding='utf-8')
        except OSError as e:
            raise StorageError(f"Falha ao gravar manifest ({e.strerror or e})", str(self.manifest_path)) from e
        self._manifest = document
        logger.info(f"Manifest gravado: {self.manifest_path}")
        return self.manifest_path

    # ------------------------------------------------------------------
    # Leitura
    # ------------------------------------------------------------------

    @property
    def manifest(self) -> Dict[str, Any]:
        """
        Manifest validado

        Raises:
            StorageError: arquivo ausente ou ilegível
            CorruptPayloadError: formato desconhecido
        """
        if self._manifest is None:
            try:
                document = json.loads(self.manifest_path.read_text(encoding='utf-8'))
            except OSError as e:
                raise StorageError(f"Manifest ausente ({e.strerror or e})", str(self.manifest_path)) from e
            except json.JSONDecodeError as e:
                raise CorruptPayloadError(f"Manifest não é JSON válido: {e}", str(self.manifest_path)) from e
            if document.get('format') != FORMAT:
                raise CorruptPayloadError(f"Formato de dataset desconhecido: {document.get('format')}",
                                          str(self.manifest_path))
            self._manifest = document
        return self._manifest

    def __len__(self) -> int:
        return int(self.manifest['n'])

    @property
    def grid(self) -> GridSpec:
        return GridSpec.model_validate(self.manifest['grid'])

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.model_validate(self.manifest['geometry'])

    @property
    def vessel_params(self) -> VesselParams:
        return VesselParams.model_validate(self.manifest['phantom'])

    def split(self, name: str) -> np.ndarray:
        return np.asarray(self.manifest['splits'][name], dtype=np.int64)

    def check_compatible(self, grid: GridSpec, geometry: ArrayGeometry) -> None:
        """
        Raises:
            GeometryMismatchError: grade ou geometria do dataset diferem das pedidas
        """
        try:
            stored_grid, stored_geometry = self.grid, self.geometry
        except ValidationError as e:
            raise CorruptPayloadError(f"Grade/geometria inválidas no manifest: {e}", str(self.manifest_path)) from e
        if stored_grid != grid:
            raise GeometryMismatchError(f"Grade do dataset {stored_grid} difere da configuração {grid}")
        if stored_geometry != geometry:
            raise GeometryMismatchError("Geometria do dataset difere da configuração")

    def read_phantom(self, index: int) -> Phantom:
        self.stats['reads'] += 1
        content = read_tnsr(self.phantom_path(index))
        return Phantom(segmentation=content['seg'], image=content['image'])

    def read_raw(self, index: int) -> RawChannelData:
        self.stats['reads'] += 1
        traces = read_tnsr(self.raw_path(index)).single.astype(np.float64)
        return RawChannelData(traces=traces, geometry=self.geometry)

    def read_mc(self, index: int) -> MCVolume:
        self.stats['reads'] += 1
        channels = read_tnsr(self.mc_path(index)).single.astype(np.float64)
        return MCVolume(channels=channels, geometry=self.geometry, spec=self.grid)

    def read_phantoms(self, indices) -> List[Phantom]:
        return [self.read_phantom(int(i)) for i in indices]

    def training_data(self, progress: bool = False) -> TrainingData:
        """Entradas normalizadas (float32) e alvos de todo o dataset, com as partições"""
        n = len(self)
        iterator = range(n)
        if progress:
            from tqdm import tqdm
            iterator = tqdm(iterator, desc='Carregando dataset', unit='img')

        inputs, seg, img = [], [], []
        for i in iterator:
            phantom = self.read_phantom(i)
            inputs.append(normalize_volume(self.read_mc(i)).astype(np.float32))
            seg.append(phantom.segmentation)
            img.append(phantom.image)
        logger.info(f"Dataset carregado: {n} itens de {self.root}")
        return TrainingData(inputs=np.stack(inputs), seg=np.stack(seg), img=np.stack(img),
                            train_idx=self.split('train'), val_idx=self.split('val'))

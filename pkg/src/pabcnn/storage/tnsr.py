"""
Formato TNSR: uma linha de cabeçalho JSON seguida de payloads little-endian

Cabeçalho (uma única linha terminada em '\\n'):

    {"magic": "TNSR1", "byte_order": "LE",
     "maps": [{"name", "dtype", "shape", "offset", "nbytes"}, ...],
     "meta": {...}}

Arquivos com um único mapa repetem `dtype` e `shape` no nível superior.
Offsets são relativos ao primeiro byte após o newline.
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from ..errors import StorageError, TnsrError, TnsrHeaderError, TnsrTruncatedError
from ..utils.data_validators import DataSanitizer

logger = logging.getLogger(__name__)

MAGIC = 'TNSR1'
SINGLE_MAP_NAME = 'data'

DTYPES = {
    'f32': np.dtype('<f4'),
    'f64': np.dtype('<f8'),
    'u8': np.dtype('u1'),
}


@dataclass
class TnsrFile:
    """Conteúdo decodificado de um arquivo TNSR"""
    maps: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.maps[name]

    def __contains__(self, name: str) -> bool:
        return name in self.maps

    @property
    def single(self) -> np.ndarray:
        """O mapa de um arquivo de mapa único"""
        if len(self.maps) != 1:
            raise TnsrError(f"Arquivo com {len(self.maps)} mapas não é de mapa único")
        return next(iter(self.maps.values()))


def _dtype_code(array: np.ndarray) -> str:
    if array.dtype == np.bool_ or array.dtype == np.uint8:
        return 'u8'
    if array.dtype == np.float32:
        return 'f32'
    if array.dtype == np.float64:
        return 'f64'
    raise TnsrError(f"dtype sem representação TNSR: {array.dtype}")


def _reject_constant(token: str):
    raise TnsrHeaderError(f"Cabeçalho contém constante não JSON: {token}")


def encode(maps: Union[np.ndarray, Mapping[str, np.ndarray]], meta: Optional[Dict[str, Any]] = None) -> bytes:
    """
    Serializa um array ou um dicionário nome -> array

    Args:
        maps: Array único ou mapeamento ordenado de arrays
        meta: Metadados livres (convertidos com DataSanitizer.json_safe)

    Returns:
        Bytes do arquivo completo
    """
    single = isinstance(maps, np.ndarray)
    named = {SINGLE_MAP_NAME: maps} if single else dict(maps)

    table = []
    payloads = []
    offset = 0
    for name, array in named.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        blob = np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes()
        table.append({
            'name': name,
            'dtype': code,
            'shape': list(array.shape),
            'offset': offset,
            'nbytes': len(blob)
        })
        payloads.append(blob)
        offset += len(blob)

    header = {'magic': MAGIC, 'byte_order': 'LE', 'maps': table,
              'meta': DataSanitizer.json_safe(meta or {})}
    if single:
        header['dtype'] = table[0]['dtype']
        header['shape'] = table[0]['shape']

    line = json.dumps(header, allow_nan=False, separators=(',', ':')).encode('utf-8') + b'\n'
    return line + b''.join(payloads)


def decode(data: bytes, source: str = '<bytes>') -> TnsrFile:
    """Decodifica bytes TNSR; erros distintos para cabeçalho e payload"""
    newline = data.find(b'\n')
    if newline < 0:
        raise TnsrHeaderError(f"Cabeçalho TNSR sem newline em {source}")

    try:
        header = json.loads(data[:newline].decode('utf-8'), parse_constant=_reject_constant)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TnsrHeaderError(f"Cabeçalho TNSR não é JSON válido em {source}: {e}") from e

    if not isinstance(header, dict) or header.get('magic') != MAGIC:
        raise TnsrHeaderError(f"Magic TNSR ausente em {source}")
    if header.get('byte_order') != 'LE':
        raise TnsrHeaderError(f"Byte order não suportado em {source}: {header.get('byte_order')}")

    payload = memoryview(data)[newline + 1:]
    maps: Dict[str, np.ndarray] = {}
    for entry in header.get('maps', []):
        try:
            name = entry['name']
            code = entry['dtype']
            shape = tuple(int(s) for s in entry['shape'])
            offset = int(entry['offset'])
            nbytes = int(entry['nbytes'])
        except (KeyError, TypeError, ValueError) as e:
            raise TnsrHeaderError(f"Entrada de mapa inválida em {source}: {entry}") from e
        if code not in DTYPES:
            raise TnsrHeaderError(f"dtype desconhecido '{code}' no mapa {name} de {source}")
        dtype = DTYPES[code]
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if expected != nbytes:
            raise TnsrHeaderError(
                f"Mapa {name} declara {nbytes} bytes mas o formato {shape} exige {expected} em {source}"
            )
        if offset + nbytes > len(payload):
            raise TnsrTruncatedError(
                f"Payload do mapa {name} truncado ({len(payload) - offset} de {nbytes} bytes)", source
            )
        maps[name] = np.frombuffer(payload[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()

    return TnsrFile(maps=maps, meta=header.get('meta') or {})


def write_tnsr(path: Union[str, Path], maps: Union[np.ndarray, Mapping[str, np.ndarray]],
               meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    Grava um arquivo TNSR de forma atômica (arquivo temporário + rename)

    Raises:
        StorageError: falha de disco, com o caminho envolvido
    """
    path = Path(path)
    data = encode(maps, meta)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix='.tmp')
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError as e:
        raise StorageError(f"Falha ao gravar TNSR ({e.strerror or e})", str(path)) from e
    logger.debug(f"TNSR gravado: {path} ({len(data)} bytes)")
    return path


def read_tnsr(path: Union[str, Path]) -> TnsrFile:
    """Lê um arquivo TNSR completo"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"Falha ao ler TNSR ({e.strerror or e})", str(path)) from e
    return decode(data, source=str(path))


def read_array(path: Union[str, Path]) -> np.ndarray:
    """Lê o mapa de um arquivo TNSR de mapa único"""
    return read_tnsr(path).single

"""
Validadores e sanitizadores de arrays e escalares para o pa-bcnn
"""

import math
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd


class DataSanitizer:
    """Converte valores de entrada e saída em formas seguras"""

    @staticmethod
    def safe_float(value: Any) -> Optional[float]:
        """
        Converte para float seguro

        Aceita as strings "inf", "+inf" e "-inf" (sentinelas gravados em JSON).
        NaN e valores não numéricos viram None.
        """
        if value is None:
            return None
        if isinstance(value, str):
            text = value.strip().lower()
            if text in ('inf', '+inf', 'infinity'):
                return math.inf
            if text in ('-inf', '-infinity'):
                return -math.inf
        try:
            result = float(value)
        except (ValueError, TypeError):
            return None
        if math.isnan(result):
            return None
        return result

    @staticmethod
    def json_safe(value: Any) -> Any:
        """
        Converte recursivamente para tipos serializáveis em JSON estrito

        inf vira "inf"/"-inf", NaN vira None, arrays e escalares numpy
        viram listas e números Python.
        """
        if isinstance(value, dict):
            return {str(k): DataSanitizer.json_safe(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [DataSanitizer.json_safe(v) for v in value]
        if isinstance(value, np.ndarray):
            return DataSanitizer.json_safe(value.tolist())
        if isinstance(value, (np.bool_, bool)):
            return bool(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (float, np.floating)):
            value = float(value)
            if math.isnan(value):
                return None
            if math.isinf(value):
                return 'inf' if value > 0 else '-inf'
            return value
        if value is not None and not isinstance(value, (int, str)) and pd.isna(value):
            return None
        return value


class ArrayValidator:
    """Checagens de formato e finitude usadas nas fronteiras dos módulos"""

    @staticmethod
    def require_finite(name: str, array: np.ndarray, error: type = ValueError) -> None:
        """Rejeita arrays com NaN ou inf"""
        if not np.all(np.isfinite(array)):
            raise error(f"{name} contém valores não finitos")

    @staticmethod
    def require_same_shape(arrays: Dict[str, np.ndarray], error: type = ValueError) -> Tuple[int, ...]:
        """Garante que todos os arrays tenham o mesmo formato; retorna o formato"""
        shapes = {name: np.shape(a) for name, a in arrays.items()}
        distinct = set(shapes.values())
        if len(distinct) > 1:
            detail = ', '.join(f"{n}={s}" for n, s in shapes.items())
            raise error(f"Formatos incompatíveis: {detail}")
        return distinct.pop() if distinct else ()

    @staticmethod
    def require_shape(name: str, array: np.ndarray, expected: Sequence[int], error: type = ValueError) -> None:
        """Compara o formato com o esperado"""
        if tuple(np.shape(array)) != tuple(expected):
            raise error(f"{name} tem formato {tuple(np.shape(array))}, esperado {tuple(expected)}")

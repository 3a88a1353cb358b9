"""
Adam com correção de viés
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
    """Momentos por parâmetro e contador de passos"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> 'AdamState':
        return AdamState(m={k: a.copy() for k, a in self.m.items()},
                         v={k: a.copy() for k, a in self.v.items()},
                         step=self.step)


class Adam:
    def __init__(self, learning_rate: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, state: AdamState = None):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = state or AdamState()

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Atualiza params in-place"""
        st = self.state
        st.step += 1
        correction1 = 1 - self.beta1 ** st.step
        correction2 = 1 - self.beta2 ** st.step
        for name, value in params.items():
            g = grads[name]
            if name not in st.m:
                st.m[name] = np.zeros_like(value)
                st.v[name] = np.zeros_like(value)
            m, v = st.m[name], st.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            value -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

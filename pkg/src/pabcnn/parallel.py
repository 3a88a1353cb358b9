"""
Pool de processos para trabalho por imagem (simulate, predict, calibrate)

Resultados voltam na ordem de submissão; com max_workers <= 1 tudo roda
no processo atual.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


class WorkerPool:
    """Executa uma função sobre itens, em série ou em processos"""

    def __init__(self, max_workers: int = 1, progress: bool = False):
        self.max_workers = max(1, int(max_workers))
        self.progress = progress
        self.stats = {
            'total_tasks': 0,
            'successful': 0,
            'failed': 0,
            'total_time': 0.0,
        }

    def _wrap(self, iterator, total: int, desc: Optional[str]):
        if not self.progress:
            return iterator
        from tqdm import tqdm
        return tqdm(iterator, total=total, desc=desc or 'Tarefas', unit='item')

    def map(self, function: Callable[[T], R], items: Iterable[T], desc: Optional[str] = None) -> List[R]:
        """
        Aplica `function` a cada item

        A função precisa ser definida em nível de módulo quando max_workers > 1.
        A primeira exceção é propagada depois de registrada.
        """
        items = list(items)
        self.stats['total_tasks'] += len(items)
        started = time.perf_counter()
        results: List[R] = []
        try:
            if self.max_workers == 1:
                for item in self._wrap(items, len(items), desc):
                    results.append(function(item))
                    self.stats['successful'] += 1
            else:
                with ProcessPoolExecutor(max_workers=self.max_workers) as executor:
                    for result in self._wrap(executor.map(function, items), len(items), desc):
                        results.append(result)
                        self.stats['successful'] += 1
        except Exception as e:
            self.stats['failed'] += 1
            logger.error(f"Falha em {desc or 'tarefa'} após {len(results)} itens: {e}")
            raise
        finally:
            self.stats['total_time'] += time.perf_counter() - started

        logger.info(f"{desc or 'Tarefas'}: {len(results)} itens com {self.max_workers} worker(s) "
                    f"em {self.stats['total_time']:.1f}s")
        return results

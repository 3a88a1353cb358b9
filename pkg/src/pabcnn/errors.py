"""
Hierarquia de exceções do pa-bcnn

Cada erro nomeado corresponde a uma condição de falha documentada de uma
operação. A CLI captura `PABCNNError` e sai com status 2.
"""

from typing import Optional


class PABCNNError(Exception):
    """Base para todos os erros do pacote"""


# ============================================
# Simulação
# ============================================

class PhantomParamsError(PABCNNError, ValueError):
    """Parâmetros de vaso incompatíveis com a grade"""


class DatasetSizeError(PABCNNError, ValueError):
    """Corpus pequeno demais para três partições não vazias"""


class GeometryMismatchError(PABCNNError, ValueError):
    """Grade, geometria do transdutor ou formato dos dados inconsistentes"""


class ZeroSignalError(PABCNNError, ValueError):
    """SNR indefinido: sinal identicamente nulo"""


# ============================================
# Rede e treinamento
# ============================================

class NetworkConfigError(PABCNNError, ValueError):
    """Configuração de rede incompatível (profundidade vs grade, tamanho)"""


class ShapeMismatchError(PABCNNError, ValueError):
    """Entrada com formato diferente do esperado pela rede"""


class ConfigMismatchError(PABCNNError, ValueError):
    """Combinação inválida de cabeça, perda ou verossimilhança"""


class TrainingDivergedError(PABCNNError, RuntimeError):
    """Perda de treino não finita"""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"Perda não finita ({loss}) na época {epoch}, batch {batch}"
        )


# ============================================
# Persistência
# ============================================

class StorageError(PABCNNError, OSError):
    """Falha de disco, sempre com o caminho envolvido"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message}: {path}" if path else message)


class TnsrError(StorageError):
    """Arquivo TNSR inválido"""


class TnsrHeaderError(TnsrError):
    """Cabeçalho TNSR ausente, malformado ou com dtype desconhecido"""


class TnsrTruncatedError(TnsrError):
    """Payload menor que o declarado no cabeçalho"""


class CheckpointVersionError(StorageError):
    """Checkpoint gravado com versão de formato diferente"""


class CorruptPayloadError(StorageError):
    """Checkpoint truncado ou inconsistente com a própria configuração"""


# ============================================
# Calibração e confiança
# ============================================

class InvalidScaleError(PABCNNError, ValueError):
    """Parâmetro de escala não positivo"""


class EmptyEvaluationError(PABCNNError, ValueError):
    """Nenhum pixel avaliável"""


class MissingGroundTruthError(PABCNNError, LookupError):
    """Verdade de referência indisponível"""


class ThresholdSweepError(PABCNNError, ValueError):
    """Lista de limiares vazia ou fora de ordem decrescente"""

"""
Hierarquia de erros do spdreduce.

Cada erro transporta o código de saída usado pela CLI:
- 2: erro de utilização/configuração
- 3: erro nos dados
- 4: falha numérica
"""

from contextlib import contextmanager
from typing import Iterator, Optional

import numpy as np


class SpdReduceError(Exception):
    """Raiz de todos os erros do pacote"""
    exit_code: int = 1

    def to_dict(self) -> dict:
        return {
            "type": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


# ============================================================
# CONFIGURAÇÃO (exit 2)
# ============================================================

class ConfigurationError(SpdReduceError, ValueError):
    """Parâmetros inválidos ou incompatíveis com os dados"""
    exit_code = 2


# ============================================================
# DADOS (exit 3)
# ============================================================

class ValidationError(SpdReduceError, ValueError):
    """Entrada que não respeita o contrato de um tipo"""
    exit_code = 3


class DimensionMismatchError(ValidationError):
    pass


class WindowOutOfRangeError(ValidationError):
    pass


class SignalTooShortError(ValidationError):
    pass


class DataFormatError(ValidationError):
    """Manifesto, CSV ou modelo com formato inesperado"""
    pass


class DataFileNotFoundError(DataFormatError):
    """Ficheiro referido (manifesto, CSV, modelo) não existe"""
    pass


@contextmanager
def schema_errors(what: str) -> Iterator[None]:
    """Converte chaves em falta ou tipos errados ao ler `what` em DataFormatError"""
    try:
        yield
    except SpdReduceError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, IndexError) as e:
        raise DataFormatError(f"{what} com estrutura inválida: {type(e).__name__} {e}") from e


# ============================================================
# NUMÉRICOS (exit 4)
# ============================================================

class NumericalError(SpdReduceError, ArithmeticError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    """Matriz sem todos os valores próprios positivos"""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(NumericalError):
    """Iteração esgotou o orçamento sem atingir a tolerância"""

    def __init__(self, message: str, last_iterate: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class SingularityError(NumericalError):
    """Congruência projetada deixou de ser SPD no par (i, j)"""

    def __init__(self, message: str, owner: int, neighbor: int):
        super().__init__(message)
        self.owner = owner
        self.neighbor = neighbor



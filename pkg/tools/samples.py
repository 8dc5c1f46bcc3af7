"""
Tipos de dados partilhados: amostras SPD rotuladas e ensaios multicanal.
"""

from dataclasses import dataclass, replace

import numpy as np

from tools.errors import ValidationError
from tools.spd_linalg import _readonly, as_spd


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Par (matriz SPD, rótulo de classe)"""
    matrix: np.ndarray
    label: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_spd(self.matrix))
        object.__setattr__(self, "label", int(self.label))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class TrialSignal:
    """
    Segmento multicanal (canais × amostras) de um ensaio.

    trial_t0 é o instante absoluto (s) da primeira amostra na linha temporal do ensaio.
    """
    data: np.ndarray
    sample_rate: float
    label: int = 0
    trial_t0: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"Ensaio precisa de shape canais×amostras, recebido {data.shape}")
        if not self.sample_rate > 0:
            raise ValidationError(f"sample_rate tem de ser > 0, recebido {self.sample_rate}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("Ensaio contém valores não finitos")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "trial_t0", float(self.trial_t0))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.samples / self.sample_rate

    def with_data(self, data: np.ndarray, trial_t0: float | None = None) -> "TrialSignal":
        return replace(self, data=data, trial_t0=self.trial_t0 if trial_t0 is None else trial_t0)

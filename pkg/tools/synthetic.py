"""
Geradores sintéticos determinísticos (por semente).

Funcionalidades:
- Matrizes SPD e pontos de Stiefel aleatórios
- Conjuntos SPD rotulados (isotrópicos ou com bloco discriminativo)
- Ensaios multicanal com conteúdo discriminativo confinado a uma banda e janela
"""

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.signal

from tools.errors import ConfigurationError
from tools.samples import LabeledSample, TrialSignal
from tools.spd_linalg import eig_apply, symmetrize

STRUCTURES = ("isotropic", "block-discriminative")


def random_spd(dim: int, rng: np.random.Generator, condition: float = 10.0) -> np.ndarray:
    """SPD aleatória com número de condição ≤ condition"""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    w = np.exp(rng.uniform(-0.5, 0.5, dim) * np.log(condition))
    return symmetrize((Q * w) @ Q.T)


def random_stiefel(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Matriz n×m com colunas ortonormais (QR de uma gaussiana)"""
    Q, R = np.linalg.qr(rng.standard_normal((n, m)))
    return Q * np.sign(np.diag(R))


def random_unit_sym(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Simétrica aleatória com norma de Frobenius 1"""
    A = rng.standard_normal((dim, dim))
    S = symmetrize(A)
    return S / np.linalg.norm(S, "fro")


# ============================================================
# CONJUNTOS SPD
# ============================================================

@dataclass(frozen=True)
class SyntheticSpec:
    """Especificação de um conjunto SPD sintético"""
    n_classes: int = 4
    per_class: int = 30
    dim: int = 10
    block_dim: int = 4
    separation: float = 1.0
    noise: float = 0.1
    structure: str = "block-discriminative"
    rotate: bool = False
    seed: int = 0
    center_seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ConfigurationError(f"structure desconhecida: {self.structure}. Use: {STRUCTURES}")
        if self.n_classes < 1 or self.per_class < 1 or self.dim < 1:
            raise ConfigurationError("n_classes, per_class e dim têm de ser ≥ 1")
        if self.structure == "block-discriminative" and not 1 <= self.block_dim <= self.dim:
            raise ConfigurationError(f"block_dim tem de estar em [1, {self.dim}]")
        if self.noise < 0 or self.separation < 0:
            raise ConfigurationError("noise e separation têm de ser ≥ 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticDataset:
    samples: list[LabeledSample]
    centers: dict[int, np.ndarray]
    informative_basis: np.ndarray
    spec: SyntheticSpec = field(repr=False, default=None)


def _perturb(center: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Perturbação pelo mapa exp em coordenadas branqueadas no centro"""
    if noise == 0:
        return center.copy()
    E = noise * random_unit_sym(center.shape[0], rng)
    Cs = eig_apply(center, np.sqrt)
    return symmetrize(Cs @ eig_apply(E, np.exp) @ Cs)


def generate_spd_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """
    Gera amostras SPD como perturbações em torno de centros de classe.

    Os centros e a rotação dependem só de `center_seed`; o ruído depende de `seed`,
    pelo que conjuntos treino/teste partilham centros quando só `seed` muda.
    """
    rng_c = np.random.default_rng(spec.center_seed)
    rng = np.random.default_rng(spec.seed)

    block = spec.block_dim if spec.structure == "block-discriminative" else spec.dim
    cores = {c: eig_apply(spec.separation * random_unit_sym(block, rng_c), np.exp) for c in range(spec.n_classes)}

    R = random_stiefel(spec.dim, spec.dim, rng_c) if spec.rotate else np.eye(spec.dim)

    def embed(core: np.ndarray) -> np.ndarray:
        X = np.eye(spec.dim)
        X[:block, :block] = core
        return symmetrize(R @ X @ R.T) if spec.rotate else X

    samples = []
    for c in range(spec.n_classes):
        for _ in range(spec.per_class):
            samples.append(LabeledSample(embed(_perturb(cores[c], spec.noise, rng)), c))

    return SyntheticDataset(
        samples=samples,
        centers={c: embed(core) for c, core in cores.items()},
        informative_basis=R[:, :block].copy(),
        spec=spec,
    )


# ============================================================
# ENSAIOS MULTICANAL
# ============================================================

@dataclass(frozen=True)
class TrialSynthSpec:
    """
    Ensaios com ruído branco e, por classe, potência extra num canal
    limitada à banda `band` (Hz) e à janela `window` (s).
    """
    n_classes: int = 2
    per_class: int = 40
    channels: int = 4
    sample_rate: float = 128.0
    duration: float = 8.0
    trial_t0: float = 0.0
    band: tuple[float, float] = (10.0, 20.0)
    window: tuple[float, float] = (3.0, 5.0)
    amplitude: float = 0.4
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes > self.channels:
            raise ConfigurationError("É preciso pelo menos um canal por classe")
        if not 0 < self.band[0] < self.band[1] < self.sample_rate / 2:
            raise ConfigurationError(f"Banda inválida: {self.band}")
        if not self.trial_t0 <= self.window[0] < self.window[1] <= self.trial_t0 + self.duration:
            raise ConfigurationError(f"Janela fora do ensaio: {self.window}")

    def to_dict(self) -> dict:
        return asdict(self)


def generate_trials(spec: TrialSynthSpec) -> list[TrialSignal]:
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * spec.sample_rate))
    i0 = int(round((spec.window[0] - spec.trial_t0) * spec.sample_rate))
    i1 = int(round((spec.window[1] - spec.trial_t0) * spec.sample_rate))
    sos = scipy.signal.butter(4, spec.band, btype="bandpass", fs=spec.sample_rate, output="sos")

    trials = []
    for c in range(spec.n_classes):
        for _ in range(spec.per_class):
            data = spec.noise * rng.standard_normal((spec.channels, n))
            burst = scipy.signal.sosfiltfilt(sos, rng.standard_normal(n))
            burst /= np.std(burst)
            data[c, i0:i1] += spec.amplitude * burst[i0:i1]
            trials.append(TrialSignal(data, spec.sample_rate, label=c, trial_t0=spec.trial_t0))
    return trials

"""
DPLM - preservação da distância à média local.

Aprende uma projeção U (n×m, UᵀU = I) tal que, para cada amostra, a divergência
J entre cada vizinho e a média de Karcher da vizinhança se mantém após a
congruência UᵀXU.

Funcionalidades:
- Vizinhanças supervisionadas (mesma classe) ou não supervisionadas
- Objetivo H(U) e gradiente euclidiano vetorizados sobre os pares (i, j)
- Passo de Cayley que preserva a ortonormalidade
- Pesquisa curvilínea não monótona com passos Barzilai-Borwein
"""

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed

from tools.errors import (
    ConfigurationError,
    DataFormatError,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    SingularityError,
    ValidationError,
    schema_errors,
)
from tools.geometry import KarcherConfig, MetricKind, karcher_mean
from tools.samples import LabeledSample
from tools.spd_linalg import _readonly, as_stiefel, batched_logdet, congruence, stiefel_drift
from tools.synthetic import random_stiefel

logger = logging.getLogger(__name__)

INIT_MODES = ("identity", "random")


# ============================================================
# CONFIGURAÇÃO
# ============================================================

@dataclass(frozen=True)
class DplmConfig:
    """Configuração do DPLM e da pesquisa curvilínea"""
    target_dim: int
    k_neighbors: int = 5
    supervised: bool = True
    neighbor_metric: MetricKind = MetricKind.LOGDET
    max_outer_iterations: int = 200
    grad_norm_tol: float = 1e-5
    initial_step: float = 1e-3
    rho: float = 0.5
    armijo_c: float = 1e-4
    window: int = 5
    max_contractions: int = 30
    init: str = "identity"
    seed: int = 0
    karcher: KarcherConfig = field(default_factory=KarcherConfig)
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "neighbor_metric", MetricKind.parse(self.neighbor_metric))
        if self.target_dim < 1:
            raise ConfigurationError("target_dim tem de ser ≥ 1")
        if self.k_neighbors < 1:
            raise ConfigurationError("k_neighbors tem de ser ≥ 1")
        if self.max_outer_iterations < 0:
            raise ConfigurationError("max_outer_iterations tem de ser ≥ 0")
        if not (self.grad_norm_tol > 0 and self.initial_step > 0):
            raise ConfigurationError("grad_norm_tol e initial_step têm de ser > 0")
        if not 0 < self.rho < 1:
            raise ConfigurationError("rho tem de estar em (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ConfigurationError("armijo_c tem de estar em (0, 1)")
        if self.window < 1 or self.max_contractions < 1:
            raise ConfigurationError("window e max_contractions têm de ser ≥ 1")
        if self.init not in INIT_MODES:
            raise ConfigurationError(f"init desconhecido: {self.init}. Use: {INIT_MODES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["neighbor_metric"] = self.neighbor_metric.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DplmConfig":
        d = dict(d)
        if isinstance(d.get("karcher"), dict):
            d["karcher"] = KarcherConfig(**d["karcher"])
        return cls(**d)


# ============================================================
# VIZINHANÇAS
# ============================================================

@dataclass(frozen=True, eq=False)
class Neighborhood:
    """K vizinhos de uma amostra e a sua média de Karcher N̄ᵢ"""
    owner_index: int
    neighbor_indices: tuple[int, ...]
    local_mean: np.ndarray


def _pairwise_sq_distances(mats: np.ndarray, metric: MetricKind) -> np.ndarray:
    """Matriz simétrica de δ² entre todas as matrizes da pilha"""
    N = len(mats)
    D = np.zeros((N, N))
    if metric is MetricKind.LOGDET:
        ld = batched_logdet(mats)
        for a in range(N - 1):
            mids = (mats[a] + mats[a + 1:]) / 2
            D[a, a + 1:] = np.maximum(batched_logdet(mids) - 0.5 * (ld[a] + ld[a + 1:]), 0.0)
    else:
        for a in range(N - 1):
            for b in range(a + 1, N):
                D[a, b] = np.sum(np.log(scipy.linalg.eigvalsh(mats[a], mats[b])) ** 2)
    return D + D.T


def build_neighborhoods(samples: Sequence[LabeledSample], cfg: DplmConfig) -> list[Neighborhood]:
    """
    Uma vizinhança por amostra: os K mais próximos (excluindo a própria),
    restritos à mesma classe no modo supervisionado. Empates pela menor posição.

    Raises:
        ConfigurationError se uma classe (ou o conjunto) tiver ≤ K membros
    """
    K = cfg.k_neighbors
    N = len(samples)
    if N < K + 1:
        raise ConfigurationError(f"São precisas pelo menos K+1 = {K + 1} amostras, recebidas {N}")

    labels = np.array([s.label for s in samples])
    if cfg.supervised:
        groups = {c: np.flatnonzero(labels == c) for c in np.unique(labels)}
        for c, idx in groups.items():
            if len(idx) <= K:
                raise ConfigurationError(
                    f"Classe {c} tem {len(idx)} amostras; o modo supervisionado precisa de mais de K = {K}"
                )
    else:
        groups = {None: np.arange(N)}

    mats = np.stack([s.matrix for s in samples])
    neighbor_lists: dict[int, tuple[int, ...]] = {}
    for idx in groups.values():
        D = _pairwise_sq_distances(mats[idx], cfg.neighbor_metric)
        for row, owner in enumerate(idx):
            candidates = np.delete(np.arange(len(idx)), row)
            order = np.argsort(D[row, candidates], kind="stable")[:K]
            neighbor_lists[int(owner)] = tuple(int(idx[candidates[o]]) for o in order)

    owners = list(range(N))
    if cfg.n_jobs == 1:
        means = [karcher_mean([mats[j] for j in neighbor_lists[i]], cfg.karcher) for i in owners]
    else:
        means = Parallel(n_jobs=cfg.n_jobs)(
            delayed(karcher_mean)([mats[j] for j in neighbor_lists[i]], cfg.karcher) for i in owners
        )

    return [Neighborhood(i, neighbor_lists[i], means[i]) for i in owners]


# ============================================================
# OBJETIVO E GRADIENTE
# ============================================================

def _stacked_jbld(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """J por par: log det C - ½(log det A + log det B), com C = (A+B)/2"""
    return batched_logdet(C) - 0.5 * (batched_logdet(A) + batched_logdet(B))


def _solve_right(M: np.ndarray, XU: np.ndarray) -> np.ndarray:
    """XU · M⁻¹ por par (M simétrica)"""
    return np.swapaxes(np.linalg.solve(M, np.swapaxes(XU, -1, -2)), -1, -2)


class DplmProblem:
    """
    Pares (X_{i,j}, N̄ᵢ) empilhados e as divergências originais em cache.

    As divergências no espaço original são constantes da otimização e
    calculadas uma única vez.
    """

    def __init__(self, samples: Sequence[LabeledSample], neighborhoods: Sequence[Neighborhood]):
        if not samples or not neighborhoods:
            raise ValidationError("DPLM precisa de amostras e vizinhanças")
        self.n = samples[0].dim
        X, M, pairs = [], [], []
        for nb in neighborhoods:
            for j, idx in enumerate(nb.neighbor_indices):
                X.append(samples[idx].matrix)
                M.append(nb.local_mean)
                pairs.append((nb.owner_index, j))
        self.X = np.stack(X)
        self.M = np.stack(M)
        self.half_sum = (self.X + self.M) / 2
        self.pairs = pairs
        self.reference = _stacked_jbld(self.X, self.M, self.half_sum)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def _singular(self, e: NotPositiveDefiniteError) -> SingularityError:
        owner, j = self.pairs[e.index] if e.index is not None else (-1, -1)
        return SingularityError(f"Congruência projetada não é SPD no par (i={owner}, j={j})", owner, j)

    def _project(self, U: np.ndarray):
        XU, MU, SU = self.X @ U, self.M @ U, self.half_sum @ U
        Ut = U.T
        return XU, MU, SU, Ut @ XU, Ut @ MU, Ut @ SU

    def residuals(self, U: np.ndarray) -> np.ndarray:
        """J original - J projetada, por par"""
        *_, A, B, C = self._project(U)
        try:
            return self.reference - _stacked_jbld(A, B, C)
        except NotPositiveDefiniteError as e:
            raise self._singular(e) from e

    def evaluate(self, U: np.ndarray) -> float:
        """H(U) sem validação de U (aceita U fora da variedade)"""
        return float(np.sum(np.abs(self.residuals(U))))

    def gradient(self, U: np.ndarray) -> np.ndarray:
        """
        Gradiente euclidiano:
        -Σ sgn(rᵢⱼ) [(X+N̄)U(Uᵀ(X+N̄)U/2)⁻¹ - XU(UᵀXU)⁻¹ - N̄U(UᵀN̄U)⁻¹]
        com sgn(0) = 0.
        """
        XU, MU, SU, A, B, C = self._project(U)
        try:
            r = self.reference - _stacked_jbld(A, B, C)
        except NotPositiveDefiniteError as e:
            raise self._singular(e) from e
        D = 2.0 * _solve_right(C, SU) - _solve_right(A, XU) - _solve_right(B, MU)
        return -np.einsum("p,pij->ij", np.sign(r), D)


def _check_projection(U, n: int) -> np.ndarray:
    U = as_stiefel(U)
    if U.shape[0] != n:
        raise DimensionMismatchError(f"Projeção com {U.shape[0]} linhas para matrizes {n}×{n}")
    return U


def objective(U, neighborhoods: Sequence[Neighborhood], samples: Sequence[LabeledSample]) -> float:
    """H(U) = Σᵢ Σⱼ |J(X_{i,j}, N̄ᵢ) - J(UᵀX_{i,j}U, UᵀN̄ᵢU)|"""
    problem = DplmProblem(samples, neighborhoods)
    return problem.evaluate(_check_projection(U, problem.n))


def gradient(U, neighborhoods: Sequence[Neighborhood], samples: Sequence[LabeledSample]) -> np.ndarray:
    problem = DplmProblem(samples, neighborhoods)
    return problem.gradient(_check_projection(U, problem.n))


def jbld_projection_gradient(X: np.ndarray, Y: np.ndarray, U: np.ndarray) -> np.ndarray:
    """∂J(UᵀXU, UᵀYU)/∂U = (X+Y)U(Uᵀ(X+Y)U/2)⁻¹ - XU(UᵀXU)⁻¹ - YU(UᵀYU)⁻¹"""
    XU, YU = X @ U, Y @ U
    SU = (X + Y) @ U
    C = U.T @ SU / 2
    return (
        np.linalg.solve(C, SU.T).T
        - np.linalg.solve(U.T @ XU, XU.T).T
        - np.linalg.solve(U.T @ YU, YU.T).T
    )


# ============================================================
# PASSO DE CAYLEY
# ============================================================

def _cayley(U: np.ndarray, A: np.ndarray, tau: float) -> np.ndarray:
    half = tau / 2
    return np.linalg.solve(np.eye(U.shape[0]) + half * A, U - half * (A @ U))


def cayley_step(U, G, tau: float) -> np.ndarray:
    """
    Curva de Cayley Y(τ) = (I + τ/2·A)⁻¹(I - τ/2·A)U com A = GUᵀ - UGᵀ.

    Y(0) = U, dY/dτ(0) = -AU e Y(τ)ᵀY(τ) = I para todo τ ≥ 0.
    """
    U = as_stiefel(U)
    G = np.asarray(G, dtype=float)
    if G.shape != U.shape:
        raise DimensionMismatchError(f"Gradiente {G.shape} incompatível com U {U.shape}")
    if tau < 0:
        raise ValidationError("τ tem de ser ≥ 0")
    return _cayley(U, G @ U.T - U @ G.T, tau)


# ============================================================
# MODELO E RELATÓRIO
# ============================================================

@dataclass
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    step: float
    descent_sq: float
    contractions: int
    feasibility: float
    elapsed: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("elapsed")
        return d


@dataclass
class TrainingReport:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "converged"
    qr_rescues: int = 0
    best_iteration: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def initial_objective(self) -> float:
        return self.records[0].objective

    @property
    def best_objective(self) -> float:
        return self.records[self.best_iteration].objective

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "qr_rescues": self.qr_rescues,
            "best_iteration": self.best_iteration,
            "initial_objective": self.initial_objective,
            "best_objective": self.best_objective,
            "records": [r.to_dict(include_timing) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingReport":
        with schema_errors("Relatório de treino"):
            report = cls(
                records=[IterationRecord(**r) for r in d["records"]],
                status=d["status"],
                qr_rescues=int(d["qr_rescues"]),
                best_iteration=int(d["best_iteration"]),
            )
            if not report.records or not 0 <= report.best_iteration < len(report.records):
                raise DataFormatError("Relatório de treino sem registos ou best_iteration fora do intervalo")
        return report


@dataclass
class DplmModel:
    """Projeção aprendida e histórico de treino"""
    projection: np.ndarray
    report: TrainingReport
    config: DplmConfig

    @property
    def n(self) -> int:
        return self.projection.shape[0]

    @property
    def m(self) -> int:
        return self.projection.shape[1]

    def to_dict(self) -> dict:
        return {
            "kind": "dplm",
            "n": self.n,
            "m": self.m,
            "k_neighbors": self.config.k_neighbors,
            "projection": self.projection.tolist(),
            "config": self.config.to_dict(),
            "report": self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DplmModel":
        with schema_errors("Modelo DPLM"):
            if d.get("kind") != "dplm":
                raise DataFormatError(f"Esperado modelo 'dplm', recebido {d.get('kind')!r}")
            U = np.array(d["projection"], dtype=float)
            if U.ndim != 2 or U.shape != (d["n"], d["m"]):
                raise DataFormatError(f"Projeção {U.shape} não corresponde a n={d['n']}, m={d['m']}")
            return cls(
                projection=as_stiefel(U),
                report=TrainingReport.from_dict(d["report"]),
                config=DplmConfig.from_dict(d["config"]),
            )


def initial_projection(n: int, m: int, init: str = "identity", seed: int = 0) -> np.ndarray:
    """Seleção de coordenadas (uns na diagonal principal) ou QR de uma gaussiana semeada"""
    if init == "random":
        return random_stiefel(n, m, np.random.default_rng(seed))
    return np.eye(n)[:, :m]


# ============================================================
# TREINO
# ============================================================

def fit(samples: Sequence[LabeledSample], cfg: DplmConfig) -> DplmModel:
    """
    Aprende U minimizando H(U) sujeito a UᵀU = I.

    Em cada iteração: gradiente, curva de Cayley, pesquisa em τ com a regra
    H(Y(τ)) ≤ max(últimos `window` H) - c·τ·‖A‖²_F, e passo BB na iteração seguinte.
    Pára quando ‖G - U GᵀU‖_F < grad_norm_tol, ao fim de max_outer_iterations,
    ou quando a pesquisa falha max_contractions vezes ("stalled").

    Returns:
        DplmModel com o melhor iterado encontrado
    """
    if not samples:
        raise ValidationError("fit precisa de amostras")
    n = samples[0].dim
    for s in samples:
        if s.dim != n:
            raise DimensionMismatchError(f"Amostras com dimensões diferentes: {n} e {s.dim}")
    m = cfg.target_dim
    if m > n:
        raise ConfigurationError(f"target_dim = {m} excede a dimensão das amostras ({n})")

    t_start = time.perf_counter()
    neighborhoods = build_neighborhoods(samples, cfg)
    problem = DplmProblem(samples, neighborhoods)
    logger.info(
        "🧭 DPLM: N=%d, n=%d → m=%d, K=%d, %d pares (%.2fs a construir vizinhanças)",
        len(samples), n, m, cfg.k_neighbors, problem.n_pairs, time.perf_counter() - t_start,
    )

    U = initial_projection(n, m, cfg.init, cfg.seed)
    H = problem.evaluate(U)
    G = problem.gradient(U)
    dtU = G - U @ (G.T @ U)
    grad_norm = float(np.linalg.norm(dtU, "fro"))

    report = TrainingReport()
    report.records.append(IterationRecord(0, H, grad_norm, 0.0, 0.0, 0, stiefel_drift(U), time.perf_counter() - t_start))
    best_U, best_H = U, H
    history = deque([H], maxlen=cfg.window)
    tau = cfg.initial_step
    status = "max_iterations"

    for iteration in range(1, cfg.max_outer_iterations + 1):
        if grad_norm < cfg.grad_norm_tol:
            status = "converged"
            break

        A = G @ U.T - U @ G.T
        descent_sq = float(np.sum(A * A))
        reference = max(history)

        accepted = False
        for contractions in range(cfg.max_contractions + 1):
            Y = _cayley(U, A, tau)
            H_new = problem.evaluate(Y)
            if H_new <= reference - cfg.armijo_c * tau * descent_sq:
                accepted = True
                break
            if contractions < cfg.max_contractions:
                tau *= cfg.rho
        if not accepted:
            status = "stalled"
            logger.warning("⚠️ Pesquisa curvilínea falhou na iteração %d; a devolver o melhor iterado", iteration)
            break

        drift = stiefel_drift(Y)
        if drift > 1e-8:
            Q, R = np.linalg.qr(Y)
            Y = Q * np.sign(np.diag(R))
            H_new = problem.evaluate(Y)
            report.qr_rescues += 1
            drift = stiefel_drift(Y)

        G_new = problem.gradient(Y)
        dtY = G_new - Y @ (G_new.T @ Y)

        # passo Barzilai-Borwein alternado
        S = Y - U
        Z = dtY - dtU
        sy = abs(float(np.sum(S * Z)))
        if sy > 0:
            tau_next = float(np.sum(S * S)) / sy if iteration % 2 == 0 else sy / float(np.sum(Z * Z))
            tau_next = min(max(tau_next, 1e-10), 1e10)
        else:
            tau_next = cfg.initial_step

        U, G, dtU, H = Y, G_new, dtY, H_new
        grad_norm = float(np.linalg.norm(dtU, "fro"))
        history.append(H)
        report.records.append(IterationRecord(
            iteration, H, grad_norm, tau, descent_sq, contractions, drift, time.perf_counter() - t_start,
        ))
        if H < best_H:
            best_U, best_H = U, H
            report.best_iteration = iteration
        logger.debug("DPLM it %d: H=%.6g ‖∇‖=%.3g τ=%.3g", iteration, H, grad_norm, tau)
        tau = tau_next
    else:
        if grad_norm < cfg.grad_norm_tol:
            status = "converged"

    report.status = status
    logger.info(
        "🏁 DPLM %s após %d iterações: H %.6g → %.6g (%.2fs)",
        status, report.iterations, report.initial_objective, best_H, time.perf_counter() - t_start,
    )
    return DplmModel(projection=_readonly(best_U), report=report, config=cfg)


def transform(model: DplmModel, X) -> np.ndarray:
    """X' = UᵀXU"""
    return congruence(X, model.projection)


def transform_samples(model: DplmModel, samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    return [LabeledSample(transform(model, s.matrix), s.label) for s in samples]

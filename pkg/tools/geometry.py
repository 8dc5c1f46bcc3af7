"""
Métricas Riemannianas, divergências e média de Karcher na variedade SPD.

Funcionalidades:
- AIRM (métrica afim-invariante) e divergência LogDet de Jensen-Bregman (JBLD)
- Métrica LogDet √J
- Média de Karcher (AIRM) com passo reduzido por bissecção
- Mapas log/exp no espaço tangente
"""

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from tools.errors import ConfigurationError, ConvergenceError, ValidationError
from tools.spd_linalg import (
    _readonly,
    as_spd,
    as_sym,
    check_same_dim,
    eig_apply,
    logdet,
    spd_inv_sqrt,
    spd_sqrt,
    symmetrize,
)

logger = logging.getLogger(__name__)


class MetricKind(str, Enum):
    """Métrica usada nas operações que medem distância"""
    AIRM = "airm"
    LOGDET = "logdet"

    @classmethod
    def parse(cls, value: "str | MetricKind") -> "MetricKind":
        try:
            return cls(value.lower() if isinstance(value, str) else value)
        except ValueError:
            raise ConfigurationError(f"Métrica desconhecida: {value}. Use: {[m.value for m in cls]}")


@dataclass(frozen=True)
class KarcherConfig:
    """Configuração da iteração de ponto fixo da média de Karcher"""
    max_iterations: int = 50
    tolerance: float = 1e-9
    step_size: float = 1.0
    max_halvings: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations tem de ser ≥ 1")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance tem de ser > 0")
        if not 0 < self.step_size <= 1:
            raise ConfigurationError("step_size tem de estar em (0, 1]")


# ============================================================
# DISTÂNCIAS
# ============================================================

def airm_sq(X, Y) -> float:
    """
    Quadrado da distância AIRM: ‖log(Y^{-1/2} X Y^{-1/2})‖²_F.
    """
    X, Y = as_spd(X), as_spd(Y)
    check_same_dim(X, Y)
    Yi = spd_inv_sqrt(Y)
    w = np.linalg.eigvalsh(symmetrize(Yi @ X @ Yi))
    return float(np.sum(np.log(w) ** 2))


def airm_distance(X, Y) -> float:
    return float(np.sqrt(airm_sq(X, Y)))


def jbld(X, Y) -> float:
    """
    Divergência LogDet de Jensen-Bregman:
    J(X, Y) = log det((X+Y)/2) - ½(log det X + log det Y)
    """
    X, Y = as_spd(X), as_spd(Y)
    check_same_dim(X, Y)
    J = logdet((X + Y) / 2) - 0.5 * (logdet(X) + logdet(Y))
    return max(0.0, J)


def logdet_metric(X, Y) -> float:
    """Métrica LogDet δ_ld = √J"""
    return float(np.sqrt(jbld(X, Y)))


def squared_distance(X, Y, metric: MetricKind = MetricKind.LOGDET) -> float:
    """δ² na métrica escolhida (AIRM → airm_sq, LOGDET → J)"""
    metric = MetricKind.parse(metric)
    if metric is MetricKind.AIRM:
        return airm_sq(X, Y)
    return jbld(X, Y)


def distance(X, Y, metric: MetricKind = MetricKind.AIRM) -> float:
    return float(np.sqrt(squared_distance(X, Y, metric)))


# ============================================================
# ESPAÇO TANGENTE
# ============================================================

def tangent_log(base, X) -> np.ndarray:
    """B^{1/2} log(B^{-1/2} X B^{-1/2}) B^{1/2}"""
    base, X = as_spd(base), as_spd(X)
    check_same_dim(base, X)
    Bs, Bi = spd_sqrt(base), spd_inv_sqrt(base)
    return _readonly(symmetrize(Bs @ eig_apply(symmetrize(Bi @ X @ Bi), np.log) @ Bs))


def tangent_exp(base, S) -> np.ndarray:
    """B^{1/2} exp(B^{-1/2} S B^{-1/2}) B^{1/2}"""
    base, S = as_spd(base), as_sym(S)
    check_same_dim(base, S)
    Bs, Bi = spd_sqrt(base), spd_inv_sqrt(base)
    return _readonly(symmetrize(Bs @ eig_apply(symmetrize(Bi @ S @ Bi), np.exp) @ Bs))


def geodesic(A, B, t: float) -> np.ndarray:
    """Ponto t da geodésica AIRM de A para B: A^{1/2}(A^{-1/2} B A^{-1/2})^t A^{1/2}"""
    A, B = as_spd(A), as_spd(B)
    check_same_dim(A, B)
    As, Ai = spd_sqrt(A), spd_inv_sqrt(A)
    return _readonly(symmetrize(As @ eig_apply(symmetrize(Ai @ B @ Ai), lambda w: w ** t) @ As))


# ============================================================
# MÉDIA DE KARCHER
# ============================================================

def _content_hash(X: np.ndarray) -> str:
    """Hash do conteúdo para ordenação determinística"""
    return hashlib.md5(np.ascontiguousarray(X).tobytes()).hexdigest()


def _karcher_cost(P: np.ndarray, points: Sequence[np.ndarray]) -> float:
    Pi = eig_apply(P, lambda w: 1.0 / np.sqrt(w))
    return float(sum(np.sum(np.log(np.linalg.eigvalsh(symmetrize(Pi @ X @ Pi))) ** 2) for X in points))


def karcher_mean(points: Sequence, cfg: KarcherConfig | None = None) -> np.ndarray:
    """
    Média geométrica (Karcher) na métrica AIRM.

    Iteração de ponto fixo a partir da média aritmética:
        P ← P^{1/2} exp(passo · (1/N) Σ log(P^{-1/2} Pᵢ P^{-1/2})) P^{1/2}
    O passo é reduzido a metade (até max_halvings vezes) quando o custo sobe.

    Args:
        points: Lista não vazia de matrizes SPD da mesma dimensão
        cfg: Configuração (defaults: 50 iterações, tolerância 1e-9, passo 1.0)

    Raises:
        ConvergenceError com o último iterado e o resíduo
    """
    cfg = cfg or KarcherConfig()
    if len(points) == 0:
        raise ValidationError("Média de Karcher de uma lista vazia")

    mats = [as_spd(X) for X in points]
    for X in mats[1:]:
        check_same_dim(mats[0], X)

    if all(np.array_equal(mats[0], X) for X in mats[1:]):
        return mats[0]

    # Ordem de soma fixa: a média não depende da ordem de entrada
    mats = sorted(mats, key=_content_hash)
    N = len(mats)

    P = symmetrize(sum(mats) / N)
    residual = np.inf
    for iteration in range(cfg.max_iterations):
        Ps = eig_apply(P, np.sqrt)
        Pi = eig_apply(P, lambda w: 1.0 / np.sqrt(w))

        T = np.zeros_like(P)
        for X in mats:
            T += eig_apply(symmetrize(Pi @ X @ Pi), np.log)
        T /= N

        residual = float(np.linalg.norm(T, "fro"))
        if residual < cfg.tolerance:
            logger.debug("Karcher convergiu em %d iterações (resíduo %.2e)", iteration, residual)
            return _readonly(P)

        step = cfg.step_size
        # folga relativa: perto do ótimo a variação do custo fica abaixo do arredondamento
        cost = _karcher_cost(P, mats) * (1 + 1e-10)
        for _ in range(cfg.max_halvings + 1):
            P_new = symmetrize(Ps @ eig_apply(step * T, np.exp) @ Ps)
            if _karcher_cost(P_new, mats) <= cost:
                break
            step /= 2
        P = P_new

    raise ConvergenceError(
        f"Média de Karcher não convergiu em {cfg.max_iterations} iterações (resíduo {residual:.3e})",
        last_iterate=_readonly(P),
        residual=residual,
        iterations=cfg.max_iterations,
    )

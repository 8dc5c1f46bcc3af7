"""
Primitivas de álgebra linear simétrica para matrizes SPD.

Funcionalidades:
- Validação de matrizes simétricas, SPD e pontos de Stiefel
- Funções de matriz via decomposição espectral (log, exp, sqrt, potência)
- log det por Cholesky (simples e em lote)
- Congruência UᵀXU

Todas as funções são puras; os tipos validados são ndarrays só-de-leitura.
"""

from typing import Callable

import numpy as np
import scipy.linalg

from tools.errors import (
    DimensionMismatchError,
    NotPositiveDefiniteError,
    ValidationError,
)

# Tolerâncias
SYM_TOL = 1e-10         # absoluta, max|M - Mᵀ|
SPD_RTOL = 1e-12        # λ_min > SPD_RTOL · λ_max
STIEFEL_TOL = 1e-8      # ‖UᵀU - I‖_F


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def symmetrize(M: np.ndarray) -> np.ndarray:
    """(M + Mᵀ)/2 sem validação"""
    return (M + np.swapaxes(M, -1, -2)) / 2


# ============================================================
# VALIDAÇÃO
# ============================================================

def as_sym(M) -> np.ndarray:
    """
    Valida uma matriz simétrica.

    Assimetria abaixo de SYM_TOL é absorvida por (M + Mᵀ)/2; acima disso é rejeitada.

    Returns:
        Cópia simétrica só-de-leitura
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValidationError(f"Esperada matriz quadrada não vazia, recebido shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("Matriz contém valores não finitos")

    asym = np.max(np.abs(M - M.T))
    if asym > SYM_TOL:
        raise ValidationError(f"Matriz não simétrica (max|M - Mᵀ| = {asym:.3e})")
    return _readonly(symmetrize(M))


def _check_positive(w: np.ndarray, what: str = "Matriz") -> None:
    if w[-1] <= 0 or w[0] <= SPD_RTOL * w[-1]:
        raise NotPositiveDefiniteError(
            f"{what} não é definida positiva (λ_min = {w[0]:.3e}, λ_max = {w[-1]:.3e})"
        )


def as_spd(X) -> np.ndarray:
    """Valida uma matriz SPD (simétrica, λ_min > 1e-12·λ_max)"""
    X = as_sym(X)
    _check_positive(scipy.linalg.eigvalsh(X))
    return X


def as_stiefel(U) -> np.ndarray:
    """Valida um ponto de Stiefel n×m (UᵀU = I_m)"""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 1 or U.shape[1] > U.shape[0]:
        raise ValidationError(f"Ponto de Stiefel precisa de shape n×m com 1 ≤ m ≤ n, recebido {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValidationError("Ponto de Stiefel contém valores não finitos")

    drift = stiefel_drift(U)
    if drift >= STIEFEL_TOL:
        raise ValidationError(f"Colunas não ortonormais (‖UᵀU - I‖_F = {drift:.3e})")
    return _readonly(U)


def stiefel_drift(U: np.ndarray) -> float:
    """‖UᵀU - I_m‖_F"""
    return float(np.linalg.norm(U.T @ U - np.eye(U.shape[1]), "fro"))


def check_same_dim(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape != Y.shape:
        raise DimensionMismatchError(f"Dimensões incompatíveis: {X.shape} vs {Y.shape}")


# ============================================================
# DECOMPOSIÇÃO E FUNÇÕES DE MATRIZ
# ============================================================

def sym_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """
    Decomposição espectral de uma matriz simétrica.

    Returns:
        (valores próprios ascendentes, vetores próprios ortonormais em colunas)
    """
    M = as_sym(M)
    w, V = scipy.linalg.eigh(M)
    return w, V


def _apply(w: np.ndarray, V: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    return symmetrize((V * fn(w)) @ V.T)


def eig_apply(M: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """V f(Λ) Vᵀ sem validação (caminho interno)"""
    w, V = np.linalg.eigh(M)
    return _apply(w, V, fn)


def _spd_eig(X) -> tuple[np.ndarray, np.ndarray]:
    w, V = sym_eig(X)
    _check_positive(w)
    return w, V


def spd_log(X) -> np.ndarray:
    """Logaritmo de matriz de uma SPD"""
    w, V = _spd_eig(X)
    return _readonly(_apply(w, V, np.log))


def spd_exp(S) -> np.ndarray:
    """Exponencial de matriz de uma simétrica (resultado SPD por construção)"""
    w, V = sym_eig(S)
    return _readonly(_apply(w, V, np.exp))


def spd_sqrt(X) -> np.ndarray:
    w, V = _spd_eig(X)
    return _readonly(_apply(w, V, np.sqrt))


def spd_inv_sqrt(X) -> np.ndarray:
    w, V = _spd_eig(X)
    return _readonly(_apply(w, V, lambda x: 1.0 / np.sqrt(x)))


def spd_power(X, t: float) -> np.ndarray:
    w, V = _spd_eig(X)
    return _readonly(_apply(w, V, lambda x: x ** t))


# ============================================================
# LOG DET
# ============================================================

def logdet(X) -> float:
    """log det por fatorização de Cholesky: 2·Σ log diag(L)"""
    X = as_sym(X)
    try:
        L = scipy.linalg.cholesky(X, lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"Cholesky falhou: {e}") from e
    d = np.diag(L)
    if np.any(d <= 0):
        raise NotPositiveDefiniteError("Cholesky com diagonal não positiva")
    return float(2.0 * np.sum(np.log(d)))


def batched_logdet(stack: np.ndarray) -> np.ndarray:
    """
    log det de uma pilha (P, d, d) de SPD, sem validação de simetria.

    Raises:
        NotPositiveDefiniteError com `index` do primeiro elemento que falha
    """
    try:
        L = np.linalg.cholesky(stack)
    except np.linalg.LinAlgError:
        for p, M in enumerate(stack):
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(f"Elemento {p} da pilha não é SPD", index=p)
        raise
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


# ============================================================
# CONGRUÊNCIA
# ============================================================

def congruence(X, U) -> np.ndarray:
    """
    UᵀXU para U com colunas ortonormais.

    Returns:
        Matriz SPD m×m validada
    """
    X = as_spd(X)
    U = as_stiefel(U)
    if U.shape[0] != X.shape[0]:
        raise DimensionMismatchError(
            f"Projeção com {U.shape[0]} linhas incompatível com matriz {X.shape[0]}×{X.shape[0]}"
        )
    return as_spd(symmetrize(U.T @ X @ U))

"""
Processador de sinais para descritores de covariância.

Funcionalidades:
- Filtro passa-banda de fase zero (ida e volta)
- Extração de janelas temporais na linha temporal do ensaio
- Descritor de covariância C = XXᵀ/(N-1) com shrinkage para a identidade escalada
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from tools.errors import (
    ConfigurationError,
    NotPositiveDefiniteError,
    SignalTooShortError,
    ValidationError,
    WindowOutOfRangeError,
)
from tools.samples import TrialSignal
from tools.spd_linalg import as_spd, symmetrize

FILTER_FAMILIES = ("butter", "bessel", "cheby1", "cheby2", "ellip")


@dataclass(frozen=True)
class FilterConfig:
    """Família e ordem do filtro IIR passa-banda"""
    order: int = 4
    family: str = "butter"
    ripple_db: float = 0.5        # cheby1 / ellip
    attenuation_db: float = 40.0  # cheby2 / ellip

    def __post_init__(self):
        if self.order < 1:
            raise ConfigurationError("Ordem do filtro tem de ser ≥ 1")
        if self.family not in FILTER_FAMILIES:
            raise ConfigurationError(f"Família de filtro desconhecida: {self.family}. Use: {FILTER_FAMILIES}")


def design_bandpass(low: float, high: float, sample_rate: float, cfg: FilterConfig | None = None) -> np.ndarray:
    """
    Desenha o filtro em secções de segunda ordem.

    Raises:
        ValidationError se a banda não cumprir 0 < low < high < fs/2
    """
    cfg = cfg or FilterConfig()
    nyquist = sample_rate / 2
    if not 0 < low < high < nyquist:
        raise ValidationError(f"Banda inválida [{low}, {high}] Hz para Nyquist {nyquist} Hz")
    return scipy.signal.iirfilter(
        cfg.order,
        [low, high],
        btype="bandpass",
        ftype=cfg.family,
        rp=cfg.ripple_db,
        rs=cfg.attenuation_db,
        fs=sample_rate,
        output="sos",
    )


def bandpass(signal: TrialSignal, low: float, high: float, cfg: FilterConfig | None = None) -> TrialSignal:
    """
    Filtro passa-banda de fase zero por canal (sosfiltfilt).

    O comprimento de saída é igual ao de entrada.

    Raises:
        ValidationError: banda inválida
        SignalTooShortError: sinal mais curto que o aquecimento do filtro
    """
    sos = design_bandpass(low, high, signal.sample_rate, cfg)
    padlen = 3 * (2 * len(sos) + 1)
    if signal.samples <= padlen:
        raise SignalTooShortError(
            f"Sinal com {signal.samples} amostras; o filtro precisa de mais de {padlen}"
        )
    filtered = scipy.signal.sosfiltfilt(sos, signal.data, axis=-1, padlen=padlen)
    return signal.with_data(filtered)


def extract_window(signal: TrialSignal, start: float, end: float) -> TrialSignal:
    """
    Extrai as amostras [round((start - t0)·fs), round((end - t0)·fs)).

    Raises:
        WindowOutOfRangeError se a janela sair do ensaio ou ficar vazia
    """
    i0 = int(np.rint((start - signal.trial_t0) * signal.sample_rate))
    i1 = int(np.rint((end - signal.trial_t0) * signal.sample_rate))
    if not 0 <= i0 < i1 <= signal.samples:
        raise WindowOutOfRangeError(
            f"Janela [{start}, {end}] s fora do ensaio "
            f"[{signal.trial_t0}, {signal.trial_t0 + signal.duration}] s"
        )
    return signal.with_data(signal.data[:, i0:i1], trial_t0=signal.trial_t0 + i0 / signal.sample_rate)


def covariance_descriptor(signal: TrialSignal, shrinkage: float = 0.01) -> np.ndarray:
    """
    C = XXᵀ/(N-1), seguido de (1-γ)C + γ·(tr C / canais)·I.

    Args:
        signal: Ensaio (canais × N)
        shrinkage: γ em [0, 1)

    Raises:
        NotPositiveDefiniteError se C não for SPD
    """
    if not 0 <= shrinkage < 1:
        raise ConfigurationError(f"shrinkage tem de estar em [0, 1), recebido {shrinkage}")
    if signal.samples < 2:
        raise ValidationError("Covariância precisa de pelo menos 2 amostras")

    X = signal.data
    C = symmetrize(X @ X.T) / (signal.samples - 1)
    if shrinkage > 0:
        C = (1 - shrinkage) * C + shrinkage * (np.trace(C) / signal.channels) * np.eye(signal.channels)

    try:
        return as_spd(C)
    except NotPositiveDefiniteError as e:
        hint = " Use shrinkage > 0." if shrinkage == 0 else ""
        raise NotPositiveDefiniteError(f"Covariância não é SPD ({e}).{hint}") from e

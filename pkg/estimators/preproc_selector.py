"""
Seleção de pré-processamento e de dimensão por validação cruzada.

Funcionalidades:
- Pipeline filtro → janela → covariância por ensaio
- Validação cruzada estratificada com registo das dobras
- Grelha de janelas × bandas avaliada com MDM; média dos K melhores casos
- Escolha da dimensão alvo do DPLM por validação cruzada
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold

from estimators.classifiers import (
    CLASSIFIERS,
    Classifier,
    confusion,
    kappa,
    predict,
    train_classifier,
)
from estimators.dplm import DplmConfig, fit, transform_samples
from tools.errors import ConfigurationError, WindowOutOfRangeError
from tools.geometry import KarcherConfig, MetricKind
from tools.samples import LabeledSample, TrialSignal
from tools.signal_processor import FilterConfig, bandpass, covariance_descriptor, extract_window

logger = logging.getLogger(__name__)


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """start, start+step, …, stop (inclusivo, arredondado a 10 casas)"""
    n = int(round((stop - start) / step)) + 1
    return tuple(float(round(start + i * step, 10)) for i in range(n))


# ============================================================
# TIPOS
# ============================================================

@dataclass(frozen=True)
class PreprocSpec:
    """Janela [window_start, window_end) em segundos e banda [band_low, band_high] em Hz"""
    window_start: float
    window_end: float
    band_low: float
    band_high: float

    def __post_init__(self):
        if not self.window_end > self.window_start:
            raise ConfigurationError(f"Janela inválida: [{self.window_start}, {self.window_end}]")
        if not 0 < self.band_low < self.band_high:
            raise ConfigurationError(f"Banda inválida: [{self.band_low}, {self.band_high}]")

    @property
    def window_length(self) -> float:
        return self.window_end - self.window_start

    def check_sample_rate(self, sample_rate: float) -> None:
        if not self.band_high < sample_rate / 2:
            raise ConfigurationError(f"Banda até {self.band_high} Hz acima de Nyquist ({sample_rate / 2} Hz)")

    @classmethod
    def preset(cls, name: str) -> "PreprocSpec":
        """Presets nomeados ("fixed": 8-35 Hz, 3.75-5.75 s)"""
        presets = {
            "fixed": cls(window_start=3.75, window_end=5.75, band_low=8.0, band_high=35.0),
        }
        if name not in presets:
            raise ConfigurationError(f"Preset desconhecido: {name}. Use: {list(presets)}")
        return presets[name]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocSpec":
        return cls(**{k: float(d[k]) for k in ("window_start", "window_end", "band_low", "band_high")})


@dataclass(frozen=True)
class GridSearchConfig:
    """Grelha de casos de teste e parâmetros da validação cruzada"""
    window_starts: tuple[float, ...] = _grid(3.0, 3.5, 0.05)
    window_lengths: tuple[float, ...] = _grid(1.0, 4.0, 0.25)
    bands: tuple[tuple[float, float], ...] = ((5.0, 30.0), (5.0, 35.0), (8.0, 30.0), (8.0, 35.0))
    folds: int = 10
    top_k: int = 10
    seed: int = 0
    shrinkage: float = 0.01
    metric: MetricKind = MetricKind.AIRM
    filter: FilterConfig = field(default_factory=FilterConfig)
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "window_starts", tuple(float(s) for s in self.window_starts))
        object.__setattr__(self, "window_lengths", tuple(float(s) for s in self.window_lengths))
        object.__setattr__(self, "bands", tuple((float(lo), float(hi)) for lo, hi in self.bands))
        object.__setattr__(self, "metric", MetricKind.parse(self.metric))
        if not (self.window_starts and self.window_lengths and self.bands):
            raise ConfigurationError("window_starts, window_lengths e bands não podem estar vazios")
        if any(length <= 0 for length in self.window_lengths):
            raise ConfigurationError("window_lengths têm de ser > 0")
        if self.folds < 2:
            raise ConfigurationError("folds tem de ser ≥ 2")
        if self.top_k < 1:
            raise ConfigurationError("top_k tem de ser ≥ 1")
        if not 0 <= self.shrinkage < 1:
            raise ConfigurationError("shrinkage tem de estar em [0, 1)")

    def cases(self) -> list[PreprocSpec]:
        """Casos de teste por ordem banda → início → comprimento"""
        return [
            PreprocSpec(start, start + length, low, high)
            for low, high in self.bands
            for start in self.window_starts
            for length in self.window_lengths
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metric"] = self.metric.value
        d["bands"] = [list(b) for b in self.bands]
        d["window_starts"] = list(self.window_starts)
        d["window_lengths"] = list(self.window_lengths)
        return d


# ============================================================
# PIPELINE
# ============================================================

def run_pipeline(
    trials: Sequence[TrialSignal],
    spec: PreprocSpec,
    shrinkage: float = 0.01,
    filter_cfg: Optional[FilterConfig] = None,
) -> list[LabeledSample]:
    """bandpass → extract_window → covariance_descriptor por ensaio, mantendo ordem e rótulos"""
    out = []
    for trial in trials:
        spec.check_sample_rate(trial.sample_rate)
        filtered = bandpass(trial, spec.band_low, spec.band_high, filter_cfg)
        window = extract_window(filtered, spec.window_start, spec.window_end)
        out.append(LabeledSample(covariance_descriptor(window, shrinkage), trial.label))
    return out


# ============================================================
# VALIDAÇÃO CRUZADA
# ============================================================

@dataclass
class FoldRecord:
    train_indices: list[int]
    test_indices: list[int]
    accuracy: float


@dataclass
class CrossValidationResult:
    accuracy: float
    kappa: float
    folds: list[FoldRecord]
    seed: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "seed": self.seed,
            "fold_accuracies": [f.accuracy for f in self.folds],
        }


def _check_folds(labels: Sequence[int], folds: int) -> None:
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    for c, n in zip(values, counts):
        if n < folds:
            raise ConfigurationError(
                f"Classe {c} tem {n} ensaio(s); a validação estratificada com {folds} dobras precisa de ≥ {folds}"
            )


def cross_validate(
    samples: Sequence[LabeledSample],
    folds: int = 10,
    seed: int = 0,
    trainer: Optional[Callable[[list[LabeledSample]], Classifier]] = None,
    predictor: Callable[[Classifier, np.ndarray], int] = predict,
) -> CrossValidationResult:
    """
    Validação cruzada estratificada.

    O treino de cada dobra só vê as amostras de treino dessa dobra; as dobras
    (índices de treino e teste) ficam registadas no resultado.

    Args:
        trainer: Função de treino (default: MDM com métrica AIRM)
    """
    trainer = trainer or (lambda train: train_classifier("mdm", train))
    labels = [s.label for s in samples]
    _check_folds(labels, folds)

    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    records = []
    y_true, y_pred = [], []
    for train_idx, test_idx in skf.split(np.zeros(len(labels)), labels):
        model = trainer([samples[i] for i in train_idx])
        preds = [predictor(model, samples[i].matrix) for i in test_idx]
        truth = [labels[i] for i in test_idx]
        records.append(FoldRecord(
            train_indices=[int(i) for i in train_idx],
            test_indices=[int(i) for i in test_idx],
            accuracy=float(np.mean(np.array(preds) == np.array(truth))),
        ))
        y_true.extend(truth)
        y_pred.extend(preds)

    conf = confusion(y_true, y_pred, sorted(set(labels)))
    return CrossValidationResult(
        accuracy=float(np.trace(conf) / conf.sum()),
        kappa=kappa(conf).value,
        folds=records,
        seed=seed,
    )


# ============================================================
# SELEÇÃO DE PRÉ-PROCESSAMENTO
# ============================================================

@dataclass(frozen=True)
class CaseResult:
    spec: PreprocSpec
    accuracy: float

    def rank_key(self) -> tuple:
        s = self.spec
        return (-self.accuracy, s.band_low, s.window_start, s.window_length, s.band_high)

    def to_dict(self) -> dict:
        return {**self.spec.to_dict(), "accuracy": self.accuracy}


@dataclass
class PreprocSelection:
    """PreprocSpec escolhida (média dos top_k) e a classificação completa dos casos"""
    spec: PreprocSpec
    ranking: list[CaseResult]
    top_k: int
    seed: int
    n_cases: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "top_k": self.top_k,
            "seed": self.seed,
            "n_cases": self.n_cases,
            "skipped": self.skipped,
            "ranking": [r.to_dict() for r in self.ranking],
        }


def _evaluate_case(filtered: Sequence[TrialSignal], spec: PreprocSpec, cfg: GridSearchConfig) -> CaseResult:
    samples = [
        LabeledSample(covariance_descriptor(extract_window(t, spec.window_start, spec.window_end), cfg.shrinkage), t.label)
        for t in filtered
    ]
    result = cross_validate(
        samples,
        cfg.folds,
        cfg.seed,
        trainer=lambda train: train_classifier("mdm", train, cfg.metric),
    )
    return CaseResult(spec, result.accuracy)


def _fits_trials(spec: PreprocSpec, trials: Sequence[TrialSignal]) -> bool:
    for t in trials:
        i0 = int(np.rint((spec.window_start - t.trial_t0) * t.sample_rate))
        i1 = int(np.rint((spec.window_end - t.trial_t0) * t.sample_rate))
        if not 0 <= i0 < i1 <= t.samples:
            return False
    return True


def select_preproc(trials: Sequence[TrialSignal], cfg: Optional[GridSearchConfig] = None) -> PreprocSelection:
    """
    Avalia cada caso (janela, banda) com validação cruzada MDM e devolve a
    média aritmética dos top_k casos.

    Ordenação: exatidão desc, band_low asc, window_start asc, window_length asc, band_high asc.
    Casos cuja janela sai dos ensaios são ignorados (contados em `skipped`).
    """
    cfg = cfg or GridSearchConfig()
    _check_folds([t.label for t in trials], cfg.folds)

    cases = cfg.cases()
    for spec in cases:
        for t in trials:
            spec.check_sample_rate(t.sample_rate)
    valid = [c for c in cases if _fits_trials(c, trials)]
    skipped = len(cases) - len(valid)
    if not valid:
        raise WindowOutOfRangeError("Nenhuma janela da grelha cabe nos ensaios")
    if skipped:
        logger.warning("⚠️ %d caso(s) ignorados: janela fora dos ensaios", skipped)

    t_start = time.perf_counter()
    logger.info("🔎 Grelha: %d casos, %d ensaios, %d dobras", len(valid), len(trials), cfg.folds)

    # filtragem uma vez por banda
    filtered_by_band = {}
    for band in cfg.bands:
        filtered_by_band[band] = [bandpass(t, band[0], band[1], cfg.filter) for t in trials]

    jobs = [(filtered_by_band[(c.band_low, c.band_high)], c) for c in valid]
    if cfg.n_jobs == 1:
        results = [_evaluate_case(f, c, cfg) for f, c in jobs]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(_evaluate_case)(f, c, cfg) for f, c in jobs)

    ranking = sorted(results, key=CaseResult.rank_key)
    top = ranking[: cfg.top_k]
    spec = PreprocSpec(
        window_start=float(np.mean([r.spec.window_start for r in top])),
        window_end=float(np.mean([r.spec.window_end for r in top])),
        band_low=float(np.mean([r.spec.band_low for r in top])),
        band_high=float(np.mean([r.spec.band_high for r in top])),
    )
    logger.info(
        "✅ Pré-processamento: %.3f-%.3f s, %.3g-%.3g Hz (melhor exatidão %.3f, %.2fs)",
        spec.window_start, spec.window_end, spec.band_low, spec.band_high,
        ranking[0].accuracy, time.perf_counter() - t_start,
    )
    return PreprocSelection(
        spec=spec,
        ranking=ranking,
        top_k=len(top),
        seed=cfg.seed,
        n_cases=len(valid),
        skipped=skipped,
    )


# ============================================================
# SELEÇÃO DA DIMENSÃO
# ============================================================

@dataclass
class DimensionSelection:
    target_dim: int
    scores: dict[int, float]
    folds: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "target_dim": self.target_dim,
            "folds": self.folds,
            "seed": self.seed,
            "kappa_by_dim": {str(m): k for m, k in sorted(self.scores.items())},
        }


def select_dimension(
    samples: Sequence[LabeledSample],
    dims: Sequence[int],
    dplm_cfg: DplmConfig,
    folds: int = 10,
    seed: int = 0,
    classifier: str = "mdm",
    metric: MetricKind = MetricKind.AIRM,
    karcher: Optional[KarcherConfig] = None,
) -> DimensionSelection:
    """
    Kappa médio por validação cruzada para cada m candidato; em cada dobra o
    DPLM é ajustado só no treino. Empates vão para o menor m.
    """
    if not dims:
        raise ConfigurationError("Lista de dimensões candidatas vazia")
    if classifier not in CLASSIFIERS:
        raise ConfigurationError(f"Classificador desconhecido: {classifier}. Use: {CLASSIFIERS}")
    n = samples[0].dim
    for m in dims:
        if not 1 <= m <= n:
            raise ConfigurationError(f"Dimensão candidata {m} fora de [1, {n}]")

    labels = [s.label for s in samples]
    _check_folds(labels, folds)
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(skf.split(np.zeros(len(labels)), labels))

    scores = {}
    for m in sorted(set(dims)):
        cfg = replace(dplm_cfg, target_dim=m)
        y_true, y_pred = [], []
        for train_idx, test_idx in splits:
            train = [samples[i] for i in train_idx]
            test = [samples[i] for i in test_idx]
            model = fit(train, cfg)
            clf = train_classifier(classifier, transform_samples(model, train), metric, karcher=karcher)
            y_pred.extend(predict(clf, s.matrix) for s in transform_samples(model, test))
            y_true.extend(s.label for s in test)
        scores[m] = kappa(confusion(y_true, y_pred, sorted(set(labels)))).value
        logger.info("📐 m=%d: kappa CV %.3f", m, scores[m])

    best = max(sorted(scores), key=lambda m: (scores[m], -m))
    return DimensionSelection(target_dim=best, scores=scores, folds=folds, seed=seed)

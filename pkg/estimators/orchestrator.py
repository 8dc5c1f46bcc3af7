"""
Orquestrador de sessões completas e do benchmark de tempo por iteração.

Sessão: ensaios de treino/teste → pré-processamento (grelha ou preset) →
descritores → (opcional) escolha de m → DPLM → MDM/FGMDM → kappa.
"""

import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from config.run_config import RunConfig
from estimators.classifiers import evaluate, train_classifier
from estimators.dplm import DplmProblem, build_neighborhoods, fit, initial_projection, transform_samples
from estimators.preproc_selector import PreprocSpec, run_pipeline, select_dimension, select_preproc
from tools.errors import ConfigurationError
from tools.samples import LabeledSample, TrialSignal
from tools.synthetic import SyntheticSpec, generate_spd_dataset

logger = logging.getLogger(__name__)


@dataclass
class SessionInput:
    """Ensaios de uma sessão (treino e avaliação)"""
    train_trials: list[TrialSignal]
    test_trials: list[TrialSignal]
    preproc: Optional[PreprocSpec] = None     # janela e banda já escolhidas (ex.: relatório de preproc-select)

    def to_dict(self) -> dict:
        return {
            "train_trials": len(self.train_trials),
            "test_trials": len(self.test_trials),
            "channels": self.train_trials[0].channels if self.train_trials else 0,
            "sample_rate": self.train_trials[0].sample_rate if self.train_trials else 0.0,
        }


class SessionOrchestrator:
    """
    Coordena os passos de uma sessão e mantém o histórico.

    Cada passo fica registado em results["steps"] com o seu estado
    ("success", "skipped" ou "fallback"). Os tempos vão só para o log.
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.session_history = []

    def _log(self, emoji: str, message: str):
        """Logging formatado com timestamp"""
        logger.info("%s %s", emoji, message)

    def run_session(self, session: SessionInput) -> dict:
        cfg = self.config
        start_time = time.perf_counter()

        self._log("🧠", f"Iniciando sessão: {len(session.train_trials)} ensaios de treino, {len(session.test_trials)} de teste")
        results = {
            "session_info": session.to_dict(),
            "steps": [],
            "performance": {},
        }

        # ════════════════════════════════════════════════════
        # PASSO 1: Pré-processamento
        # ════════════════════════════════════════════════════
        self._log("🎛️", "Passo 1: Selecionando janela e banda...")
        t1 = time.perf_counter()
        spec = session.preproc
        reason = "provided"
        if spec is None:
            spec, reason = cfg.to_preproc_preset(), "preset"
        if spec is not None:
            results["steps"].append({"step": "preproc_selection", "status": "skipped", "reason": reason})
            self._log("⚠️", f"Pré-processamento fixo, sem grelha ({reason})")
        else:
            try:
                selection = select_preproc(session.train_trials, cfg.to_grid_config())
                spec = selection.spec
                results["preproc_selection"] = selection.to_dict()
                results["steps"].append({"step": "preproc_selection", "status": "success", "cases": selection.n_cases})
                self._log("✅", f"Grelha avaliada ({time.perf_counter() - t1:.1f}s)")
            except ConfigurationError as e:
                # poucos ensaios para as dobras: volta ao preset fixo
                self._log("⚠️", f"Erro na seleção: {str(e)[:80]}")
                spec = PreprocSpec.preset("fixed")
                results["steps"].append({"step": "preproc_selection", "status": "fallback", "error": str(e)})
        results["preproc"] = spec.to_dict()

        # ════════════════════════════════════════════════════
        # PASSO 2: Descritores de covariância
        # ════════════════════════════════════════════════════
        self._log("📊", "Passo 2: Calculando covariâncias...")
        filter_cfg = cfg.to_filter_config()
        train = run_pipeline(session.train_trials, spec, cfg.shrinkage, filter_cfg)
        test = run_pipeline(session.test_trials, spec, cfg.shrinkage, filter_cfg)
        n = train[0].dim
        results["steps"].append({"step": "covariance", "status": "success", "dim": n})

        # ════════════════════════════════════════════════════
        # PASSO 3: Dimensão e DPLM
        # ════════════════════════════════════════════════════
        target_dim = cfg.target_dim
        if cfg.reduce and cfg.dims:
            self._log("📐", f"Passo 3a: Escolhendo m entre {cfg.dims}...")
            choice = select_dimension(
                train, cfg.dims, cfg.to_dplm_config(), cfg.folds, cfg.seed,
                cfg.classifier, cfg.metric_kind, cfg.to_karcher_config(),
            )
            target_dim = choice.target_dim
            results["dimension_selection"] = choice.to_dict()
            results["steps"].append({"step": "dimension_selection", "status": "success", "target_dim": target_dim})
        else:
            results["steps"].append({"step": "dimension_selection", "status": "skipped"})

        if cfg.reduce and target_dim < n:
            self._log("🧭", f"Passo 3b: DPLM {n} → {target_dim}...")
            model = fit(train, cfg.to_dplm_config(target_dim))
            train, test = transform_samples(model, train), transform_samples(model, test)
            results["dplm"] = model.report.to_dict()
            results["steps"].append({
                "step": "dplm",
                "status": "success",
                "dplm_status": model.report.status,
                "target_dim": target_dim,
            })
        else:
            results["steps"].append({"step": "dplm", "status": "skipped"})

        # ════════════════════════════════════════════════════
        # PASSO 4: Classificação
        # ════════════════════════════════════════════════════
        self._log("🎯", f"Passo 4: Treinando {cfg.classifier.upper()}...")
        clf = train_classifier(
            cfg.classifier, train, cfg.metric_kind, cfg.filters_requested, cfg.to_karcher_config(), cfg.n_jobs,
        )
        evaluation = evaluate(clf, test)
        results["evaluation"] = evaluation.to_dict()
        results["steps"].append({"step": "classification", "status": "success", "classifier": cfg.classifier})

        # ════════════════════════════════════════════════════
        # FINALIZAÇÃO
        # ════════════════════════════════════════════════════
        results["performance"] = {
            "accuracy": evaluation.accuracy,
            "kappa": evaluation.kappa.value,
            "final_dim": train[0].dim,
        }
        self.session_history.append(results)

        total = time.perf_counter() - start_time
        self._log("🏁", f"Sessão completa em {total:.1f}s: kappa {evaluation.kappa.value:.3f}")
        return results


# ============================================================
# BENCHMARK
# ============================================================

@dataclass
class BenchmarkRow:
    N: int
    n: int
    m: int
    K: int
    seconds_per_iteration: float
    repetitions: list[float] = field(default_factory=list, repr=False)

    def as_row(self) -> tuple:
        return (self.N, self.n, self.m, self.K, self.seconds_per_iteration)

    def to_dict(self) -> dict:
        return dict(zip(BENCH_COLUMNS, self.as_row()))


BENCH_COLUMNS = ("N", "n", "m", "K", "seconds_per_iteration")


def _bench_samples(N: int, n: int, n_classes: int, seed: int) -> list[LabeledSample]:
    """N amostras isotrópicas equilibradas por classe"""
    per_class = math.ceil(N / n_classes)
    dataset = generate_spd_dataset(SyntheticSpec(
        n_classes=n_classes, per_class=per_class, dim=n, structure="isotropic", seed=seed, center_seed=seed,
    ))
    order = sorted(range(len(dataset.samples)), key=lambda i: (i % per_class, i // per_class))
    return [dataset.samples[i] for i in order[:N]]


def bench_target_dim(n: int, target_dim: int) -> int:
    """target_dim quando cabe abaixo de n; senão n // 2"""
    return target_dim if 1 <= target_dim < n else max(1, n // 2)


def time_iteration(problem: DplmProblem, U: np.ndarray, repetitions: int) -> list[float]:
    """Tempo de uma avaliação de H e do gradiente em U fixo, por repetição"""
    problem.evaluate(U)
    problem.gradient(U)
    times = []
    for _ in range(repetitions):
        t = time.perf_counter()
        problem.evaluate(U)
        problem.gradient(U)
        times.append(time.perf_counter() - t)
    return times


def run_benchmark(cfg: RunConfig) -> list[BenchmarkRow]:
    """
    Mediana do custo por iteração externa para cada (N, n) da grelha.

    O trabalho por iteração é uma avaliação de H e uma do gradiente em U fixo;
    as tentativas extra da pesquisa em linha e a construção das vizinhanças
    ficam fora da medição. m vem de target_dim quando é menor que n.
    """
    rows = []
    K = cfg.k_neighbors
    for n in cfg.bench_dims:
        for N in cfg.sizes:
            if N < cfg.bench_classes * (K + 1):
                raise ConfigurationError(
                    f"N={N} insuficiente para {cfg.bench_classes} classes com K={K} vizinhos"
                )
            samples = _bench_samples(N, n, cfg.bench_classes, cfg.seed)
            m = bench_target_dim(n, cfg.target_dim)
            dplm_cfg = cfg.to_dplm_config(target_dim=m)
            problem = DplmProblem(samples, build_neighborhoods(samples, dplm_cfg))
            U = initial_projection(n, m, "random", cfg.seed)
            times = time_iteration(problem, U, cfg.repetitions)
            row = BenchmarkRow(N, n, m, K, statistics.median(times), times)
            logger.info("⏱️ N=%d n=%d m=%d K=%d: %.3es/iteração", N, n, m, K, row.seconds_per_iteration)
            rows.append(row)
    return rows


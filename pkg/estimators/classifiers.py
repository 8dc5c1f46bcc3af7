"""
Classificadores Riemannianos sobre descritores SPD.

Funcionalidades:
- MDM: distância mínima à média de Karcher de cada classe
- FGMDM: filtragem geodésica por análise discriminante de Fisher no espaço
  tangente, seguida de MDM
- Matriz de confusão, kappa de Cohen e teste de Wilcoxon para comparar métodos
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.stats
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix

from tools.errors import (
    ConfigurationError,
    DataFormatError,
    DimensionMismatchError,
    ValidationError,
    schema_errors,
)
from tools.geometry import KarcherConfig, MetricKind, distance, karcher_mean, tangent_exp, tangent_log
from tools.samples import LabeledSample
from tools.spd_linalg import _readonly, as_spd, symmetrize

logger = logging.getLogger(__name__)


def _group_by_label(samples: Sequence[LabeledSample]) -> dict[int, list[np.ndarray]]:
    if not samples:
        raise ValidationError("Conjunto de treino vazio")
    dim = samples[0].dim
    groups: dict[int, list[np.ndarray]] = {}
    for s in samples:
        if s.dim != dim:
            raise DimensionMismatchError(f"Amostras com dimensões diferentes: {dim} e {s.dim}")
        groups.setdefault(s.label, []).append(s.matrix)
    return dict(sorted(groups.items()))


# ============================================================
# MDM
# ============================================================

@dataclass
class MdmModel:
    """Uma média de Karcher por classe"""
    class_means: dict[int, np.ndarray]
    metric: MetricKind = MetricKind.AIRM

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_means)

    @property
    def dim(self) -> int:
        return next(iter(self.class_means.values())).shape[0]

    def to_dict(self) -> dict:
        return {
            "kind": "mdm",
            "metric": self.metric.value,
            "classes": self.classes,
            "class_means": [self.class_means[c].tolist() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdmModel":
        with schema_errors("Modelo MDM"):
            if d.get("kind") != "mdm":
                raise DataFormatError(f"Esperado modelo 'mdm', recebido {d.get('kind')!r}")
            if len(d["classes"]) != len(d["class_means"]) or not d["classes"]:
                raise DataFormatError("Modelo MDM com classes e médias incompatíveis")
            means = {int(c): as_spd(np.array(M, dtype=float)) for c, M in zip(d["classes"], d["class_means"])}
            return cls(class_means=means, metric=MetricKind.parse(d["metric"]))


def mdm_train(
    samples: Sequence[LabeledSample],
    metric: MetricKind = MetricKind.AIRM,
    karcher: Optional[KarcherConfig] = None,
    n_jobs: int = 1,
) -> MdmModel:
    """Médias de Karcher por classe (em paralelo quando n_jobs ≠ 1)"""
    groups = _group_by_label(samples)
    labels = list(groups)
    if n_jobs == 1:
        means = [karcher_mean(groups[c], karcher) for c in labels]
    else:
        means = Parallel(n_jobs=n_jobs)(delayed(karcher_mean)(groups[c], karcher) for c in labels)
    return MdmModel(class_means=dict(zip(labels, means)), metric=MetricKind.parse(metric))


def mdm_distances(model: MdmModel, X) -> np.ndarray:
    """Distância de X a cada média, pela ordem de model.classes"""
    X = as_spd(X)
    if X.shape[0] != model.dim:
        raise DimensionMismatchError(f"Matriz {X.shape[0]}×{X.shape[0]} para modelo de dimensão {model.dim}")
    return np.array([distance(X, model.class_means[c], model.metric) for c in model.classes])


def mdm_predict(model: MdmModel, X) -> int:
    """Classe da média mais próxima; empates vão para o menor rótulo"""
    d = mdm_distances(model, X)
    return model.classes[int(np.argmin(d))]


# ============================================================
# VETORIZAÇÃO NO ESPAÇO TANGENTE
# ============================================================

def _triu_weights(dim: int) -> tuple[tuple[np.ndarray, np.ndarray], np.ndarray]:
    idx = np.triu_indices(dim)
    weights = np.where(idx[0] == idx[1], 1.0, np.sqrt(2))
    return idx, weights


def vectorize_tangent(S: np.ndarray) -> np.ndarray:
    """Triângulo superior com fora-da-diagonal × √2 (isometria Frobenius → euclidiana)"""
    idx, w = _triu_weights(S.shape[0])
    return S[idx] * w


def unvectorize_tangent(v: np.ndarray, dim: int) -> np.ndarray:
    idx, w = _triu_weights(dim)
    if v.shape != w.shape:
        raise DimensionMismatchError(f"Vetor com {v.shape[0]} entradas para dimensão {dim}")
    S = np.zeros((dim, dim))
    S[idx] = v / w
    return S + np.triu(S, 1).T


def tangent_dim(dim: int) -> int:
    return dim * (dim + 1) // 2


# ============================================================
# FGMDM
# ============================================================

@dataclass
class FgmdmModel:
    """
    Referência global, base ortonormal dos filtros (colunas) e MDM interno
    treinado sobre as matrizes filtradas.
    """
    reference: np.ndarray
    filters: np.ndarray
    inner_mdm: MdmModel
    ridge: float = 0.0
    requested_filters: Union[int, str] = "auto"
    warnings: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.reference.shape[0]

    @property
    def n_filters(self) -> int:
        return self.filters.shape[1]

    def filter(self, X) -> np.ndarray:
        """Projeção ortogonal do vetor tangente no span dos filtros e regresso à variedade"""
        X = as_spd(X)
        if X.shape[0] != self.dim:
            raise DimensionMismatchError(f"Matriz {X.shape[0]}×{X.shape[0]} para modelo de dimensão {self.dim}")
        v = vectorize_tangent(tangent_log(self.reference, X))
        v = self.filters @ (self.filters.T @ v)
        return tangent_exp(self.reference, unvectorize_tangent(v, self.dim))

    def to_dict(self) -> dict:
        return {
            "kind": "fgmdm",
            "reference": self.reference.tolist(),
            "filters": self.filters.tolist(),
            "ridge": self.ridge,
            "requested_filters": self.requested_filters,
            "warnings": list(self.warnings),
            "inner_mdm": self.inner_mdm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FgmdmModel":
        with schema_errors("Modelo FGMDM"):
            if d.get("kind") != "fgmdm":
                raise DataFormatError(f"Esperado modelo 'fgmdm', recebido {d.get('kind')!r}")
            reference = as_spd(np.array(d["reference"], dtype=float))
            filters = np.array(d["filters"], dtype=float)
            if filters.ndim != 2 or filters.shape[0] != tangent_dim(reference.shape[0]):
                raise DataFormatError(f"Filtros com shape {filters.shape} incompatível com a referência")
            return cls(
                reference=reference,
                filters=_readonly(filters),
                inner_mdm=MdmModel.from_dict(d["inner_mdm"]),
                ridge=float(d.get("ridge", 0.0)),
                requested_filters=d.get("requested_filters", "auto"),
                warnings=list(d.get("warnings", [])),
            )


def _fisher_directions(V: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """
    LDA multi-classe: eigh(S_b, S_w + εI) com ε = 1e-3·tr(S_w)/dim.

    Returns:
        (direções por ordem decrescente de valor próprio, valores próprios, ε)
    """
    dim = V.shape[1]
    mu = V.mean(axis=0)
    S_b = np.zeros((dim, dim))
    S_w = np.zeros((dim, dim))
    for c in np.unique(y):
        Vc = V[y == c]
        mc = Vc.mean(axis=0)
        diff = (mc - mu)[:, None]
        S_b += len(Vc) * (diff @ diff.T)
        centered = Vc - mc
        S_w += centered.T @ centered
    eps = 1e-3 * np.trace(S_w) / dim
    if eps <= 0:
        eps = 1e-3
    w, W = scipy.linalg.eigh(symmetrize(S_b), symmetrize(S_w) + eps * np.eye(dim))
    order = np.argsort(-w, kind="stable")
    W = W[:, order]
    # sinal determinístico: maior componente em valor absoluto positiva
    signs = np.sign(W[np.argmax(np.abs(W), axis=0), np.arange(dim)])
    return W * np.where(signs == 0, 1.0, signs), w[order], float(eps)


def fgmdm_train(
    samples: Sequence[LabeledSample],
    n_filters: Union[int, str] = "auto",
    metric: MetricKind = MetricKind.AIRM,
    karcher: Optional[KarcherConfig] = None,
    n_jobs: int = 1,
) -> FgmdmModel:
    """
    Treina o FGMDM.

    Args:
        samples: Pelo menos 2 classes e 2 amostras por classe
        n_filters: "auto" (C-1) ou inteiro ≥ 1; acima da dimensão tangente é
            cortado; acima de C-1 é mantido; ambos deixam um aviso em `warnings`

    Returns:
        FgmdmModel com filtros ortonormais e MDM interno
    """
    groups = _group_by_label(samples)
    if len(groups) < 2:
        raise ConfigurationError("FGMDM precisa de pelo menos 2 classes")
    for c, mats in groups.items():
        if len(mats) < 2:
            raise ConfigurationError(f"Classe {c} tem {len(mats)} amostra(s); FGMDM precisa de ≥ 2")

    dim = samples[0].dim
    T = tangent_dim(dim)
    warnings = []
    if n_filters == "auto":
        k = len(groups) - 1
    elif isinstance(n_filters, (int, np.integer)) and not isinstance(n_filters, bool) and n_filters >= 1:
        k = int(n_filters)
    else:
        raise ConfigurationError(f"n_filters tem de ser 'auto' ou inteiro ≥ 1, recebido {n_filters!r}")
    if k > T:
        warnings.append(f"n_filters={k} excede a dimensão tangente {T}; cortado para {T}")
        logger.warning("⚠️ %s", warnings[-1])
        k = T
    fisher_rank = len(groups) - 1
    if k > fisher_rank:
        warnings.append(f"n_filters={k} acima do posto de Fisher C-1={fisher_rank}; filtros extra sem poder discriminante")
        logger.warning("⚠️ %s", warnings[-1])

    reference = karcher_mean([s.matrix for s in samples], karcher)
    V = np.stack([vectorize_tangent(tangent_log(reference, s.matrix)) for s in samples])
    y = np.array([s.label for s in samples])

    W, _, eps = _fisher_directions(V, y)
    Q, R = np.linalg.qr(W[:, :k])
    filters = _readonly(Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R))))

    model = FgmdmModel(
        reference=reference,
        filters=filters,
        inner_mdm=MdmModel(class_means={}, metric=MetricKind.parse(metric)),
        ridge=eps,
        requested_filters=n_filters,
        warnings=warnings,
    )
    filtered = [LabeledSample(model.filter(s.matrix), s.label) for s in samples]
    model.inner_mdm = mdm_train(filtered, metric, karcher, n_jobs)
    logger.info("🧪 FGMDM: %d classes, %d filtro(s) em dimensão tangente %d", len(groups), k, T)
    return model


def fgmdm_predict(model: FgmdmModel, X) -> int:
    return mdm_predict(model.inner_mdm, model.filter(X))


# ============================================================
# DESPACHO E SERIALIZAÇÃO
# ============================================================

Classifier = Union[MdmModel, FgmdmModel]

CLASSIFIERS = ("mdm", "fgmdm")


def train_classifier(
    kind: str,
    samples: Sequence[LabeledSample],
    metric: MetricKind = MetricKind.AIRM,
    n_filters: Union[int, str] = "auto",
    karcher: Optional[KarcherConfig] = None,
    n_jobs: int = 1,
) -> Classifier:
    if kind == "mdm":
        return mdm_train(samples, metric, karcher, n_jobs)
    if kind == "fgmdm":
        return fgmdm_train(samples, n_filters, metric, karcher, n_jobs)
    raise ConfigurationError(f"Classificador desconhecido: {kind}. Use: {CLASSIFIERS}")


def predict(model: Classifier, X) -> int:
    if isinstance(model, FgmdmModel):
        return fgmdm_predict(model, X)
    return mdm_predict(model, X)


def classifier_from_dict(d: dict) -> Classifier:
    if not isinstance(d, dict):
        raise DataFormatError(f"Modelo de classificador tem de ser um objeto, recebido {type(d).__name__}")
    kind = d.get("kind")
    if kind == "mdm":
        return MdmModel.from_dict(d)
    if kind == "fgmdm":
        return FgmdmModel.from_dict(d)
    raise DataFormatError(f"Modelo de classificador desconhecido: {kind!r}")


# ============================================================
# MÉTRICAS
# ============================================================

@dataclass(frozen=True)
class KappaResult:
    value: float
    degenerate: bool
    observed: float
    expected: float

    def to_dict(self) -> dict:
        return {
            "kappa": self.value,
            "degenerate": self.degenerate,
            "observed_agreement": self.observed,
            "chance_agreement": self.expected,
        }


def confusion(y_true: Sequence[int], y_pred: Sequence[int], labels: Optional[Sequence[int]] = None) -> np.ndarray:
    """Linhas = classe verdadeira, colunas = classe prevista"""
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    return confusion_matrix(y_true, y_pred, labels=list(labels))


def kappa(conf) -> KappaResult:
    """
    Kappa de Cohen (p_o - p_e)/(1 - p_e) a partir das marginais.

    Quando p_e == 1 o kappa é 0 e `degenerate` fica verdadeiro.
    """
    conf = np.asarray(conf, dtype=float)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1] or conf.shape[0] < 1:
        raise ValidationError(f"Matriz de confusão tem de ser C×C, recebido {conf.shape}")
    if np.any(conf < 0) or not np.all(np.isfinite(conf)):
        raise ValidationError("Matriz de confusão com contagens inválidas")
    total = conf.sum()
    if total <= 0:
        raise ValidationError("Matriz de confusão sem previsões")

    p_o = float(np.trace(conf) / total)
    p_e = float(np.sum(conf.sum(axis=0) * conf.sum(axis=1)) / total ** 2)
    if np.isclose(p_e, 1.0, rtol=0, atol=1e-15):
        return KappaResult(0.0, True, p_o, p_e)
    return KappaResult((p_o - p_e) / (1 - p_e), False, p_o, p_e)


@dataclass(frozen=True)
class Evaluation:
    labels: list[int]
    confusion: np.ndarray
    accuracy: float
    kappa: KappaResult

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            **self.kappa.to_dict(),
        }


def evaluate(model: Classifier, samples: Sequence[LabeledSample]) -> Evaluation:
    """Previsões sobre um conjunto rotulado, com confusão, exatidão e kappa"""
    if not samples:
        raise ValidationError("Conjunto de avaliação vazio")
    y_true = [s.label for s in samples]
    y_pred = [predict(model, s.matrix) for s in samples]
    train_classes = model.inner_mdm.classes if isinstance(model, FgmdmModel) else model.classes
    labels = sorted(set(train_classes) | set(y_true))
    conf = confusion(y_true, y_pred, labels)
    return Evaluation(
        labels=labels,
        confusion=conf,
        accuracy=float(np.trace(conf) / conf.sum()),
        kappa=kappa(conf),
    )


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> dict:
    """Teste de Wilcoxon emparelhado (bilateral) entre dois métodos"""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatchError(f"Amostras emparelhadas com shapes {a.shape} e {b.shape}")
    if np.all(a == b):
        return {"statistic": 0.0, "p_value": 1.0, "n": int(a.size)}
    result = scipy.stats.wilcoxon(a, b)
    return {"statistic": float(result.statistic), "p_value": float(result.pvalue), "n": int(a.size)}

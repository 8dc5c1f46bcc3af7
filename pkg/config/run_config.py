"""
Configuração resolvida de uma execução da CLI.

Ordem de resolução: defaults (com settings/.env) → ficheiro `--config` JSON → flags.
A configuração resolvida é ecoada em todos os artefactos.
"""

import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

from config.settings import settings
from estimators.dplm import DplmConfig
from estimators.preproc_selector import GridSearchConfig, PreprocSpec
from tools.errors import ConfigurationError, DataFileNotFoundError
from tools.geometry import KarcherConfig, MetricKind
from tools.signal_processor import FilterConfig
from tools.synthetic import SyntheticSpec, TrialSynthSpec


@dataclass
class RunConfig:
    """Todos os parâmetros da CLI, com defaults documentados"""
    # === Geral ===
    seed: int = 0
    n_jobs: int = 1

    # === synth ===
    kind: str = "spd"                       # "spd" ou "trials"
    n_classes: int = 4
    per_class: int = 30
    dim: int = 10
    block_dim: int = 4
    separation: float = 1.0
    noise: float = 0.1
    structure: str = "block-discriminative"
    rotate: bool = False
    center_seed: int = 0
    channels: int = 4
    sample_rate: float = 128.0
    duration: float = 8.0
    trial_t0: float = 0.0
    signal_band: list = field(default_factory=lambda: [10.0, 20.0])
    signal_window: list = field(default_factory=lambda: [3.0, 5.0])
    amplitude: float = 0.4
    trial_noise: float = 1.0

    # === DPLM ===
    target_dim: int = 4
    k_neighbors: int = 5
    supervised: bool = True
    neighbor_metric: str = "logdet"
    max_outer_iterations: int = 200
    grad_norm_tol: float = 1e-5
    initial_step: float = 1e-3
    rho: float = 0.5
    armijo_c: float = 1e-4
    window: int = 5
    max_contractions: int = 30
    init: str = "identity"

    # === Média de Karcher ===
    karcher_max_iterations: int = 50
    karcher_tolerance: float = 1e-9
    karcher_step_size: float = 1.0

    # === Classificação ===
    classifier: str = "mdm"
    metric: str = "airm"
    n_filters: str = "auto"

    # === Pré-processamento ===
    window_starts: list = field(default_factory=lambda: list(GridSearchConfig().window_starts))
    window_lengths: list = field(default_factory=lambda: list(GridSearchConfig().window_lengths))
    bands: list = field(default_factory=lambda: [list(b) for b in GridSearchConfig().bands])
    folds: int = 10
    top_k: int = 10
    shrinkage: float = 0.01
    filter_order: int = 4
    filter_family: str = "butter"
    preset: str = ""                        # "" = seleção por grelha; "fixed" = 8-35 Hz, 3.75-5.75 s

    # === Sessão ===
    dims: list = field(default_factory=list)  # candidatos a m; vazio = usar target_dim
    reduce: bool = True

    # === Benchmark ===
    sizes: list = field(default_factory=lambda: [100, 200, 400])
    bench_dims: list = field(default_factory=lambda: [22])
    repetitions: int = 5
    bench_classes: int = 4

    def __post_init__(self):
        self._check_types()
        if self.kind not in ("spd", "trials"):
            raise ConfigurationError(f"kind tem de ser 'spd' ou 'trials', recebido {self.kind!r}")
        if self.n_jobs == 0:
            raise ConfigurationError("n_jobs não pode ser 0")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions tem de ser ≥ 1")
        if not self.sizes or not self.bench_dims:
            raise ConfigurationError("sizes e bench_dims não podem estar vazios")
        for key in ("signal_band", "signal_window"):
            if len(getattr(self, key)) != 2:
                raise ConfigurationError(f"{key} precisa de exatamente 2 valores")
        for b in self.bands:
            if len(b) != 2:
                raise ConfigurationError(f"Banda inválida: {b}")
        MetricKind.parse(self.metric)
        MetricKind.parse(self.neighbor_metric)

    def _check_types(self) -> None:
        """Cada campo tem o tipo do seu default; inteiros são aceites onde se espera float"""
        for f in fields(self):
            value = getattr(self, f.name)
            default = f.default if f.default is not MISSING else f.default_factory()
            expected = type(default)
            is_int = isinstance(value, int) and not isinstance(value, bool)
            if expected is float and is_int:
                setattr(self, f.name, float(value))
            elif f.name == "n_filters" and is_int:
                continue
            elif not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
                raise ConfigurationError(
                    f"{f.name} tem de ser {expected.__name__}, recebido {type(value).__name__} {value!r}"
                )

    # ========================================================
    # RESOLUÇÃO
    # ========================================================

    @classmethod
    def defaults(cls) -> dict:
        """Defaults com os valores das settings (env/.env)"""
        return {
            "seed": settings.SEED,
            "n_jobs": settings.N_JOBS,
            "shrinkage": settings.SHRINKAGE,
            "filter_order": settings.FILTER_ORDER,
            "filter_family": settings.FILTER_FAMILY,
        }

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    @classmethod
    def _normalize(cls, raw: dict, source: str) -> dict:
        out = {}
        names = cls.field_names()
        for key, value in raw.items():
            name = key.replace("-", "_")
            if name not in names:
                raise ConfigurationError(f"Parâmetro desconhecido em {source}: {key}")
            out[name] = value
        return out

    @classmethod
    def resolve(cls, config_path: Optional[Union[str, Path]] = None, overrides: Optional[dict] = None) -> "RunConfig":
        values = cls.defaults()
        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise DataFileNotFoundError(f"Ficheiro de configuração não encontrado: {path}")
            try:
                raw = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"Configuração JSON inválida em {path}: {e}") from e
            if not isinstance(raw, dict):
                raise ConfigurationError(f"Configuração em {path} tem de ser um objeto JSON")
            values.update(cls._normalize(raw, str(path)))
        values.update(cls._normalize(overrides or {}, "flags"))
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(str(e)) from e

    def to_dict(self) -> dict:
        return asdict(self)

    # ========================================================
    # CONFIGS DE MÓDULO
    # ========================================================

    @property
    def metric_kind(self) -> MetricKind:
        return MetricKind.parse(self.metric)

    @property
    def filters_requested(self) -> Union[int, str]:
        if str(self.n_filters) == "auto":
            return "auto"
        try:
            return int(self.n_filters)
        except ValueError:
            raise ConfigurationError(f"n_filters tem de ser 'auto' ou inteiro, recebido {self.n_filters!r}")

    def to_karcher_config(self) -> KarcherConfig:
        return KarcherConfig(
            max_iterations=self.karcher_max_iterations,
            tolerance=self.karcher_tolerance,
            step_size=self.karcher_step_size,
        )

    def to_dplm_config(self, target_dim: Optional[int] = None) -> DplmConfig:
        return DplmConfig(
            target_dim=self.target_dim if target_dim is None else target_dim,
            k_neighbors=self.k_neighbors,
            supervised=self.supervised,
            neighbor_metric=self.neighbor_metric,
            max_outer_iterations=self.max_outer_iterations,
            grad_norm_tol=self.grad_norm_tol,
            initial_step=self.initial_step,
            rho=self.rho,
            armijo_c=self.armijo_c,
            window=self.window,
            max_contractions=self.max_contractions,
            init=self.init,
            seed=self.seed,
            karcher=self.to_karcher_config(),
            n_jobs=self.n_jobs,
        )

    def to_filter_config(self) -> FilterConfig:
        return FilterConfig(order=self.filter_order, family=self.filter_family)

    def to_grid_config(self) -> GridSearchConfig:
        return GridSearchConfig(
            window_starts=tuple(self.window_starts),
            window_lengths=tuple(self.window_lengths),
            bands=tuple(tuple(b) for b in self.bands),
            folds=self.folds,
            top_k=self.top_k,
            seed=self.seed,
            shrinkage=self.shrinkage,
            metric=self.metric_kind,
            filter=self.to_filter_config(),
            n_jobs=self.n_jobs,
        )

    def to_preproc_preset(self) -> Optional[PreprocSpec]:
        return PreprocSpec.preset(self.preset) if self.preset else None

    def to_synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_classes=self.n_classes,
            per_class=self.per_class,
            dim=self.dim,
            block_dim=self.block_dim,
            separation=self.separation,
            noise=self.noise,
            structure=self.structure,
            rotate=self.rotate,
            seed=self.seed,
            center_seed=self.center_seed,
        )

    def to_trial_spec(self) -> TrialSynthSpec:
        return TrialSynthSpec(
            n_classes=self.n_classes,
            per_class=self.per_class,
            channels=self.channels,
            sample_rate=self.sample_rate,
            duration=self.duration,
            trial_t0=self.trial_t0,
            band=tuple(self.signal_band),
            window=tuple(self.signal_window),
            amplitude=self.amplitude,
            noise=self.trial_noise,
            seed=self.seed,
        )


def flag_type(name: str) -> Any:
    """Tipo de elemento para as flags de listas"""
    return {
        "signal_band": float,
        "signal_window": float,
        "window_starts": float,
        "window_lengths": float,
        "dims": int,
        "sizes": int,
        "bench_dims": int,
    }.get(name)

"""
Leitura e escrita de matrizes, conjuntos de dados e relatórios.

Funcionalidades:
- CSV de matrizes (uma linha por linha da matriz, sem cabeçalho, %.17g)
- Manifestos JSON de conjuntos SPD e de ensaios, com checksum md5 por ficheiro
- JSON determinístico (chaves ordenadas, floats com repr)
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from config.settings import settings
from tools.errors import DataFileNotFoundError, DataFormatError, DimensionMismatchError
from tools.samples import LabeledSample, TrialSignal

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _require(path: Path) -> Path:
    if not path.exists():
        raise DataFileNotFoundError(f"Ficheiro não encontrado: {path}")
    return path


def compute_hash(path: PathLike) -> str:
    """md5 do conteúdo do ficheiro"""
    return hashlib.md5(Path(path).read_bytes()).hexdigest()


# ============================================================
# JSON
# ============================================================

def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"Tipo não serializável: {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=_to_jsonable, allow_nan=False) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def read_json(path: PathLike) -> dict:
    path = _require(Path(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"JSON inválido em {path}: {e}") from e


def artifact(kind: str, payload: dict, run_config: Optional[dict] = None) -> dict:
    """Envolve um artefacto com a versão de formato e a configuração resolvida"""
    return {
        "format_version": settings.FORMAT_VERSION,
        "kind": kind,
        "run_config": run_config or {},
        **payload,
    }


def check_artifact(d: dict, kind: Optional[str] = None) -> dict:
    if not isinstance(d, dict):
        raise DataFormatError(f"Artefacto tem de ser um objeto JSON, recebido {type(d).__name__}")
    if d.get("format_version") != settings.FORMAT_VERSION:
        raise DataFormatError(f"Versão de formato não suportada: {d.get('format_version')!r}")
    if kind is not None and d.get("kind") != kind:
        raise DataFormatError(f"Esperado artefacto '{kind}', recebido {d.get('kind')!r}")
    return d


# ============================================================
# CSV DE MATRIZES
# ============================================================

def write_matrix_csv(path: PathLike, M: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")
    return path


def read_matrix_csv(path: PathLike) -> np.ndarray:
    """Lê uma matriz; dimensões inferidas do ficheiro"""
    path = _require(Path(path))
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as e:
        raise DataFormatError(f"CSV inválido em {path}: {e}") from e
    if M.size == 0:
        raise DataFormatError(f"CSV vazio: {path}")
    return M


def write_table_csv(path: PathLike, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Tabela com cabeçalho (floats com %.17g)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    lines = [",".join(columns)] + [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ============================================================
# CONJUNTOS SPD
# ============================================================

@dataclass
class SpdDataset:
    samples: list[LabeledSample]
    manifest: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.samples[0].dim


def _load_entries(manifest_path: Path, entries: list[dict], verify: bool) -> list[tuple[np.ndarray, int]]:
    root = manifest_path.parent
    out = []
    for i, entry in enumerate(entries):
        try:
            rel, label = entry["path"], int(entry["label"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Entrada {i} do manifesto {manifest_path} inválida: {e}") from e
        path = _require(root / rel)
        if verify and "md5" in entry and compute_hash(path) != entry["md5"]:
            raise DataFormatError(f"Checksum md5 não corresponde para {path}")
        out.append((read_matrix_csv(path), label))
    return out


def write_spd_dataset(
    out_dir: PathLike,
    samples: Sequence[LabeledSample],
    config: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> Path:
    """
    Escreve `samples/NNNNN.csv` e `manifest.json` em out_dir.

    Returns:
        Caminho do manifesto
    """
    out_dir = Path(out_dir)
    entries = []
    for i, s in enumerate(samples):
        rel = f"samples/{i:05d}.csv"
        path = write_matrix_csv(out_dir / rel, s.matrix)
        entries.append({"path": rel, "label": s.label, "md5": compute_hash(path)})

    manifest = artifact("spd-dataset", {
        "dim": samples[0].dim if samples else 0,
        "count": len(entries),
        "samples": entries,
        **(extra or {}),
    }, config)
    path = write_json(out_dir / "manifest.json", manifest)
    logger.info("💾 %d matrizes escritas em %s", len(entries), out_dir)
    return path


def _manifest_path(path: PathLike) -> Path:
    path = Path(path)
    return path / "manifest.json" if path.is_dir() else path


def read_spd_dataset(path: PathLike, verify: bool = True) -> SpdDataset:
    """Lê um conjunto SPD a partir do manifesto (ou da pasta que o contém)"""
    manifest_path = _manifest_path(path)
    manifest = check_artifact(read_json(manifest_path), "spd-dataset")
    if not isinstance(manifest.get("samples"), list) or not manifest["samples"]:
        raise DataFormatError(f"Manifesto sem amostras: {manifest_path}")

    samples = [LabeledSample(M, label) for M, label in _load_entries(manifest_path, manifest["samples"], verify)]
    dim = samples[0].dim
    for s in samples:
        if s.dim != dim:
            raise DimensionMismatchError(f"Matrizes com dimensões diferentes no manifesto: {dim} e {s.dim}")
    return SpdDataset(samples=samples, manifest=manifest)


# ============================================================
# CONJUNTOS DE ENSAIOS
# ============================================================

def write_trial_dataset(out_dir: PathLike, trials: Sequence[TrialSignal], config: Optional[dict] = None) -> Path:
    """Um CSV canais × amostras por ensaio e um manifesto com sample_rate e trial_t0"""
    if not trials:
        raise DataFormatError("Conjunto de ensaios vazio")
    out_dir = Path(out_dir)
    rate, t0 = trials[0].sample_rate, trials[0].trial_t0
    entries = []
    for i, t in enumerate(trials):
        if t.sample_rate != rate or t.trial_t0 != t0:
            raise DataFormatError("Todos os ensaios do manifesto partilham sample_rate e trial_t0")
        rel = f"trials/{i:05d}.csv"
        path = write_matrix_csv(out_dir / rel, t.data)
        entries.append({"path": rel, "label": t.label, "md5": compute_hash(path)})

    manifest = artifact("trial-dataset", {
        "sample_rate": rate,
        "trial_t0": t0,
        "channels": trials[0].channels,
        "count": len(entries),
        "trials": entries,
    }, config)
    path = write_json(out_dir / "manifest.json", manifest)
    logger.info("💾 %d ensaios escritos em %s", len(entries), out_dir)
    return path


def read_trial_dataset(path: PathLike, verify: bool = True) -> list[TrialSignal]:
    manifest_path = _manifest_path(path)
    manifest = check_artifact(read_json(manifest_path), "trial-dataset")
    try:
        rate = float(manifest["sample_rate"])
        t0 = float(manifest.get("trial_t0", 0.0))
        entries = manifest["trials"]
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"Manifesto de ensaios inválido em {manifest_path}: {e}") from e
    if not entries:
        raise DataFormatError(f"Manifesto sem ensaios: {manifest_path}")

    return [
        TrialSignal(data, rate, label=label, trial_t0=t0)
        for data, label in _load_entries(manifest_path, entries, verify)
    ]

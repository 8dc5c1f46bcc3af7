# app.py - Interface de linha de comandos
# ============================================================

"""
spdreduce - CLI.

Subcomandos: synth, preproc-select, fit, transform, train, eval, bench, session.
Todos aceitam `--config <json>` e flags kebab-case com os campos de RunConfig;
as flags sobrepõem-se ao ficheiro.

Códigos de saída: 0 sucesso, 2 utilização/configuração, 3 dados, 4 falha numérica.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields
from typing import Optional, Sequence

from config.run_config import RunConfig, flag_type
from config.settings import configure_logging, settings
from estimators.classifiers import classifier_from_dict, evaluate, train_classifier
from estimators.dplm import DplmModel, fit, transform_samples
from estimators.orchestrator import BENCH_COLUMNS, SessionInput, SessionOrchestrator, run_benchmark
from estimators.preproc_selector import PreprocSpec, select_preproc
from tools.dataset_io import (
    artifact,
    check_artifact,
    dumps_json,
    read_json,
    read_spd_dataset,
    read_trial_dataset,
    write_json,
    write_spd_dataset,
    write_table_csv,
    write_trial_dataset,
)
from tools.errors import SpdReduceError, schema_errors
from tools.synthetic import generate_spd_dataset, generate_trials

logger = logging.getLogger("spdreduce")


# ============================================================
# SAÍDA
# ============================================================

def _emit(obj: dict, out: Optional[str]) -> None:
    """JSON para ficheiro ou stdout"""
    if out:
        write_json(out, obj)
        logger.info("💾 Escrito %s", out)
    else:
        sys.stdout.write(dumps_json(obj))


# ============================================================
# SUBCOMANDOS
# ============================================================

def cmd_synth(args, cfg: RunConfig) -> int:
    if cfg.kind == "trials":
        spec = cfg.to_trial_spec()
        write_trial_dataset(args.out, generate_trials(spec), cfg.to_dict())
    else:
        spec = cfg.to_synthetic_spec()
        dataset = generate_spd_dataset(spec)
        write_spd_dataset(
            args.out,
            dataset.samples,
            cfg.to_dict(),
            extra={"informative_basis": dataset.informative_basis.tolist()},
        )
    return 0


def cmd_preproc_select(args, cfg: RunConfig) -> int:
    trials = read_trial_dataset(args.data)
    selection = select_preproc(trials, cfg.to_grid_config())
    _emit(artifact("preproc-selection", selection.to_dict(), cfg.to_dict()), args.out)
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    dataset = read_spd_dataset(args.data)
    model = fit(dataset.samples, cfg.to_dplm_config())
    _emit(artifact("dplm-model", {
        "model": model.to_dict(),
        "objective": model.report.best_objective,
        "status": model.report.status,
    }, cfg.to_dict()), args.out)
    return 0


def _load_dplm(path: str) -> DplmModel:
    d = check_artifact(read_json(path), "dplm-model")
    with schema_errors(str(path)):
        return DplmModel.from_dict(d["model"])


def cmd_transform(args, cfg: RunConfig) -> int:
    model = _load_dplm(args.model)
    dataset = read_spd_dataset(args.data)
    write_spd_dataset(
        args.out,
        transform_samples(model, dataset.samples),
        cfg.to_dict(),
        extra={"projection_from": str(args.model)},
    )
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    dataset = read_spd_dataset(args.data)
    clf = train_classifier(
        cfg.classifier, dataset.samples, cfg.metric_kind, cfg.filters_requested, cfg.to_karcher_config(), cfg.n_jobs,
    )
    _emit(artifact("classifier", {"model": clf.to_dict(), "dim": dataset.dim}, cfg.to_dict()), args.out)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    d = check_artifact(read_json(args.model), "classifier")
    with schema_errors(str(args.model)):
        clf = classifier_from_dict(d["model"])
    dataset = read_spd_dataset(args.data)
    evaluation = evaluate(clf, dataset.samples)
    _emit(artifact("evaluation", {
        **evaluation.to_dict(),
        "dim": dataset.dim,
        "classifier": d["model"]["kind"],
    }, cfg.to_dict()), args.out)
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    rows = run_benchmark(cfg)
    report = {"columns": list(BENCH_COLUMNS), "rows": [r.to_dict() for r in rows]}
    if args.out:
        write_table_csv(args.out, BENCH_COLUMNS, [r.as_row() for r in rows])
        # proveniência em <out>.json
        _emit(artifact("bench", {**report, "csv": str(args.out)}, cfg.to_dict()), f"{args.out}.json")
    else:
        _emit(artifact("bench", report, cfg.to_dict()), None)
    return 0


def _load_preproc(path: str) -> PreprocSpec:
    d = check_artifact(read_json(path), "preproc-selection")
    with schema_errors(str(path)):
        return PreprocSpec.from_dict(d["spec"])


def cmd_session(args, cfg: RunConfig) -> int:
    session = SessionInput(
        train_trials=read_trial_dataset(args.train),
        test_trials=read_trial_dataset(args.test),
        preproc=_load_preproc(args.preproc) if args.preproc else None,
    )
    results = SessionOrchestrator(cfg).run_session(session)
    _emit(artifact("session-report", results, cfg.to_dict()), args.out)
    return 0


# ============================================================
# PARSER
# ============================================================

def _parse_band(text: str) -> list:
    try:
        low, high = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Banda tem de ser LOW:HIGH, recebido {text!r}")
    return [low, high]


def _config_flags() -> argparse.ArgumentParser:
    """Uma flag por campo de RunConfig, sem default (só sobrepõe quando presente)"""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuração")
    group.add_argument("--config", help="Ficheiro JSON de configuração")
    group.add_argument("--log-level", default=None, help="Nível de log (default: SPDREDUCE_LOG_LEVEL)")
    defaults = RunConfig()
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        kwargs = {"dest": f.name, "default": argparse.SUPPRESS, "help": f"(default: {default})"}
        if isinstance(default, bool):
            group.add_argument(flag, action=argparse.BooleanOptionalAction, **kwargs)
        elif f.name == "bands":
            group.add_argument(flag, nargs="+", type=_parse_band, metavar="LOW:HIGH", **kwargs)
        elif isinstance(default, list):
            group.add_argument(flag, nargs="+", type=flag_type(f.name) or float, **kwargs)
        else:
            group.add_argument(flag, type=type(default), **kwargs)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_flags()
    parser = argparse.ArgumentParser(prog="spdreduce", description="Redução de dimensionalidade DPLM em matrizes SPD")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[parent], help="Gera um conjunto sintético (SPD ou ensaios)")
    p.add_argument("--out", required=True, help="Pasta de saída")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("preproc-select", parents=[parent], help="Seleciona janela e banda por validação cruzada")
    p.add_argument("--data", required=True, help="Manifesto de ensaios")
    p.add_argument("--out", help="Relatório JSON (default: stdout)")
    p.set_defaults(handler=cmd_preproc_select)

    p = sub.add_parser("fit", parents=[parent], help="Aprende a projeção DPLM")
    p.add_argument("--data", required=True, help="Manifesto SPD")
    p.add_argument("--out", help="Modelo JSON (default: stdout)")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("transform", parents=[parent], help="Aplica UᵀXU a um conjunto SPD")
    p.add_argument("--model", required=True, help="Modelo DPLM")
    p.add_argument("--data", required=True, help="Manifesto SPD")
    p.add_argument("--out", required=True, help="Pasta de saída")
    p.set_defaults(handler=cmd_transform)

    p = sub.add_parser("train", parents=[parent], help="Treina MDM ou FGMDM")
    p.add_argument("--data", required=True, help="Manifesto SPD")
    p.add_argument("--out", help="Classificador JSON (default: stdout)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[parent], help="Exatidão, kappa e matriz de confusão")
    p.add_argument("--model", required=True, help="Classificador JSON")
    p.add_argument("--data", required=True, help="Manifesto SPD")
    p.add_argument("--out", help="Relatório JSON (default: stdout)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", parents=[parent], help="Tempo por iteração em função de N e n")
    p.add_argument("--out", help="CSV (default: stdout)")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("session", parents=[parent], help="Sessão completa sobre ensaios de treino e teste")
    p.add_argument("--train", required=True, help="Manifesto de ensaios de treino")
    p.add_argument("--test", required=True, help="Manifesto de ensaios de teste")
    p.add_argument("--preproc", help="Relatório de preproc-select a reutilizar (salta a grelha)")
    p.add_argument("--out", help="Relatório JSON (default: stdout)")
    p.set_defaults(handler=cmd_session)

    return parser


NON_CONFIG_KEYS = {"command", "handler", "config", "log_level", "out", "data", "model", "train", "test", "preproc"}


def _error(payload: dict) -> None:
    sys.stderr.write(json.dumps({"error": payload}, ensure_ascii=False) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    overrides = {k: v for k, v in vars(args).items() if k not in NON_CONFIG_KEYS}
    try:
        cfg = RunConfig.resolve(args.config, overrides)
        logger.info("🚀 %s (formato %s)", args.command, settings.FORMAT_VERSION)
        return args.handler(args, cfg)
    except SpdReduceError as e:
        logger.error("❌ %s", e)
        _error(e.to_dict())
        return e.exit_code
    except OSError as e:
        logger.error("❌ %s", e)
        _error({"type": type(e).__name__, "message": str(e), "exit_code": 3})
        return 3


if __name__ == "__main__":
    sys.exit(main())

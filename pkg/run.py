#!/usr/bin/env python3
"""
hullconc command-line runner
Experiments, single checks, model validation and the read-only API server
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from cli_io import (
    RunManifest,
    manifest_path_for,
    parse_body_spec,
    parse_config,
    parse_grid,
    parse_number_list,
    save_json,
    to_jsonable,
    validate_config,
    write_manifest,
    write_report,
)
from config import (
    API_HOST,
    API_PORT,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    EXIT_SOUNDNESS_VIOLATION,
    MODEL_MIN_CALIBRATION,
    TOOL_VERSION,
)
from distributions import build_model, parse_model_string, validate_model
from errors import ConfigError, HullConcError, SoundnessViolation
from experiments import ExperimentConfig, run_experiment
from geometry import build_net, net_coverage

logger = logging.getLogger("hullconc")


class _Parser(argparse.ArgumentParser):
    """Usage errors are config errors"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


# ============== Experiment plumbing ==============

def _load(args, experiment: str, overrides: Dict[str, Any]) -> ExperimentConfig:
    """Config file (if any) with command-line values laid over it"""
    raw: Dict[str, Any] = {}
    if getattr(args, "config", None):
        raw = parse_config(args.config).model_dump(mode="json", exclude_none=True)
        if raw.get("experiment") != experiment:
            raise ConfigError(f"{args.config}: experiment is '{raw.get('experiment')}', "
                              f"expected '{experiment}'")
    raw["experiment"] = experiment
    for key in ("trials", "seed", "out", "threads", "summary_out", "mode", "replicates"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "model", None):
        raw["model"] = parse_model_string(args.model).model_dump(mode="json", exclude_none=True)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(raw, source=getattr(args, "config", None) or "command line")


def execute(config: ExperimentConfig, store: bool = True) -> RunManifest:
    """Run one experiment; write CSV, JSON summary and manifest; optionally record the run"""
    manifest = RunManifest.start(config.experiment, config, config.seed)
    started = time.perf_counter()
    report = run_experiment(config, config.threads)
    elapsed = time.perf_counter() - started

    out = Path(config.out or f"{config.experiment}.csv")
    summary_out = Path(config.summary_out) if config.summary_out else out.with_suffix(".json")
    manifest.outputs.append(write_report(report.rows, out, "csv", report.columns))
    manifest.outputs.append(save_json(summary_out, {
        "experiment": config.experiment,
        "tool_version": TOOL_VERSION,
        "config_hash": manifest.config_hash,
        "wall_time_seconds": round(elapsed, 3),
        "summary": report.summary,
    }))
    manifest.finish()
    manifest_file = write_manifest(manifest, manifest_path_for(out))
    logger.info(f"{config.experiment}: {len(report.rows)} rows in {elapsed:.1f}s; "
                f"manifest {manifest_file}")

    if store:
        from database import get_store

        db = get_store()
        db.record_run(manifest)
        db.store_records(manifest.run_id, report.table, report.rows)
    print(json.dumps(to_jsonable({"run_id": manifest.run_id, "out": str(out),
                                  "elapsed_seconds": round(elapsed, 3),
                                  "summary": report.summary}), indent=2, sort_keys=True))
    return manifest


def _experiment_command(experiment: str, overrides_fn=None):
    def command(args) -> int:
        overrides = overrides_fn(args) if overrides_fn else {}
        execute(_load(args, experiment, overrides), store=not args.no_store)
        return EXIT_OK
    return command


def _sizes(args) -> Optional[List[int]]:
    return parse_number_list(args.n, int) if getattr(args, "n", None) else None


def _epsilons(args) -> Optional[List[float]]:
    return parse_number_list(args.epsilon) if getattr(args, "epsilon", None) else None


def _theorem1_overrides(args):
    return {"sizes": _sizes(args), "epsilons": _epsilons(args), "delta": args.delta}


def _corollary2_overrides(args):
    return {"sizes": _sizes(args), "directions": args.directions}


def _strong_law_overrides(args):
    schedule = None
    if args.k_min is not None or args.k_max is not None:
        schedule = {k: v for k, v in (("k_min", args.k_min), ("k_max", args.k_max)) if v is not None}
    return {"schedule": schedule, "directions": args.directions}


def _lemma4_overrides(args):
    laws = [s.strip() for s in args.law.split(",") if s.strip()] if args.law else None
    t_grid = parse_grid(args.t_grid) if args.t_grid else None
    return {"laws": laws, "sizes": _sizes(args), "t_grid": t_grid}


def _inclusion_overrides(args):
    return {"sizes": _sizes(args), "epsilons": _epsilons(args), "draws": args.draws}


# ============== Single-shot commands ==============

def cmd_net(args) -> int:
    body = parse_body_spec(args.body)
    net = build_net(body, args.epsilon, candidate_budget=args.budget, seed=args.seed)
    coverage = net_coverage(net, samples=args.samples, seed=args.seed + 1)
    payload = {**net.to_dict(), "coverage": coverage}
    if args.out:
        save_json(args.out, payload)
    summary = {k: v for k, v in to_jsonable(payload).items() if k != "points"}
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate_model(args) -> int:
    model = build_model(parse_model_string(args.model))
    diagnostics = validate_model(model, args.m, args.seed)
    print(json.dumps(to_jsonable(diagnostics), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("api:app", host=args.host, port=args.port)
    return EXIT_OK


# ============== Parser ==============

def _common(p: argparse.ArgumentParser, config: bool = True):
    if config:
        p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--summary-out", dest="summary_out", help="JSON summary path")
    p.add_argument("--threads", type=int, help="worker count (env HULLCONC_THREADS)")
    p.add_argument("--no-store", action="store_true", help="do not record the run in DuckDB")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hullconc", description="Concentration of random polytopes around the "
                                                  "expected convex hull")
    parser.add_argument("--version", action="version", version=f"hullconc {TOOL_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("order-stats", help="exact two-sided bound sweep for 1D laws")
    p.add_argument("--law", help="comma-separated law specs, e.g. normal,uniform:2")
    p.add_argument("--n", help="comma-separated sample counts (>= 12)")
    p.add_argument("--t-grid", dest="t_grid", help="start:stop:step or comma list")
    _common(p, config=False)
    p.set_defaults(func=_experiment_command("lemma4", _lemma4_overrides))

    p = sub.add_parser("lemma4", help="exact two-sided bound sweep from a config")
    p.add_argument("--law")
    p.add_argument("--n")
    p.add_argument("--t-grid", dest="t_grid")
    _common(p)
    p.set_defaults(func=_experiment_command("lemma4", _lemma4_overrides))

    p = sub.add_parser("net", help="greedy epsilon-net on a body boundary")
    p.add_argument("--body", required=True,
                   help="interval[:a] | square[:a] | triangle | vertices:x,y;.. | expected-hull:<model>@<n>")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, help="consecutive covered candidates before stopping")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--out", help="JSON output path")
    p.set_defaults(func=cmd_net)

    for name, experiment, overrides in (
        ("sandwich", "theorem1", _theorem1_overrides),
        ("theorem1", "theorem1", _theorem1_overrides),
    ):
        p = sub.add_parser(name, help="net-certified sandwich trials with brute-force cross-check")
        p.add_argument("--model", help="gaussian:<d> | gaussian-diag:.. | uniform-box:.. | laplace:..")
        p.add_argument("--n")
        p.add_argument("--epsilon")
        p.add_argument("--delta", type=float, help="net resolution override")
        p.add_argument("--mode", choices=["analytic", "mc"])
        p.add_argument("--replicates", type=int)
        p.add_argument("--trials", type=int)
        _common(p)
        p.set_defaults(func=_experiment_command(experiment, overrides))

    p = sub.add_parser("corollary2", help="floating body vs expected hull, direction by direction")
    p.add_argument("--model")
    p.add_argument("--n")
    p.add_argument("--directions", type=int)
    _common(p)
    p.set_defaults(func=_experiment_command("corollary2", _corollary2_overrides))

    p = sub.add_parser("strong-law", help="prefix-hull defects along n = 2^k")
    p.add_argument("--model")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--mode", choices=["analytic", "mc"])
    _common(p)
    p.set_defaults(func=_experiment_command("strong_law", _strong_law_overrides))

    p = sub.add_parser("inclusion", help="mu((1+eps) E P_n) estimates")
    p.add_argument("--model")
    p.add_argument("--n")
    p.add_argument("--epsilon")
    p.add_argument("--draws", type=int)
    _common(p)
    p.set_defaults(func=_experiment_command("inclusion", _inclusion_overrides))

    p = sub.add_parser("validate-model", help="centering and covariance diagnostics")
    p.add_argument("--model", required=True)
    p.add_argument("--m", type=int, default=10 * MODEL_MIN_CALIBRATION)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate_model)

    p = sub.add_parser("serve", help="start the read-only REST API")
    p.add_argument("--host", default=API_HOST)
    p.add_argument("--port", type=int, default=API_PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except SoundnessViolation as e:
        logger.error(f"Soundness violation: {e}")
        return EXIT_SOUNDNESS_VIOLATION
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except HullConcError as e:
        logger.error(f"Runtime error: {e}")
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())

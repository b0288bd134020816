"""Command-line entry point: deterministic, machine-readable JSON for every module.

Subcommands: spectral, t1, t2, bounds, oracle, coverage, gallery.  Identical
flags and files always produce byte-identical JSON on stdout (no timestamps).
Validation problems exit 2 with a structured error object on stderr; internal
errors exit 1.  RMCI_THREADS caps the coverage worker count (speed only, never
output).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from . import __version__
from .chain_core import (
    ChainValidationError,
    ReversibleChain,
    load_chain_file,
    chain_to_dict,
    spectral_summary,
    stationary_mean,
)
from .deviation_bounds import (
    InfiniteRelaxationError,
    con3_bound,
    lezaud_one_sided,
    lezaud_two_sided,
    lower_bound_length,
    prop2_bound,
)
from .estimator_t1 import T1Config, run_t1
from .estimator_t2 import BudgetOverflowError, T2Config, run_t2, stage_csv_rows
from .harness import (
    SeedSchedule,
    coverage_experiment,
    gallery,
    gallery_entry,
    near_disconnected_bias_demo,
    replication_csv_rows,
)
from .oracle import EnumerationTooLargeError, exact_a1_distribution, exact_tail

LAMBDA_GRID = [round(0.05 * i, 2) for i in range(1, 20)]


class FlagValidationError(ValueError):
    """Flags failed the subcommand's schema."""


class ChainFileError(ValueError):
    """Chain source missing or invalid."""


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2) with plain text; raise instead so dispatch can
    # emit the structured error object.
    def error(self, message):
        raise FlagValidationError(message)


def _real(x: float):
    return "INFINITE" if isinstance(x, float) and math.isinf(x) else x


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, indent=2))
    sys.stdout.write("\n")


def _resolve_chain(source: str) -> tuple[ReversibleChain, str]:
    if source.startswith("gallery:"):
        name = source[len("gallery:"):]
        try:
            entry = gallery_entry(name)
        except KeyError as exc:
            raise ChainFileError(str(exc)) from exc
        return entry.chain, entry.name
    try:
        return load_chain_file(source)
    except FileNotFoundError as exc:
        raise ChainFileError(f"chain file not found: {source}") from exc
    except (json.JSONDecodeError, ChainValidationError) as exc:
        raise ChainFileError(f"invalid chain file {source}: {exc}") from exc


def _write_csv(path: str, rows: list[dict], fieldnames: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _wrap(chain_name: str, body: dict) -> dict:
    return {"artifact_version": __version__, "chain_name": chain_name, **body}


# --------------------------------------------------------------------------
# Subcommand handlers
# --------------------------------------------------------------------------

def _cmd_spectral(args) -> int:
    chain, name = _resolve_chain(args.chain)
    summary = spectral_summary(chain)
    _emit(_wrap(name, {
        "num_states": chain.num_states,
        "eigenvalues": [float(v) for v in summary.eigenvalues],
        "lambda2": summary.lambda2,
        "relaxation_time": _real(summary.relaxation_time),
        "stationary_mean": stationary_mean(chain),
    }))
    return 0


def _cmd_t1(args) -> int:
    chain, name = _resolve_chain(args.chain)
    config = T1Config(n=args.n, m=args.m, alpha=args.alpha, tau_hat=args.tau_hat,
                      root_seed=args.seed)
    report = run_t1(chain, config)
    _emit(_wrap(name, report.to_dict()))
    return 0


def _cmd_t2(args) -> int:
    chain, name = _resolve_chain(args.chain)
    config = T2Config(n=args.n, alpha=args.alpha, tau_hat=args.tau_hat, a=args.a,
                      root_seed=args.seed, max_paper_steps=args.max_steps)
    report = run_t2(chain, config)
    if args.csv:
        _write_csv(args.csv, stage_csv_rows(report),
                   ["k", "m_k", "truncation_count", "stage_interval_lo", "stage_interval_hi"])
    _emit(_wrap(name, report.to_dict()))
    return 0


def _cmd_bounds(args) -> int:
    def need(flag_name, value):
        if value is None:
            raise FlagValidationError(f"--{flag_name} is required for this bound")
        return value

    if args.prop2:
        b = prop2_bound(need("n", args.n), need("m", args.m), need("tau2", args.tau2))
        body = {"bound": "prop2", "n": args.n, "m": args.m, "tau2": args.tau2,
                "value": b.value, "vacuous": b.vacuous}
    elif args.con3:
        b = con3_bound(need("n", args.n))
        body = {"bound": "con3", "n": args.n, "value": b.value, "vacuous": b.vacuous}
    elif args.lezaud_one_sided:
        b = lezaud_one_sided(need("lambda", args.lam), need("m", args.m), need("tau2", args.tau2))
        body = {"bound": "lezaud_one_sided", "lambda": args.lam, "m": args.m,
                "tau2": args.tau2, "value": b.value, "vacuous": b.vacuous}
    elif args.lezaud_two_sided:
        b = lezaud_two_sided(need("lambda", args.lam), need("m", args.m), need("tau2", args.tau2))
        body = {"bound": "lezaud_two_sided", "lambda": args.lam, "m": args.m,
                "tau2": args.tau2, "value": b.value, "vacuous": b.vacuous}
    elif args.lower_bound_length:
        value = lower_bound_length(need("n", args.n), need("m", args.m), need("tau2", args.tau2))
        body = {"bound": "lower_bound_length", "n": args.n, "m": args.m,
                "tau2": args.tau2, "value": value}
    else:
        raise FlagValidationError("pick one bound: --prop2, --con3, --lezaud-one-sided, "
                                  "--lezaud-two-sided or --lower-bound-length")
    _emit({"artifact_version": __version__, **body})
    return 0


def _cmd_oracle(args) -> int:
    chain, name = _resolve_chain(args.chain)
    dist = exact_a1_distribution(chain, args.m, chain_name=name)
    if args.csv:
        tau2 = spectral_summary(chain).relaxation_time
        gbar = stationary_mean(chain)
        rows = []
        for lam in LAMBDA_GRID:
            rows.append({
                "lambda": lam,
                "exact_tail": exact_tail(dist, gbar, lam),
                "lezaud_two_sided": lezaud_two_sided(lam, args.m, tau2).value,
            })
        _write_csv(args.csv, rows, ["lambda", "exact_tail", "lezaud_two_sided"])
    _emit(_wrap(name, dist.to_dict()))
    return 0


def _cmd_coverage(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        estimator = spec["estimator"]
        chain_source = spec["chain"]
        if isinstance(chain_source, dict):
            from .chain_core import chain_from_dict
            chain, name = chain_from_dict(chain_source)
        else:
            chain, name = _resolve_chain(chain_source)
        cfg = dict(spec["config"])
        replications = int(spec["replications"])
        experiment_seed = int(spec["experiment_seed"])
    else:
        estimator = args.estimator
        if estimator is None:
            raise FlagValidationError("--estimator is required without --config")
        chain, name = _resolve_chain(args.chain)
        cfg = {"n": args.n, "alpha": args.alpha, "tau_hat": args.tau_hat}
        if estimator == "t1":
            cfg["m"] = args.m
        else:
            cfg["a"] = args.a
        replications = args.replications
        experiment_seed = args.experiment_seed

    if estimator == "t1":
        for key in ("n", "m", "alpha", "tau_hat"):
            if cfg.get(key) is None:
                raise FlagValidationError(f"t1 coverage needs --{key.replace('_', '-')}")
        base = T1Config(n=cfg["n"], m=cfg["m"], alpha=cfg["alpha"], tau_hat=cfg["tau_hat"],
                        root_seed=0)
    elif estimator == "t2":
        for key in ("n", "alpha", "tau_hat", "a"):
            if cfg.get(key) is None:
                raise FlagValidationError(f"t2 coverage needs --{key.replace('_', '-')}")
        base = T2Config(n=cfg["n"], alpha=cfg["alpha"], tau_hat=cfg["tau_hat"], a=cfg["a"],
                        root_seed=0)
    else:
        raise FlagValidationError("estimator must be t1 or t2")

    summary = coverage_experiment(chain, estimator, base, replications,
                                  SeedSchedule(experiment_seed), chain_name=name,
                                  workers=args.workers)
    if args.csv:
        _write_csv(args.csv, replication_csv_rows(summary),
                   ["index", "root_seed", "miss", "truncation_count", "length", "T", "M"])
    _emit({"artifact_version": __version__, **summary.to_dict()})
    return 0


def _cmd_gallery(args) -> int:
    if args.export:
        entry = gallery_entry(args.export)
        payload = chain_to_dict(entry.chain, entry.name)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            _emit({"artifact_version": __version__, "exported": entry.name, "path": args.out})
        else:
            _emit(payload)
        return 0
    if args.island_demo is not None:
        _emit({"artifact_version": __version__,
               **near_disconnected_bias_demo(args.island_demo).to_dict()})
        return 0
    _emit({"artifact_version": __version__,
           "gallery": [entry.to_dict() for entry in gallery()]})
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmci", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND",
                               parser_class=_Parser)

    def add_chain(p):
        p.add_argument("--chain", required=True,
                       help="chain definition JSON file, or gallery:NAME")

    p = sub.add_parser("spectral",
                       help="eigenvalues and relaxation time of a chain")
    add_chain(p)
    p.set_defaults(handler=_cmd_spectral)

    p = sub.add_parser("t1",
                       help="single-guess confidence interval run")
    add_chain(p)
    p.add_argument("--n", type=int, required=True, help="trajectories per phase (>= 3)")
    p.add_argument("--m", type=int, required=True, help="states per trajectory (>= 1)")
    p.add_argument("--alpha", type=float, required=True, help="miss probability in (0, 1)")
    p.add_argument("--tau-hat", type=float, required=True, help="relaxation-time guess (>= 1)")
    p.add_argument("--seed", type=int, required=True, help="64-bit root seed")
    p.set_defaults(handler=_cmd_t1)

    p = sub.add_parser("t2",
                       help="adaptive doubling confidence interval run")
    add_chain(p)
    p.add_argument("--n", type=int, required=True, help="trajectories per phase (>= 5)")
    p.add_argument("--alpha", type=float, required=True, help="miss probability in (0, 1)")
    p.add_argument("--tau-hat", type=float, required=True, help="relaxation-time guess (>= 1)")
    p.add_argument("--a", type=int, required=True, help="number of doublings (>= 0)")
    p.add_argument("--seed", type=int, required=True, help="64-bit root seed")
    p.add_argument("--max-steps", type=int, default=10**9, help="hard cap on paper steps")
    p.add_argument("--csv", help="write row-per-stage CSV here")
    p.set_defaults(handler=_cmd_t2)

    p = sub.add_parser("bounds",
                       help="evaluate a closed-form bound")
    p.add_argument("--prop2", action="store_true", help="truncation-probability bound")
    p.add_argument("--con3", action="store_true", help="budget-overshoot bound")
    p.add_argument("--lezaud-one-sided", action="store_true", help="one-sided tail bound")
    p.add_argument("--lezaud-two-sided", action="store_true", help="two-sided tail bound")
    p.add_argument("--lower-bound-length", action="store_true",
                   help="best-achievable length benchmark")
    p.add_argument("--n", type=int, help="number of trajectories")
    p.add_argument("--m", type=int, help="states per trajectory")
    p.add_argument("--tau2", type=float, help="relaxation time")
    p.add_argument("--lambda", dest="lam", type=float, help="deviation size")
    p.set_defaults(handler=_cmd_bounds)

    p = sub.add_parser("oracle",
                       help="exact distribution of the m-step trajectory average")
    add_chain(p)
    p.add_argument("--m", type=int, required=True, help="states per trajectory")
    p.add_argument("--csv", help="write (lambda, exact tail, tail bound) CSV here")
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("coverage",
                       help="replicated coverage experiment")
    p.add_argument("--config", help="experiment config JSON (overrides other flags)")
    p.add_argument("--estimator", choices=["t1", "t2"])
    p.add_argument("--chain", help="chain definition JSON file, or gallery:NAME")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau-hat", type=float)
    p.add_argument("--a", type=int)
    p.add_argument("--replications", type=int, default=2000)
    p.add_argument("--experiment-seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="parallel workers (default: RMCI_THREADS or 1)")
    p.add_argument("--csv", help="write per-replication CSV here")
    p.set_defaults(handler=_cmd_coverage)

    p = sub.add_parser("gallery",
                       help="list or export the built-in chains")
    p.add_argument("--list", action="store_true", help="list entries (default action)")
    p.add_argument("--export", metavar="NAME", help="emit a chain definition JSON")
    p.add_argument("--out", help="write the exported chain here instead of stdout")
    p.add_argument("--island-demo", type=int, metavar="N",
                   help="report the invisible mass of a 1/N island")
    p.set_defaults(handler=_cmd_gallery)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            raise FlagValidationError("missing subcommand (try --help)")
        return args.handler(args)
    except (FlagValidationError, ChainFileError, ChainValidationError, ValueError,
            BudgetOverflowError, InfiniteRelaxationError, EnumerationTooLargeError) as exc:
        sys.stderr.write(json.dumps(
            {"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps(
            {"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n")
        return 1


def main_entry() -> None:
    sys.exit(main())

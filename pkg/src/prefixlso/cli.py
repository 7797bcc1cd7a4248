"""Command-line surface.

Subcommands: gen, eval, ga, cvae, export, report, pca. Exit codes: 0 success,
1 usage/config error, 2 runtime error, 3 run stopped on budget exhaustion.
Setting PREFIXLSO_ORACLE_CMD routes circuit scoring through an external
command speaking the line-oriented JSON oracle protocol.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import cost_oracle as co
from . import ga as ga_mod
from . import orchestrator as orch
from . import prefix_graph as pg
from . import report as report_mod
from .runconfig import ConfigError, load_run_config

ORACLE_CMD_ENV = "PREFIXLSO_ORACLE_CMD"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_BUDGET = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise _UsageError(message)


FAMILIES = {
    "ripple": pg.ripple_carry,
    "sklansky": pg.sklansky,
    "kogge_stone": pg.kogge_stone,
    "brent_kung": pg.brent_kung,
}


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--seed", type=int, help="seed override")
    common.add_argument("--out-dir", type=Path, help="output directory")

    parser = _Parser(prog="prefixlso", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="emit a classical constructor bitvector")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--family", choices=sorted(FAMILIES), required=True)

    p = sub.add_parser("eval", parents=[common], help="score one bitvector")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--bitvector", required=True, help="hex bitvector, or - for stdin")
    p.add_argument("--omega", type=float, required=True, help="delay weight")
    p.add_argument("--kind", choices=co.KINDS, default="adder")

    p = sub.add_parser("ga", parents=[common], help="run the GA baseline")
    p.add_argument("--generations", type=int, help="default: run to the budget")
    p.add_argument("--budget", type=int, help="override config budget")

    p = sub.add_parser("cvae", parents=[common], help="run the full optimization loop")
    p.add_argument("--budget", type=int, help="override config budget")
    p.add_argument("--rounds", type=int, help="override config rounds")

    p = sub.add_parser("export", parents=[common], help="export a run log as CSV")
    p.add_argument("--run-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, help="default: <run-dir>/dataset.csv")

    p = sub.add_parser("report", parents=[common], help="median/IQR best-so-far curves")
    p.add_argument("--run-dirs", type=Path, nargs="+", required=True)
    p.add_argument("--group-by", default="algo", help="dotted config key (default: algo)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("pca", parents=[common], help="2-D PCA of logged latents")
    p.add_argument("--run-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, help="default: <run-dir>/pca.csv")
    return parser


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise _UsageError(f"--{name.replace('_', '-')} is required for this command")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _cmd_gen(args) -> int:
    graph = FAMILIES[args.family](args.width)
    print(pg.to_bitvector(graph).to_hex())
    return EXIT_OK


def _cmd_eval(args) -> int:
    text = args.bitvector
    if text == "-":
        text = sys.stdin.readline().strip()
    bits = pg.hex_to_bits(args.width, text)
    config = co.CostConfig(width=args.width, delay_weight=args.omega,
                           circuit_kind=args.kind)
    command = os.environ.get(ORACLE_CMD_ENV)
    if command:
        rep = co.evaluate_external(bits, config, command)
    else:
        rep = co.evaluate(bits, config)
    print(f"area {_fmt(rep.area)} delay {_fmt(rep.delay)} cost {_fmt(rep.cost)}")
    return EXIT_OK


def _make_run_config(args, need_out_dir=True):
    _require(args, "config")
    if need_out_dir:
        _require(args, "out_dir")
    config = load_run_config(args.config, seed_override=args.seed)
    overrides = {}
    for name in ("budget", "rounds"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    return config


def _cmd_ga(args) -> int:
    config = _make_run_config(args)
    result = orch.run_ga_baseline(config, args.out_dir, generations=args.generations)
    best = result.best
    print(f"best cost {_fmt(best.true_score)} bitvector {best.bitvector} "
          f"evaluations {len(result.dataset)}")
    return EXIT_BUDGET if result.exhausted else EXIT_OK


def _cmd_cvae(args) -> int:
    config = _make_run_config(args)
    result = orch.run_circuitvae(config, args.out_dir)
    best = result.best
    print(f"best cost {_fmt(best.true_score)} bitvector {best.bitvector} "
          f"evaluations {len(result.dataset)} rounds {result.rounds_completed}")
    return EXIT_BUDGET if result.exhausted else EXIT_OK


def _cmd_export(args) -> int:
    out = report_mod.export_dataset(args.run_dir, args.out)
    print(str(out))
    return EXIT_OK


def _cmd_report(args) -> int:
    report_mod.write_report(args.run_dirs, args.out, group_key=args.group_by)
    print(str(args.out))
    return EXIT_OK


def _cmd_pca(args) -> int:
    records = orch.load_log(args.run_dir)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    lines = report_mod.pca_rows(records, rng)
    out = args.out if args.out is not None else Path(args.run_dir) / "pca.csv"
    out.write_text("\n".join(lines) + "\n")
    print(str(out))
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "eval": _cmd_eval,
    "ga": _cmd_ga,
    "cvae": _cmd_cvae,
    "export": _cmd_export,
    "report": _cmd_report,
    "pca": _cmd_pca,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, co.ExternalOracleError, co.BudgetExhausted) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

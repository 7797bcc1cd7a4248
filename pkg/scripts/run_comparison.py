#!/usr/bin/env python3
"""Cost-vs-budget comparison: CircuitVAE against the GA baseline.

Runs both algorithms at the desk preset for each (delay weight, seed) pair,
writes one run directory per run under --out-dir, and aggregates median/IQR
best-so-far curves into curves.csv. Prints a summary table at the end.

Example:
    python3 scripts/run_comparison.py --out-dir runs/ --omegas 0.33 0.95 \
        --seeds 0 1 2 --budget 2500
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from prefixlso import experiments as ex
from prefixlso import orchestrator as orch
from prefixlso import report


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("--omegas", type=float, nargs="+", default=[0.33, 0.95])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--budget", type=int, default=ex.DESK_BUDGET)
    parser.add_argument("--steps-per-round", type=int, default=1500)
    parser.add_argument("--skip-cvae", action="store_true")
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    bests: dict[tuple[float, str], list[float]] = {}
    run_dirs_by_omega: dict[float, list[Path]] = {}

    for omega in args.omegas:
        config = ex.desk_experiment_config(omega, seed=0, budget=args.budget)
        classical = ex.best_classical_cost(config.cost)
        print(f"== omega {omega}: best classical constructor cost {classical:.4f}")
        for seed in args.seeds:
            config = ex.desk_experiment_config(
                omega, seed=seed, budget=args.budget,
                steps_per_round=args.steps_per_round,
            )
            tag = f"w{config.cost.width}_omega{omega}_seed{seed}"
            t0 = time.time()
            ga_dir = args.out_dir / f"ga_{tag}"
            ga_res = orch.run_ga_baseline(config, ga_dir)
            bests.setdefault((omega, "ga"), []).append(ga_res.best.true_score)
            run_dirs_by_omega.setdefault(omega, []).append(ga_dir)
            print(f"  ga   seed {seed}: best {ga_res.best.true_score:.4f} "
                  f"({len(ga_res.dataset)} evals, {time.time() - t0:.0f}s)")
            if args.skip_cvae:
                continue
            t0 = time.time()
            cvae_dir = args.out_dir / f"cvae_{tag}"
            cvae_res = orch.run_circuitvae(config, cvae_dir)
            bests.setdefault((omega, "cvae"), []).append(cvae_res.best.true_score)
            run_dirs_by_omega.setdefault(omega, []).append(cvae_dir)
            print(f"  cvae seed {seed}: best {cvae_res.best.true_score:.4f} "
                  f"({len(cvae_res.dataset)} evals, {cvae_res.rounds_completed} rounds, "
                  f"{time.time() - t0:.0f}s)")

    for omega, dirs in run_dirs_by_omega.items():
        out = args.out_dir / f"curves_omega{omega}.csv"
        report.write_report(dirs, out, group_key="algo")
        print(f"wrote {out}")

    print("\nsummary (median best cost):")
    for (omega, algo), values in sorted(bests.items()):
        print(f"  omega {omega} {algo:5s}: {np.median(values):.4f}  "
              f"{[round(v, 4) for v in sorted(values)]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

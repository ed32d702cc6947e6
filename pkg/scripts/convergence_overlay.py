"""Overlay gradient-norm curves of reduced GN and alternating LS on a seeded grid.

Example:
    python scripts/convergence_overlay.py --p 30 --q 5 15 --n 2000 --seeds 10 --out results/overlay
"""

import argparse
from pathlib import Path

from efa_gn.cli import paired_below
from efa_gn.harness import seeded_specs, sweep
from efa_gn.io import write_summary
from efa_gn.plotting import write_convergence_svg
from efa_gn.reduced import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=30)
    ap.add_argument("--q", type=int, nargs="+", default=[5, 15])
    ap.add_argument("--n", type=int, nargs="+", default=[2000])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--mask", default="identity")
    ap.add_argument("--max-iters", type=int, default=300)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/overlay"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    cfg = SolverConfig(max_iterations=args.max_iters)
    cells = []
    print(f"{'P':>4} {'Q':>4} {'N':>6}  {'solver':<8} {'median its to 1e6':>18} {'failure rate':>13}")
    for n in args.n:
        for q in args.q:
            trials, summary = sweep(seeded_specs(args.p, q, n, args.seeds, args.mask, cfg=cfg), args.jobs)
            for name, s in summary.items():
                print(f"{args.p:>4} {q:>4} {n:>6}  {name:<8} {str(s['median_iterations_to_drop']):>18} "
                      f"{s['failure_rate']:>13.2f}")
            below = paired_below(trials)
            print(f"{'':>17}reduced below altls at its final iteration: {below}/{len(trials)}")
            curves = [(f"{name} seed {t.spec.model_seed}", name, r.trace.grad_norms)
                      for t in trials for name, r in t.results.items()]
            write_convergence_svg(args.out / f"overlay_P{args.p}_Q{q}_N{n}.svg", curves,
                                  title=f"P={args.p}, Q={q}, N={n}")
            cells.append({"P": args.p, "Q": q, "N": n, "solvers": summary, "reduced_below_altls_at_final": below})
    write_summary(args.out / "summary.json", {"cells": cells})


if __name__ == "__main__":
    main()

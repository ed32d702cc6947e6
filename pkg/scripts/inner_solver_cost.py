"""Spectral radius of T and inner-solve iterations as Q/P grows.

For each Q the script fits one sampled instance and reports rho(T) at the
final iterate together with the mean CG and Richardson iteration counts per
outer step. Richardson contracts at rate rho(T), so its count grows sharply
as rho(T) approaches one; CG grows roughly with the square root.

Example:
    python scripts/inner_solver_cost.py --p 40 --n 4000
"""

import argparse
import dataclasses

import numpy as np

from efa_gn.harness import ExperimentSpec, build_covariance, make_mask
from efa_gn.model import check_identifiability
from efa_gn.reduced import SolverConfig, apply_T, fit


def spectral_radius(U0, mask, iters=5000, seed=0):
    x = np.random.default_rng(seed).standard_normal(mask.l1).astype(complex)
    lam = 0.0
    for _ in range(iters):
        y = apply_T(x, U0, mask)
        lam_new = float(np.vdot(x, y).real / np.vdot(x, x).real)
        x = y / np.linalg.norm(y)
        if abs(lam_new - lam) <= 1e-10 * lam_new:
            break
        lam = lam_new
    return lam_new


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=40)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--mask", default="identity")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = SolverConfig(max_iterations=200, inner_cg_max=20000)
    print(f"{'Q':>4} {'Q/P':>5} {'rho(T)':>9} {'CG its':>8} {'Richardson its':>15} {'outer':>6}")
    for q in np.unique(np.linspace(1, args.p - 1, 8).astype(int)):
        if not check_identifiability(args.p, int(q), make_mask(args.p, args.mask)):
            continue
        _, mask, R = build_covariance(ExperimentSpec(args.p, int(q), args.n, args.mask, args.seed, args.seed + 1))
        row = []
        for solver in ("cg", "richardson"):
            model, trace = fit(R, mask, int(q), dataclasses.replace(base, inner_solver=solver))
            row.append(np.mean([r.inner_iters for r in trace.records[1:]]) if len(trace) > 1 else 0.0)
        rho = spectral_radius(model.U0, mask)
        print(f"{q:>4} {q / args.p:>5.2f} {rho:>9.5f} {row[0]:>8.1f} {row[1]:>15.1f} {len(trace) - 1:>6}")


if __name__ == "__main__":
    main()

"""Command line: ``efa-gn {simulate,fit,verify,bench}``.

Exit codes: 0 converged / success, 2 fit finished without converging,
1 error.
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import io as efa_io
from .baselines import fit_alternating
from .errors import EFAError
from .harness import SOLVERS, ExperimentSpec, build_covariance, make_mask, seeded_specs, simulate_samples, sweep
from .model import check_hermitian, check_identifiability, sample_covariance
from .plotting import write_convergence_svg
from .reduced import SolverConfig, Status, fit
from .verify import format_table, run_verification

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _step(value):
    if value == "cubic":
        return ("exact_cubic", 1.0)
    if value.startswith("fixed:"):
        try:
            mu = float(value.split(":", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad step length in {value!r}") from None
        return ("fixed", mu)
    raise argparse.ArgumentTypeError("--step must be 'cubic' or 'fixed:MU'")


def _int_list(value):
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def _size_range(value):
    try:
        if ".." in value:
            lo, hi = value.split("..")
            return list(range(int(lo), int(hi) + 1))
        return _int_list(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI or a list, got {value!r}") from None


def _positive_int(value):
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=_positive_int, default=500)
    p.add_argument("--grad-tol", type=float, default=1e-8)
    p.add_argument("--inner-tol", type=float, default=1e-10)
    p.add_argument("--step", type=_step, default=("exact_cubic", 1.0))


def _config(args):
    mode, mu = args.step
    return SolverConfig(max_iterations=args.max_iters, grad_tol_rel=args.grad_tol,
                        inner_cg_tol=args.inner_tol, step_mode=mode, fixed_mu=mu)


def build_parser():
    parser = argparse.ArgumentParser(prog="efa-gn", description="Fit extended factor-analysis models by reduced Gauss-Newton.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a synthetic model and write Rhat (or samples)")
    s.add_argument("--p", type=_positive_int, required=True)
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--n", type=int, required=True, help="samples; 0 writes the exact covariance")
    s.add_argument("--seed", type=int, default=0, help="model seed")
    s.add_argument("--noise-seed", type=int, default=None, help="noise seed (default: seed + 1)")
    s.add_argument("--mask", default="identity")
    s.add_argument("--out", required=True)
    s.add_argument("--samples", action="store_true", help="write the N x P samples instead of Rhat")

    f = sub.add_parser("fit", help="fit a covariance matrix file")
    f.add_argument("input")
    f.add_argument("--q", type=int, required=True)
    f.add_argument("--mask", default="identity")
    f.add_argument("--solver", choices=SOLVERS, default="reduced")
    _add_solver_flags(f)
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--plot", action="store_true")

    v = sub.add_parser("verify", help="check the fast solver against the dense oracle")
    v.add_argument("--sweep-sizes", type=_size_range, default=list(range(3, 9)))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)

    b = sub.add_parser("bench", help="seeded sweep with overlay plots and a summary")
    b.add_argument("--p", type=_positive_int, required=True)
    b.add_argument("--q", type=_int_list, required=True)
    b.add_argument("--n", type=_int_list, required=True)
    b.add_argument("--seeds", type=int, default=10, help="number of seeds per cell")
    b.add_argument("--seed", type=int, default=0, help="first model seed")
    b.add_argument("--mask", default="identity")
    b.add_argument("--solver", type=lambda v: v.split(","), default=list(SOLVERS))
    _add_solver_flags(b)
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    b.add_argument("--jobs", type=_positive_int, default=1)
    return parser


def cmd_simulate(args):
    noise_seed = args.seed + 1 if args.noise_seed is None else args.noise_seed
    spec_mask = make_mask(args.p, args.mask)
    if not 0 <= args.q <= args.p:
        raise ValueError(f"need 0 <= q <= p, got q={args.q}")
    if not check_identifiability(args.p, args.q, spec_mask):
        print(f"warning: unidentifiable configuration (P={args.p}, Q={args.q}, |M|={spec_mask.l1})",
              file=sys.stderr)
    spec = ExperimentSpec(args.p, args.q, args.n, spec_mask, args.seed, noise_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        truth, mask, R = build_covariance(spec)
    if args.samples:
        if args.n < 1:
            raise ValueError("--samples needs --n >= 1")
        Y = simulate_samples(truth, args.n, noise_seed)
        efa_io.write_matrix(args.out, Y, P=args.p)
    else:
        efa_io.write_matrix(args.out, R, P=args.p)
    print(f"model seed {args.seed}, noise seed {noise_seed}")
    return EXIT_OK


def cmd_fit(args):
    X, P = efa_io.read_matrix(args.input)
    if X.shape[0] != X.shape[1]:
        if X.shape[1] != P:
            raise ValueError(f"{args.input}: expected a P x P covariance or N x P samples")
        X = sample_covariance(X).matrix
    check_hermitian(X, tol=1e-12)
    mask = make_mask(X.shape[0], args.mask)
    cfg = _config(args)
    solver = fit if args.solver == "reduced" else fit_alternating
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, trace = solver(X, mask, args.q, cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    os.makedirs(args.out, exist_ok=True)
    efa_io.write_matrix(os.path.join(args.out, "A.mat"), model.A, P=X.shape[0])
    efa_io.write_matrix(os.path.join(args.out, "Psi.mat"), model.Psi, P=X.shape[0])
    efa_io.write_trace_csv(os.path.join(args.out, "trace.csv"), trace)
    if args.plot:
        write_convergence_svg(os.path.join(args.out, "convergence.svg"),
                              [(args.solver, args.solver, trace.grad_norms)],
                              title=f"{args.solver}, P={X.shape[0]}, Q={args.q}")
    last = trace.records[-1]
    print(f"{trace.status_label()} after {last.iteration} iterations: cost {last.cost:.6e}, "
          f"gradient {last.grad_norm:.3e}")
    if trace.status is Status.CONVERGED:
        return EXIT_OK
    if trace.status is Status.FAILED:
        print(f"error: {trace.reason}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_NOT_CONVERGED


def cmd_verify(args):
    rows = run_verification(args.sweep_sizes, args.seed, args.inject_fault)
    print(format_table(rows))
    n_fail = sum(not r.passed for r in rows)
    print(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_ERROR


def paired_below(trials, a="reduced", b="altls"):
    """Seeds where solver ``a`` has a lower gradient than ``b`` at ``a``'s final iteration."""
    count = 0
    for t in trials:
        ra, rb = t.results.get(a), t.results.get(b)
        if ra is None or rb is None or not len(ra.trace) or not len(rb.trace):
            continue
        k = len(ra.trace) - 1
        gb = rb.trace.grad_norms[min(k, len(rb.trace) - 1)]
        if ra.trace.grad_norms[-1] < gb:
            count += 1
    return count


def cmd_bench(args):
    for s in args.solver:
        if s not in SOLVERS:
            raise ValueError(f"unknown solver {s!r}")
    cfg = _config(args)
    os.makedirs(args.out, exist_ok=True)
    cells = []
    for n in args.n:
        for q in args.q:
            if args.seeds < 1:
                continue
            specs = seeded_specs(args.p, q, n, args.seeds, args.mask, args.seed, cfg, args.solver)
            trials, summary = sweep(specs, args.jobs)
            cells.append({
                "P": args.p, "Q": q, "N": n, "mask": str(args.mask), "seeds": args.seeds,
                "solvers": summary,
                "reduced_below_altls_at_final": paired_below(trials)
                if {"reduced", "altls"} <= set(args.solver) else None,
            })
            if args.plot:
                curves = [(f"{name} seed {t.spec.model_seed}", name, r.trace.grad_norms)
                          for t in trials for name, r in t.results.items()]
                write_convergence_svg(os.path.join(args.out, f"conv_P{args.p}_Q{q}_N{n}.svg"), curves,
                                      title=f"P={args.p}, Q={q}, N={n}")
            for name, s in summary.items():
                print(f"P={args.p} Q={q} N={n} {name}: median iterations to 1e6 drop "
                      f"{s['median_iterations_to_drop']}, failure rate {s['failure_rate']}")
    efa_io.write_summary(os.path.join(args.out, "summary.json"), {"cells": cells})
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (EFAError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

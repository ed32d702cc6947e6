"""Synthetic experiments: model generation, sampling, solver comparison.

Random streams use the counter-based Philox generator. The model and the
noise realization have separate seeds so one model can be refit under many
noise draws.
"""

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .baselines import fit_alternating
from .errors import EFAError
from .io import read_mask
from .model import FactorModel, NoiseMask, check_identifiability, cost, hermitian_part, sample_covariance
from .reduced import ConvergenceTrace, SolverConfig, Status, fit, initial_model

SOLVERS = ("reduced", "altls")
DROP_FACTOR = 1e6


def rng_for(seed):
    return np.random.Generator(np.random.Philox(seed))


def complex_normal(rng, shape):
    """CN(0, 1): unit total power, variance 1/2 per real component."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def make_mask(P, mask_kind):
    """``identity``, ``banded:K`` (or ``("banded", K)``), a file path, or a NoiseMask."""
    if isinstance(mask_kind, NoiseMask):
        return mask_kind
    if isinstance(mask_kind, tuple):
        kind, k = mask_kind
        return NoiseMask.banded(P, int(k))
    if mask_kind == "identity":
        return NoiseMask.identity(P)
    if mask_kind.startswith("banded:"):
        return NoiseMask.banded(P, int(mask_kind.split(":", 1)[1]))
    mask = read_mask(mask_kind)
    if mask.dim != P:
        raise ValueError(f"mask file {mask_kind} has dimension {mask.dim}, expected {P}")
    return mask


def generate_model(P, Q, mask_kind="identity", seed=0):
    """Random truth: CN(0,1) loadings, U[1,5] noise powers on the diagonal.

    For non-diagonal masks the off-diagonal noise is M * (L L^H) from a
    banded random factor, with a ridge added if needed to keep Psi PSD.
    """
    mask = make_mask(P, mask_kind)
    rng = rng_for(seed)
    A = complex_normal(rng, (P, Q))
    Psi = np.diag(rng.uniform(1.0, 5.0, P)).astype(complex)
    if not mask.is_diagonal:
        L = np.tril(complex_normal(rng, (P, P)) * 0.5)
        L = mask.apply(L)
        off = mask.apply(L @ L.conj().T)
        off[np.diag_indices(P)] = 0
        Psi = hermitian_part(Psi + off)
        lam_min = np.linalg.eigvalsh(Psi)[0]
        if lam_min < 0:
            Psi = Psi + 1.1 * abs(lam_min) * np.eye(P)
    if not check_identifiability(P, Q, mask):
        warnings.warn(f"unidentifiable configuration P={P}, Q={Q}", stacklevel=2)
    return FactorModel.from_loadings(A, Psi), mask


def noise_sqrt(Psi, diagonal=None):
    if diagonal is None:
        diagonal = not np.any(Psi - np.diag(Psi.diagonal()))
    if diagonal:
        d = Psi.diagonal().real
        if d.min() < 0:
            raise ValueError(f"Psi is not PSD: smallest eigenvalue {d.min():.3e}")
        return np.diag(np.sqrt(d))
    lam, U = np.linalg.eigh(Psi)
    if lam[0] < -1e-12 * max(abs(lam[-1]), 1.0):
        raise ValueError(f"Psi is not PSD: smallest eigenvalue {lam[0]:.3e}")
    return (U * np.sqrt(np.maximum(lam, 0))) @ U.conj().T


def simulate_samples(truth, N, seed):
    """N x P array of y = A s + Psi^{1/2} w with unit-power complex Gaussian s, w."""
    rng = rng_for(seed)
    S = complex_normal(rng, (N, truth.Q))
    W = complex_normal(rng, (N, truth.P))
    return S @ truth.A.T + W @ noise_sqrt(truth.Psi).T


def largest_principal_angle(A_true, A_est):
    if A_true.shape[1] == 0:
        return 0.0
    return float(np.max(scipy.linalg.subspace_angles(A_true, A_est)))


@dataclass(frozen=True)
class ExperimentSpec:
    P: int
    Q: int
    N: int  # 0 means fit the exact covariance
    mask_kind: object = "identity"
    model_seed: int = 0
    noise_seed: int = 1
    solvers: tuple = SOLVERS
    cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not 0 <= self.Q <= self.P:
            raise ValueError(f"need 0 <= Q <= P, got P={self.P}, Q={self.Q}")
        if self.N < 0:
            raise ValueError("N must be >= 0 (0 = exact covariance)")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r}")


@dataclass
class SolverResult:
    trace: ConvergenceTrace
    final_cost: float
    subspace_error: float
    status: str


@dataclass
class TrialResult:
    spec: ExperimentSpec
    truth: FactorModel
    results: dict


def build_covariance(spec):
    truth, mask = generate_model(spec.P, spec.Q, spec.mask_kind, spec.model_seed)
    if spec.N == 0:
        R = hermitian_part(truth.covariance())
    else:
        R = sample_covariance(simulate_samples(truth, spec.N, spec.noise_seed)).matrix
    return truth, mask, R


def run_experiment(spec):
    truth, mask, R = build_covariance(spec)
    init = initial_model(R, mask, spec.Q)
    results = {}
    for name in spec.solvers:
        solver = fit if name == "reduced" else fit_alternating
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est, trace = solver(R, mask, spec.Q, spec.cfg, init=init)
            results[name] = SolverResult(
                trace,
                cost(est, R),
                largest_principal_angle(truth.A, est.A),
                trace.status_label(),
            )
        except (EFAError, ValueError, np.linalg.LinAlgError) as exc:
            t = ConvergenceTrace(status=Status.FAILED, reason=str(exc))
            results[name] = SolverResult(t, float("nan"), float("nan"), t.status_label())
    return TrialResult(spec, truth, results)


def iterations_to_drop(result, factor=DROP_FACTOR):
    return result.trace.iterations_to_drop(factor)


def aggregate(trials, factor=DROP_FACTOR):
    """Per-solver summary: median iterations to a ``factor`` gradient drop and failure rate.

    A trial fails for a solver when its gradient never drops by ``factor``.
    """
    summary = {}
    names = sorted({n for t in trials for n in t.results})
    for name in names:
        its, statuses = [], {}
        for t in trials:
            r = t.results.get(name)
            if r is None:
                continue
            statuses[r.status.split("(")[0]] = statuses.get(r.status.split("(")[0], 0) + 1
            k = iterations_to_drop(r, factor)
            its.append(k)
        hits = [k for k in its if k is not None]
        summary[name] = {
            "trials": len(its),
            "drop_factor": factor,
            "median_iterations_to_drop": float(np.median(hits)) if hits else None,
            "failure_rate": (len(its) - len(hits)) / len(its) if its else None,
            "status_counts": statuses,
        }
    return summary


def sweep(specs, parallelism=1):
    """Run every experiment; results keep input order. Returns ``(trials, summary)``."""
    specs = list(specs)
    if parallelism <= 1 or len(specs) <= 1:
        trials = [run_experiment(s) for s in specs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            trials = list(pool.map(run_experiment, specs))
    return trials, aggregate(trials)


def seeded_specs(P, Q, N, n_seeds, mask_kind="identity", base_seed=0, cfg=None, solvers=SOLVERS):
    cfg = cfg or SolverConfig()
    return [
        ExperimentSpec(P, Q, N, mask_kind, base_seed + s, 10_000 + base_seed + s, tuple(solvers), cfg)
        for s in range(n_seeds)
    ]


def with_noise_seed(spec, noise_seed):
    return replace(spec, noise_seed=noise_seed)

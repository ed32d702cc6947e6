"""Alternating least squares baseline.

Two-block coordinate descent: the noise block is fit exactly on the mask,
then the loadings are the best rank-Q PSD approximation of Rhat - Psi.
"""

import time
import warnings

import numpy as np

from .errors import RankDeficient
from .model import FactorModel, check_identifiability, hermitian_part
from .reduced import GAMMA_FLOOR, ConvergenceTrace, SolverConfig, initial_model, run_iterations, validate_input


def alternating_ls_step(rhat, model, mask):
    R = rhat.matrix if hasattr(rhat, "matrix") else np.asarray(rhat)
    Psi = hermitian_part(mask.apply(R - model.A @ model.A.conj().T))
    Q = model.Q
    if Q == 0:
        return FactorModel.from_loadings(model.A, Psi)
    lam, U = np.linalg.eigh(hermitian_part(R - Psi))
    lam, U = lam[::-1][:Q], U[:, ::-1][:, :Q]
    if not lam[0] > 0:
        raise RankDeficient(f"no positive eigenvalue left for the loadings (largest {lam[0]:.3e})")
    lam = np.maximum(lam, GAMMA_FLOOR * lam[0])
    return FactorModel.from_loadings(U * np.sqrt(lam), Psi)


def fit_alternating(rhat, mask, Q, cfg=SolverConfig(), init=None):
    """Run alternating LS with the same stopping rules and trace schema as ``reduced.fit``."""
    t0 = time.perf_counter()
    R = validate_input(rhat, Q, mask)
    trace = ConvergenceTrace()
    P = R.shape[0]
    if not check_identifiability(P, Q, mask):
        msg = f"model is not identifiable by parameter counting (P={P}, Q={Q}, |M|={mask.l1})"
        warnings.warn(msg, stacklevel=2)
        trace.warnings.append(msg)
    model = init if init is not None else initial_model(R, mask, Q)

    def step(m, E0):
        return alternating_ls_step(R, m, mask), 1.0, 0

    model = run_iterations(R, mask, model, cfg, step, trace, t0)
    return model, trace

"""Reduced Gauss-Newton solver for the extended factor-analysis fit.

Each iteration solves the noise update (I - T) dpsi = S^H vec(P_perp E0 P_perp)
matrix-free by conjugate gradients, then the loading update in closed form
from the eigenstructure of J_A^H J_A, picks the exact step length, and
re-orthogonalizes the loadings.
"""

import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import EFAError, IllConditioned, RankDeficient
from .linesearch import line_search_mu
from .model import (
    FactorModel,
    SampleCovariance,
    check_hermitian,
    check_identifiability,
    gradient_norm,
    hermitian_part,
    residual,
)

GAMMA_FLOOR = 1e-10
INIT_EIG_FLOOR = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 500
    grad_tol_rel: float = 1e-8
    # absolute floor in units of ||Rhat||_F^{3/2}; catches fits started at an exact solution
    grad_tol_abs: float = 1e-12
    cost_stall_tol: float = 1e-14
    stall_window: int = 5
    inner_cg_tol: float = 1e-10
    inner_cg_max: int = 500
    step_mode: str = "exact_cubic"
    fixed_mu: float = 1.0
    inner_solver: str = "cg"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("grad_tol_rel", "cost_stall_tol", "inner_cg_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.grad_tol_abs < 0:
            raise ValueError("grad_tol_abs must be nonnegative")
        if self.step_mode not in ("exact_cubic", "fixed"):
            raise ValueError(f"unknown step_mode {self.step_mode!r}")
        if self.inner_solver not in ("cg", "richardson"):
            raise ValueError(f"unknown inner_solver {self.inner_solver!r}")


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    STALLED = "Stalled"
    FAILED = "Failed"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    grad_norm: float
    mu: float
    inner_iters: int
    wall_ms: float
    constraint_err: float = 0.0


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    status: Status = Status.MAX_ITERS
    reason: str = ""
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def costs(self):
        return np.array([r.cost for r in self.records])

    @property
    def grad_norms(self):
        return np.array([r.grad_norm for r in self.records])

    def iterations_to_drop(self, factor):
        """First iteration whose gradient norm is at most g0 / factor, or None."""
        g = self.grad_norms
        if g.size == 0:
            return None
        hits = np.flatnonzero(g <= g[0] / factor)
        return int(hits[0]) if hits.size else None

    def status_label(self):
        if self.status is Status.FAILED:
            return f"Failed({self.reason})"
        return self.status.value


@dataclass(frozen=True)
class DescentDirection:
    delta_A: np.ndarray
    delta_Psi: np.ndarray
    mu: float = float("nan")
    inner_iterations: int = 0


def _as_matrix(rhat):
    R = rhat.matrix if isinstance(rhat, SampleCovariance) else np.asarray(rhat, dtype=complex)
    return R


def apply_T(x, U0, mask):
    """T x = S^H vec(X P + P X - P X P), X = unvec(S x), P = U0 U0^H.

    O(P^2 Q); the P^2 x P^2 operator is never formed.
    """
    if U0.shape[1] == 0:
        return np.zeros_like(x, dtype=complex)
    X = mask.expand(x)
    XU = X @ U0
    UX = U0.conj().T @ X
    UXU = UX @ U0
    Uh = U0.conj().T
    Y = XU @ Uh + U0 @ UX - U0 @ (UXU @ Uh)
    return mask.select(Y)


def t_operator(U0, mask):
    n = mask.l1
    return LinearOperator((n, n), matvec=lambda x: apply_T(x, U0, mask), dtype=complex)


def _projected_rhs(E0, U0, mask):
    """S^H vec(P_perp E0 P_perp)."""
    if U0.shape[1] == 0:
        return mask.select(E0)
    Uh = U0.conj().T
    W = E0 - U0 @ (Uh @ E0)
    W = W - (W @ U0) @ Uh
    return mask.select(W)


def solve_delta_psi(rhat, model, mask, cfg=SolverConfig(), E0=None):
    """Noise update: solve (I - T) x = S^H vec(P_perp E0 P_perp).

    Returns ``(delta_Psi, inner_iterations)`` with delta_Psi Hermitian on the
    mask.
    """
    if E0 is None:
        E0 = residual(model, rhat)
    b = _projected_rhs(E0, model.U0, mask)
    U0 = model.U0
    if U0.shape[1] == 0 or not np.any(b):
        return hermitian_part(mask.expand(b)), 0
    bnorm = np.linalg.norm(b)

    if cfg.inner_solver == "cg":
        n = b.size
        op = LinearOperator((n, n), matvec=lambda v: v - apply_T(v, U0, mask), dtype=complex)
        count = [0]

        def _cb(_):
            count[0] += 1

        x, info = cg(op, b, x0=b.copy(), rtol=cfg.inner_cg_tol, atol=0.0,
                     maxiter=cfg.inner_cg_max, callback=_cb)
        iters = count[0]
    else:
        x = b.copy()
        info = 1
        for iters in range(1, cfg.inner_cg_max + 1):
            x_new = apply_T(x, U0, mask) + b
            step = np.linalg.norm(x_new - x)
            x = x_new
            if step <= cfg.inner_cg_tol * bnorm:
                info = 0
                break
    if info != 0:
        res = np.linalg.norm(b - x + apply_T(x, U0, mask)) / bnorm
        raise IllConditioned(
            f"noise-update solve did not converge in {cfg.inner_cg_max} iterations "
            f"(relative residual {res:.3e})",
            residual=res,
        )
    return hermitian_part(mask.expand(x)), iters


def solve_delta_A(E, U0, Gamma):
    """Closed-form loading update from the reduced normal equations.

    In-subspace part U0 [Gt * (Gamma M + M Gamma) Gamma^{1/2}] with
    M = U0^H E U0 and Gt[i, j] = (g_i + g_j)^-2, plus the orthogonal part
    P_perp E U0 Gamma^{-1/2}. Only the economic basis U0 is needed.
    """
    P, Q = U0.shape
    if Q == 0:
        return np.zeros((P, 0), complex)
    Gamma = np.asarray(Gamma, dtype=float)
    if not np.all(Gamma > GAMMA_FLOOR * Gamma.max()) or Gamma.max() <= 0:
        raise RankDeficient(f"gamma entry {Gamma.min():.3e} too small for a rank-{Q} update")
    sq = np.sqrt(Gamma)
    EU = E @ U0
    M = U0.conj().T @ EU
    Gt = 1.0 / np.add.outer(Gamma, Gamma) ** 2
    inner = Gt * (Gamma[:, None] * M + M * Gamma[None, :]) * sq[None, :]
    delta1 = U0 @ inner
    delta2 = (EU - U0 @ M) / sq[None, :]
    return delta1 + delta2


def compute_direction(rhat, model, mask, cfg=SolverConfig(), E0=None):
    """Gauss-Newton direction: noise part first, then loadings (mu unset)."""
    if E0 is None:
        E0 = residual(model, rhat)
    dPsi, iters = solve_delta_psi(rhat, model, mask, cfg, E0=E0)
    dA = solve_delta_A(E0 - dPsi, model.U0, model.Gamma)
    return DescentDirection(dA, dPsi, inner_iterations=iters)


def gn_step(rhat, model, mask, cfg=SolverConfig(), E0=None):
    """One reduced Gauss-Newton iteration.

    Returns ``(new_model, direction)`` where ``direction.mu`` is the step used.
    The new loadings are re-orthogonalized so A^H A stays diagonal. Under the
    exact step a move that raises the evaluated cost (possible only when the
    true decrease is below rounding) is rejected: the input model comes back
    unchanged with mu = 0.
    """
    if E0 is None:
        E0 = residual(model, rhat)
    d = compute_direction(rhat, model, mask, cfg, E0=E0)
    if cfg.step_mode == "exact_cubic":
        mu = line_search_mu(E0, model, d.delta_A, d.delta_Psi)
    else:
        mu = cfg.fixed_mu
    new = FactorModel.from_loadings(model.A + mu * d.delta_A, model.Psi + mu * d.delta_Psi)
    if new.Q and new.Gamma[-1] < GAMMA_FLOOR * new.Gamma[0]:
        raise RankDeficient(
            f"gamma fell to {new.Gamma[-1]:.3e} (< {GAMMA_FLOOR:g} * {new.Gamma[0]:.3e})"
        )
    if cfg.step_mode == "exact_cubic":
        E1 = residual(new, rhat)
        if np.vdot(E1, E1).real > np.vdot(E0, E0).real:
            return model, DescentDirection(d.delta_A, d.delta_Psi, 0.0, d.inner_iterations)
    return new, DescentDirection(d.delta_A, d.delta_Psi, mu, d.inner_iterations)


def initial_model(rhat, mask, Q):
    """Deterministic start: half the masked covariance as noise, top-Q eigenpairs for loadings."""
    R = _as_matrix(rhat)
    Psi0 = hermitian_part(0.5 * mask.apply(R))
    P = R.shape[0]
    if Q == 0:
        return FactorModel.from_loadings(np.zeros((P, 0)), Psi0)
    lam, U = np.linalg.eigh(hermitian_part(R - Psi0))
    lam, U = lam[::-1][:Q], U[:, ::-1][:, :Q]
    top = max(lam[0], np.abs(lam).max(), np.finfo(float).tiny)
    lam = np.maximum(lam, INIT_EIG_FLOOR * top)
    return FactorModel.from_loadings(U * np.sqrt(lam), Psi0)


def validate_input(rhat, Q, mask):
    R = _as_matrix(rhat)
    check_hermitian(R, tol=1e-12)
    P = R.shape[0]
    if mask.dim != P:
        raise ValueError(f"mask dimension {mask.dim} does not match P={P}")
    if Q > P:
        raise ValueError(f"Q={Q} exceeds P={P}")
    return hermitian_part(R)


def abs_grad_tol(R, cfg):
    return cfg.grad_tol_abs * np.linalg.norm(R) ** 1.5


def run_iterations(R, mask, model, cfg, step, trace, t0):
    """Shared outer loop for the reduced solver and the baseline.

    ``step(model, E0)`` returns ``(new_model, mu, inner_iterations)``.
    """
    E0 = residual(model, R)
    c = float(np.vdot(E0, E0).real)
    g = gradient_norm(model, R, mask, E0=E0)
    g0 = g
    tol = max(cfg.grad_tol_rel * g0, abs_grad_tol(R, cfg))
    trace.records.append(IterationRecord(0, c, g, 0.0, 0, (time.perf_counter() - t0) * 1e3,
                                         model.constraint_error()))
    if g <= tol:
        trace.status = Status.CONVERGED
        return model
    for k in range(1, cfg.max_iterations + 1):
        try:
            new, mu, inner = step(model, E0)
        except EFAError as exc:
            trace.status, trace.reason = Status.FAILED, f"iteration {k}: {exc}"
            return model
        stuck = new is model
        model = new
        E0 = residual(model, R)
        c = float(np.vdot(E0, E0).real)
        g = gradient_norm(model, R, mask, E0=E0)
        trace.records.append(IterationRecord(k, c, g, float(mu), int(inner),
                                             (time.perf_counter() - t0) * 1e3,
                                             model.constraint_error()))
        if not np.isfinite(c):
            trace.status, trace.reason = Status.FAILED, f"iteration {k}: non-finite cost"
            return model
        if g <= tol:
            trace.status = Status.CONVERGED
            return model
        if stuck:
            trace.status, trace.reason = Status.STALLED, "no cost decrease at working precision"
            return model
        w = cfg.stall_window
        if k >= w:
            before = trace.records[k - w].cost
            if before - c <= cfg.cost_stall_tol * before:
                trace.status = Status.STALLED
                return model
    trace.status = Status.MAX_ITERS
    return model


def fit(rhat, mask, Q, cfg=SolverConfig(), init=None):
    """Fit A A^H + Psi to ``rhat`` by reduced Gauss-Newton.

    Returns ``(model, trace)``. Non-convergence is reported in
    ``trace.status``, not raised.
    """
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
        new, d = gn_step(R, m, mask, cfg, E0=E0)
        return new, d.mu, d.inner_iterations

    model = run_iterations(R, mask, model, cfg, step, trace, t0)
    return model, trace

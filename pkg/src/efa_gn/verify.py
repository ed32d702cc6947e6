"""Seeded small-scale checks of the fast solver against the dense oracle."""

from dataclasses import dataclass

import numpy as np

from .harness import complex_normal, rng_for
from .model import FactorModel, NoiseMask, check_identifiability, hermitian_part, vec
from .oracle import build_jacobian, build_reduction_basis, numerical_rank, solve_direction_dense
from .reduced import compute_direction

EVD_TOL = 1e-9
UNITARY_TOL = 1e-10
NULL_TOL = 1e-10
DIRECTION_TOL = 1e-8


def random_instance(rng, P, Q, mask, spread=0.3):
    """A model near a random truth and a covariance that it does not fit exactly."""
    A = complex_normal(rng, (P, Q))
    Psi = np.diag(rng.uniform(1.0, 5.0, P)).astype(complex)
    noise = hermitian_part(complex_normal(rng, (P, P)))
    R = A @ A.conj().T + Psi + spread * noise
    Psi0 = mask.apply(Psi + spread * hermitian_part(complex_normal(rng, (P, P))))
    model = FactorModel.from_loadings(A + spread * complex_normal(rng, (P, Q)), Psi0)
    return model, hermitian_part(R)


def eigen_identity_errors(model):
    """Relative EVD error, unitarity error, and relative ||J_A Z|| for one model."""
    J_A = build_jacobian(model, NoiseMask.identity(model.P)).J_A
    basis = build_reduction_basis(model)
    Vt = basis.V_tilde
    G = J_A.conj().T @ J_A
    rec = (Vt * basis.eigvals) @ Vt.conj().T
    evd = np.linalg.norm(G - rec) / np.linalg.norm(G)
    unit = np.linalg.norm(Vt.conj().T @ Vt - np.eye(Vt.shape[1]))
    null = np.linalg.norm(J_A @ basis.Z) / np.linalg.norm(J_A)
    return evd, unit, null


def direction_errors(model, R, mask, fault=0.0):
    """Relative gap between fast and dense directions, and the fast path's null-space share."""
    fast = compute_direction(R, model, mask)
    dA = fast.delta_A * (1.0 + fault)
    dense = solve_direction_dense(model, R, mask)
    ea = np.linalg.norm(dA - dense.delta_A) / max(np.linalg.norm(dense.delta_A), 1e-300)
    ep = np.linalg.norm(fast.delta_Psi - dense.delta_Psi) / max(np.linalg.norm(dense.delta_Psi), 1e-300)
    Z = build_reduction_basis(model).Z
    d = np.concatenate([vec(dA), vec(dA).conj()])
    ns = np.linalg.norm(Z.conj().T @ d) / max(np.linalg.norm(d), 1e-300)
    return ea, ep, ns


def rank_deficiency(model, mask):
    J = build_jacobian(model, mask).J
    return J.shape[1] - numerical_rank(J, 1e-8)


@dataclass
class CheckRow:
    check: str
    P: int
    Q: int
    mask: str
    value: float
    tol: float
    passed: bool


def _row(check, P, Q, mask_name, value, tol, exact=False):
    ok = (value == tol) if exact else (value <= tol)
    return CheckRow(check, P, Q, mask_name, float(value), float(tol), bool(ok))


def run_verification(sizes=range(3, 9), seed=0, inject_fault=0.0):
    """Run the identity suite once per (P, Q) with Q in 1..P-2 and both mask kinds."""
    rows = []
    rng = rng_for(seed)
    for P in sizes:
        for Q in range(1, max(P - 1, 1)):
            model, R = random_instance(rng, P, Q, NoiseMask.identity(P))
            evd, unit, null = eigen_identity_errors(model)
            rows.append(_row("evd_identity", P, Q, "-", evd, EVD_TOL))
            rows.append(_row("unitarity", P, Q, "-", unit, UNITARY_TOL))
            rows.append(_row("null_space", P, Q, "-", null, NULL_TOL))
            for name, mask in (("identity", NoiseMask.identity(P)), ("tridiagonal", NoiseMask.banded(P, 1))):
                if not check_identifiability(P, Q, mask):
                    continue
                model, R = random_instance(rng, P, Q, mask)
                rows.append(_row("rank_deficiency", P, Q, name, rank_deficiency(model, mask), Q * Q, exact=True))
                ea, ep, ns = direction_errors(model, R, mask, inject_fault)
                rows.append(_row("fast_vs_oracle_A", P, Q, name, ea, DIRECTION_TOL))
                rows.append(_row("fast_vs_oracle_Psi", P, Q, name, ep, DIRECTION_TOL))
                rows.append(_row("null_component", P, Q, name, ns, DIRECTION_TOL))
    return rows


def format_table(rows):
    lines = [f"{'check':<20} {'P':>3} {'Q':>3} {'mask':<12} {'value':>11} {'tol':>9}  result"]
    for r in rows:
        lines.append(
            f"{r.check:<20} {r.P:>3} {r.Q:>3} {r.mask:<12} {r.value:>11.3e} {r.tol:>9.1e}  "
            f"{'PASS' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)

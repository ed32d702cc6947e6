"""Dense small-scale oracle for the Gauss-Newton system.

Builds the Jacobian, the closed-form eigenbasis of J_A^H J_A and the null
space basis explicitly, and solves the normal equations by pseudoinverse.
Everything here is O(P^4) memory and only meant for checking the fast path.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import hermitian_part, residual, unvec, vec

MAX_PQ = 64
MAX_P2 = 4096
PINV_RCOND = 1e-10


class ScaleGuardError(ValueError):
    pass


def _guard(P, Q):
    if P * Q > MAX_PQ or P * P > MAX_P2:
        raise ScaleGuardError(f"oracle limited to P*Q <= {MAX_PQ}, P^2 <= {MAX_P2}; got P={P}, Q={Q}")


def commutation_perm(P, Q):
    """Index array ``p`` with vec(X^T) == vec(X)[p] for a P x Q matrix X."""
    return np.arange(P * Q).reshape(P, Q, order="F").T.reshape(-1, order="F")


def commutation_matrix(P, Q):
    """Dense K^{P,Q}; only for identity checks."""
    return np.eye(P * Q)[commutation_perm(P, Q)]


def _right_commute(M, P, Q):
    """M @ K^{P,Q} without forming K."""
    out = np.empty_like(M)
    out[:, commutation_perm(P, Q)] = M
    return out


def _left_commute(M, P, Q):
    """K^{P,Q} @ M without forming K."""
    return M[commutation_perm(P, Q)]


@dataclass
class DenseJacobian:
    J: np.ndarray
    P: int
    Q: int
    m: int

    @property
    def a_block(self):
        return self.J[:, : self.P * self.Q]

    @property
    def aconj_block(self):
        pq = self.P * self.Q
        return self.J[:, pq : 2 * pq]

    @property
    def s_block(self):
        return self.J[:, 2 * self.P * self.Q :]

    @property
    def J_A(self):
        return self.J[:, : 2 * self.P * self.Q]


def build_jacobian(model, mask):
    """J = [A* kron I_P, (I_P kron A) K^{P,Q}, S]."""
    P, Q = model.P, model.Q
    _guard(P, Q)
    A = model.A
    blk_a = np.kron(A.conj(), np.eye(P))
    blk_ac = _right_commute(np.kron(np.eye(P), A), P, Q)
    S = np.zeros((P * P, mask.l1))
    S[mask.support, np.arange(mask.l1)] = 1.0
    return DenseJacobian(np.hstack([blk_a, blk_ac, S]).astype(complex), P, Q, mask.l1)


@dataclass
class ReductionBasis:
    V: np.ndarray
    Z: np.ndarray
    eigvals: np.ndarray
    G: np.ndarray

    @property
    def V_tilde(self):
        return np.hstack([self.V, self.Z])


def build_reduction_basis(model):
    """Closed-form eigenvectors [V | Z] and eigenvalues of J_A^H J_A."""
    P, Q = model.P, model.Q
    _guard(P, Q)
    gamma = model.Gamma
    if np.any(gamma <= 0):
        raise ValueError("Gamma must be strictly positive")
    U0, A = model.U0, model.A
    Un = scipy.linalg.null_space(U0.conj().T) if Q < P else np.zeros((P, 0), complex)
    Iq = np.eye(Q)
    sg = np.diag(np.sqrt(gamma))
    Gam = np.diag(gamma)
    G = 1.0 / (np.kron(gamma, np.ones(Q)) + np.kron(np.ones(Q), gamma))
    Gh = np.diag(np.sqrt(G))

    pq, k = P * Q, Q * (P - Q)
    top = np.hstack([np.kron(Iq, Un), np.zeros((pq, k)), np.kron(sg, U0) @ Gh])
    bot = np.hstack([np.zeros((pq, k)), np.kron(Un.conj(), Iq), np.kron(U0.conj(), sg) @ Gh])
    # K^{Q,P} acts on vec of a Q x P matrix
    V = np.vstack([top, _left_commute(bot, Q, P)])
    Z = np.vstack([np.kron(Iq, A), -_left_commute(np.kron(A.conj(), Iq), Q, P)]) @ Gh

    eig = np.concatenate(
        [
            np.kron(gamma, np.ones(P - Q)),
            np.kron(np.ones(P - Q), gamma),
            np.diag(np.kron(Gam, Iq) + np.kron(Iq, Gam)),
            np.zeros(Q * Q),
        ]
    )
    return ReductionBasis(V, Z, eig, G)


@dataclass
class DenseDirection:
    delta_A: np.ndarray
    delta_Psi: np.ndarray
    delta: np.ndarray


def solve_direction_dense(model, rhat, mask):
    """Minimum-norm solution of J^H J delta = J^H (rhat - r) by pseudoinverse."""
    P, Q = model.P, model.Q
    jac = build_jacobian(model, mask)
    J = jac.J
    e = vec(residual(model, rhat))
    JhJ = J.conj().T @ J
    delta = np.linalg.pinv(JhJ, rcond=PINV_RCOND, hermitian=True) @ (J.conj().T @ e)
    pq = P * Q
    dA = unvec(delta[:pq], P, Q)
    dPsi = hermitian_part(mask.expand(delta[2 * pq :]))
    return DenseDirection(dA, dPsi, delta)


def reduced_solve_dense(model, rhat, mask):
    """Solve the normal equations restricted to the basis blkdiag(V, I)."""
    jac = build_jacobian(model, mask)
    basis = build_reduction_basis(model)
    n_psi = mask.l1
    V = basis.V
    calV = scipy.linalg.block_diag(V, np.eye(n_psi))
    J = jac.J
    JV = J @ calV
    e = vec(residual(model, rhat))
    dt = np.linalg.solve(JV.conj().T @ JV, JV.conj().T @ e)
    return calV @ dt


def numerical_rank(M, rel_tol=1e-8):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0])) if s.size else 0


def dense_T(U0, mask):
    """S^H (P^T kron I + I kron P - P^T kron P) S with P = U0 U0^H."""
    Pr = U0 @ U0.conj().T
    I = np.eye(Pr.shape[0])
    K = np.kron(Pr.T, I) + np.kron(I, Pr) - np.kron(Pr.T, Pr)
    idx = mask.support
    return K[np.ix_(idx, idx)]

"""Extended factor-analysis model R = A A^H + Psi.

Holds the model data types, the noise mask / selection machinery, and the
cost, residual and gradient of the least-squares covariance fit.

Matrices are plain complex numpy arrays. Vectorization is column-major
(``order="F"``) everywhere so that ``vec`` agrees with the Kronecker
identities used by the oracle.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotHermitian, RankDeficient

RANK_TOL = 1e-12


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, rows, cols):
    return np.asarray(x).reshape(rows, cols, order="F")


def hermitian_part(X):
    X = np.asarray(X, dtype=complex)
    H = 0.5 * (X + X.conj().T)
    H[np.diag_indices_from(H)] = H.diagonal().real
    return H


def check_hermitian(X, tol=0.0):
    """Raise NotHermitian naming the worst entry if ``X`` is not Hermitian.

    ``tol`` is relative to the largest entry magnitude.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {X.shape}")
    dev = np.abs(X - X.conj().T)
    scale = max(np.abs(X).max(initial=0.0), 1.0)
    i, j = np.unravel_index(np.argmax(dev), dev.shape) if dev.size else (0, 0)
    if dev.size and dev[i, j] > tol * scale:
        raise NotHermitian(
            f"matrix is not Hermitian: entry ({i}, {j}) = {X[i, j]} "
            f"but conj of ({j}, {i}) = {np.conj(X[j, i])}"
        )


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    n: int

    @property
    def dim(self):
        return self.matrix.shape[0]


def sample_covariance(samples, psd_check=True):
    """Average of y y^H over the rows of ``samples`` (an N x P array)."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    try:
        Y = np.asarray(samples, dtype=complex)
    except ValueError as exc:
        raise DimensionMismatch("sample vectors have inconsistent lengths") from exc
    if Y.ndim != 2:
        raise DimensionMismatch("sample vectors have inconsistent lengths")
    N = Y.shape[0]
    R = hermitian_part(Y.T @ Y.conj() / N)
    if psd_check:
        lam_min = np.linalg.eigvalsh(R)[0]
        if lam_min < -1e-10 * R.diagonal().real.max(initial=0.0):
            raise ValueError(f"sample covariance not PSD (smallest eigenvalue {lam_min:g})")
    return SampleCovariance(R, N)


@dataclass(frozen=True, eq=False)
class NoiseMask:
    """Symmetric 0/1 pattern of the noise covariance.

    ``support`` lists the column-major vec() positions of every true cell,
    which is the selection matrix S applied as an index array:
    ``S^T vec(X) == vec(X)[support]``. ``free_indices`` holds the
    lower-triangular (row >= col) cells, the real-dimension-correct
    parameterization of a Hermitian Psi.
    """

    mask: np.ndarray
    support: np.ndarray = field(init=False, repr=False)
    free_indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M = np.asarray(self.mask).astype(bool)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatch(f"mask must be square, got shape {M.shape}")
        if not np.array_equal(M, M.T):
            i, j = np.argwhere(M != M.T)[0]
            raise ValueError(f"mask is not symmetric at ({i}, {j})")
        if not M.diagonal().all():
            i = int(np.flatnonzero(~M.diagonal())[0])
            raise ValueError(f"mask diagonal cell ({i}, {i}) must be true")
        M.setflags(write=False)
        object.__setattr__(self, "mask", M)
        object.__setattr__(self, "support", np.flatnonzero(vec(M)))
        rows, cols = np.nonzero(np.tril(M).T)
        # column-major order over the lower triangle
        object.__setattr__(self, "free_indices", np.column_stack([cols, rows]))

    @classmethod
    def identity(cls, P):
        return cls(np.eye(P, dtype=bool))

    @classmethod
    def banded(cls, P, k):
        i, j = np.indices((P, P))
        return cls(np.abs(i - j) <= k)

    @property
    def dim(self):
        return self.mask.shape[0]

    @property
    def l1(self):
        return int(self.mask.sum())

    @property
    def is_diagonal(self):
        return self.l1 == self.dim

    def select(self, X):
        """S^T vec(X): the entries of X on the mask, column-major."""
        return vec(X)[self.support]

    def expand(self, x):
        """unvec(S x): place masked entries back into a P x P matrix."""
        P = self.dim
        out = np.zeros(P * P, dtype=complex)
        out[self.support] = x
        return unvec(out, P, P)

    def apply(self, X):
        """M (Hadamard) X."""
        return np.where(self.mask, X, 0)

    def __eq__(self, other):
        return isinstance(other, NoiseMask) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Loadings and noise covariance with the A^H A = diag(Gamma) constraint cached."""

    A: np.ndarray
    Psi: np.ndarray
    U0: np.ndarray
    Gamma: np.ndarray

    @classmethod
    def from_loadings(cls, A_raw, Psi):
        A, U0, Gamma = enforce_constraint(A_raw)
        Psi = hermitian_part(Psi)
        if Psi.shape != (A.shape[0], A.shape[0]):
            raise DimensionMismatch(f"Psi shape {Psi.shape} does not match P={A.shape[0]}")
        return cls(A, Psi, U0, Gamma)

    @property
    def P(self):
        return self.A.shape[0]

    @property
    def Q(self):
        return self.A.shape[1]

    def covariance(self):
        return self.A @ self.A.conj().T + self.Psi

    def constraint_error(self):
        """||A^H A - diag(Gamma)||_F relative to ||Gamma||."""
        if self.Q == 0:
            return 0.0
        G = self.A.conj().T @ self.A
        return np.linalg.norm(G - np.diag(self.Gamma)) / np.linalg.norm(self.Gamma)

    def conforms_to(self, mask):
        return not np.any(self.Psi[~mask.mask])


def enforce_constraint(A_raw):
    """Rotate loadings so their columns are orthogonal.

    Returns ``(A, U0, Gamma)`` with ``A = U0 diag(sqrt(Gamma))`` from the
    economic SVD; the right singular factor is dropped since A A^H is
    invariant to it.
    """
    A_raw = np.asarray(A_raw, dtype=complex)
    if A_raw.ndim != 2:
        raise DimensionMismatch("loadings must be a 2-D array")
    P, Q = A_raw.shape
    if Q > P:
        raise DimensionMismatch(f"Q={Q} exceeds P={P}")
    if Q == 0:
        return np.zeros((P, 0), complex), np.zeros((P, 0), complex), np.zeros(0)
    U, s, _ = np.linalg.svd(A_raw, full_matrices=False)
    if not s[-1] > RANK_TOL * s[0]:
        raise RankDeficient(
            f"loadings are rank deficient: singular value {s[-1]:.3e} "
            f"<= {RANK_TOL:g} * {s[0]:.3e}"
        )
    return U * s, U, s**2


def _check_dims(model, rhat):
    R = rhat.matrix if isinstance(rhat, SampleCovariance) else np.asarray(rhat)
    if R.shape != (model.P, model.P):
        raise DimensionMismatch(f"covariance shape {R.shape} does not match P={model.P}")
    return R


def residual(model, rhat):
    """E0 = Rhat - A A^H - Psi."""
    R = _check_dims(model, rhat)
    return hermitian_part(R - model.A @ model.A.conj().T - model.Psi)


def cost(model, rhat):
    E0 = residual(model, rhat)
    return float(np.vdot(E0, E0).real)


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """vec(A) plus the lower-triangular noise entries.

    The conjugate block vec(A*) of the full Wirtinger parameter is implicit.
    """

    a_part: np.ndarray
    psi_part: np.ndarray

    @classmethod
    def pack(cls, model, mask):
        r, c = mask.free_indices.T
        return cls(vec(model.A).copy(), model.Psi[r, c].copy())

    def unpack(self, P, Q, mask):
        """Return ``(A, Psi)`` arrays (no constraint enforcement)."""
        A = unvec(self.a_part, P, Q).copy()
        r, c = mask.free_indices.T
        Psi = np.zeros((P, P), complex)
        Psi[r, c] = self.psi_part
        Psi[c, r] = np.conj(self.psi_part)
        Psi[np.diag_indices(P)] = Psi.diagonal().real
        return A, Psi

    def to_real(self, mask):
        """Real coordinates: Re/Im of vec(A), then per free cell Re (and Im off-diagonal)."""
        off = mask.free_indices[:, 0] != mask.free_indices[:, 1]
        psi = self.psi_part
        return np.concatenate([self.a_part.real, self.a_part.imag, psi.real, psi[off].imag])

    @classmethod
    def from_real(cls, x, P, Q, mask):
        x = np.asarray(x, dtype=float)
        pq = P * Q
        a = x[:pq] + 1j * x[pq : 2 * pq]
        nf = len(mask.free_indices)
        off = mask.free_indices[:, 0] != mask.free_indices[:, 1]
        psi = x[2 * pq : 2 * pq + nf].astype(complex)
        psi[off] += 1j * x[2 * pq + nf :]
        return cls(a, psi)


def gradient(model, rhat, mask):
    """Matrix-free J^H (rhat - r) in compact form.

    ``a_part`` is vec(E0 A), the A-block of the adjoint applied to the
    residual (the A*-block is its conjugate). ``psi_part`` is E0 on the
    free lower-triangular cells.
    """
    E0 = residual(model, rhat)
    r, c = mask.free_indices.T
    return ParameterVector(vec(E0 @ model.A), E0[r, c])


def gradient_norm(model, rhat, mask, E0=None):
    """||J^H (rhat - r)||: sqrt(2 ||E0 A||^2 + ||S^T vec(E0)||^2)."""
    if E0 is None:
        E0 = residual(model, rhat)
    EA = E0 @ model.A
    Es = mask.select(E0)
    return float(np.sqrt(2 * np.vdot(EA, EA).real + np.vdot(Es, Es).real))


def real_gradient(model, rhat, mask):
    """Gradient of ``cost`` in the real coordinates of ``ParameterVector.to_real``."""
    g = gradient(model, rhat, mask)
    diag = mask.free_indices[:, 0] == mask.free_indices[:, 1]
    psi_scale = np.where(diag, -2.0, -4.0)
    return np.concatenate(
        [
            -4 * g.a_part.real,
            -4 * g.a_part.imag,
            psi_scale * g.psi_part.real,
            -4 * g.psi_part[~diag].imag,
        ]
    )


def degrees_of_freedom(P, Q, mask):
    """Unique real parameters: 2PQ + ||M||_1 - Q^2."""
    if Q > P:
        raise DimensionMismatch(f"Q={Q} exceeds P={P}")
    l1 = mask.l1 if isinstance(mask, NoiseMask) else int(np.asarray(mask, bool).sum())
    return 2 * P * Q + l1 - Q * Q


def check_identifiability(P, Q, mask):
    """Counting rule: fewer free parameters than real covariance dimensions (P^2)."""
    if Q > P:
        return False
    return degrees_of_freedom(P, Q, mask) < P * P


def max_identifiable_q(P, mask):
    return max((q for q in range(P + 1) if check_identifiability(P, q, mask)), default=-1)

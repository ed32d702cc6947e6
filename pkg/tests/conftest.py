import numpy as np
import pytest

from efa_gn.harness import complex_normal
from efa_gn.model import FactorModel, NoiseMask, hermitian_part
from efa_gn.reduced import apply_T
from efa_gn.verify import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def cn(rng, *shape):
    return complex_normal(rng, shape)


def make_instance(rng, P, Q, mask=None, spread=0.3):
    mask = mask or NoiseMask.identity(P)
    model, R = random_instance(rng, P, Q, mask, spread)
    return model, R, mask


def exact_model(rng, P, Q, mask=None):
    mask = mask or NoiseMask.identity(P)
    Psi = np.diag(rng.uniform(1, 5, P)).astype(complex)
    if not mask.is_diagonal:
        Psi = Psi + 0.2 * mask.apply(hermitian_part(cn(rng, P, P))) * (1 - np.eye(P))
    model = FactorModel.from_loadings(cn(rng, P, Q), Psi)
    return model, hermitian_part(model.covariance()), mask


def power_iteration(U0, mask, rng, iters=2000, tol=1e-10):
    """Largest eigenvalue of the Hermitian PSD operator T by power iteration."""
    x = cn(rng, mask.l1)
    lam = 0.0
    for _ in range(iters):
        y = apply_T(x, U0, mask)
        lam_new = float(np.vdot(x, y).real / np.vdot(x, x).real)
        n = np.linalg.norm(y)
        if n == 0:
            return 0.0
        x = y / n
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return lam_new
        lam = lam_new
    return lam

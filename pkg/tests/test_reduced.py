import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import LinearOperator, eigsh

from conftest import cn, exact_model, make_instance, power_iteration
from efa_gn.errors import IllConditioned, NotHermitian, RankDeficient
from efa_gn.harness import build_covariance, ExperimentSpec
from efa_gn.linesearch import ray_cost, step_terms
from efa_gn.model import FactorModel, NoiseMask, check_identifiability, cost, hermitian_part, residual, vec
from efa_gn.oracle import build_reduction_basis, dense_T, solve_direction_dense
from efa_gn.reduced import (
    SolverConfig,
    Status,
    apply_T,
    compute_direction,
    fit,
    gn_step,
    initial_model,
    solve_delta_A,
    solve_delta_psi,
    t_operator,
)


# apply_T


def test_apply_T_trivial_subspaces(rng):
    mask = NoiseMask.banded(5, 1)
    x = cn(rng, mask.l1)
    assert not np.any(apply_T(x, np.zeros((5, 0)), mask))
    np.testing.assert_allclose(apply_T(x, np.eye(5), mask), x, atol=1e-14)


@pytest.mark.parametrize("k", [0, 1])
def test_apply_T_matches_dense_kronecker(rng, k):
    mask = NoiseMask.banded(6, k)
    model, _, _ = make_instance(rng, 6, 2, mask)
    T = dense_T(model.U0, mask)
    x = cn(rng, mask.l1)
    np.testing.assert_allclose(apply_T(x, model.U0, mask), T @ x, atol=1e-13)
    np.testing.assert_allclose(T, T.conj().T, atol=1e-14)


# solve_delta_psi


def test_delta_psi_noise_only(rng):
    P = 5
    mask = NoiseMask.banded(P, 1)
    model = FactorModel.from_loadings(np.zeros((P, 0)), np.eye(P))
    R = hermitian_part(cn(rng, P, P))
    dPsi, iters = solve_delta_psi(R, model, mask)
    np.testing.assert_allclose(dPsi, mask.apply(R - model.Psi))
    assert iters == 0


def test_delta_psi_zero_at_exact_model(rng):
    model, R, mask = exact_model(rng, 6, 2)
    dPsi, _ = solve_delta_psi(R, model, mask)
    assert np.abs(dPsi).max() < 1e-12


@pytest.mark.parametrize("solver", ["cg", "richardson"])
def test_delta_psi_matches_dense_solve(rng, solver):
    mask = NoiseMask.identity(6)
    model, R, _ = make_instance(rng, 6, 2)
    cfg = SolverConfig(inner_solver=solver, inner_cg_max=5000, inner_cg_tol=1e-13)
    dPsi, iters = solve_delta_psi(R, model, mask, cfg)
    Uh = model.U0.conj().T
    Pp = np.eye(6) - model.U0 @ Uh
    b = mask.select(Pp @ residual(model, R) @ Pp)
    x = np.linalg.solve(np.eye(mask.l1) - dense_T(model.U0, mask), b)
    assert np.linalg.norm(mask.select(dPsi) - x) <= 1e-8 * np.linalg.norm(x)
    assert iters >= 1
    np.testing.assert_allclose(dPsi, dPsi.conj().T)


def test_delta_psi_reports_ill_conditioning(rng):
    model, R, mask = make_instance(rng, 10, 4, NoiseMask.banded(10, 1))
    cfg = SolverConfig(inner_cg_max=1, inner_cg_tol=1e-14)
    with pytest.raises(IllConditioned) as exc:
        solve_delta_psi(R, model, mask, cfg)
    assert exc.value.residual > 0


# solve_delta_A


def test_delta_A_trivial(rng):
    model, _, _ = make_instance(rng, 6, 2)
    assert not np.any(solve_delta_A(np.zeros((6, 6)), model.U0, model.Gamma))
    Pp = np.eye(6) - model.U0 @ model.U0.conj().T
    W = hermitian_part(cn(rng, 6, 6))
    dA = solve_delta_A(Pp @ W @ Pp, model.U0, model.Gamma)
    assert np.abs(dA).max() < 1e-13


def test_delta_A_rejects_vanishing_gamma(rng):
    U0, _ = np.linalg.qr(cn(rng, 5, 2))
    with pytest.raises(RankDeficient):
        solve_delta_A(np.eye(5), U0, np.array([1.0, 0.0]))


@pytest.mark.parametrize("k", [0, 1])
def test_direction_matches_dense_oracle(rng, k):
    mask = NoiseMask.banded(6, k)
    model, R, _ = make_instance(rng, 6, 2, mask)
    cfg = SolverConfig(inner_cg_tol=1e-14)
    fast = compute_direction(R, model, mask, cfg)
    dense = solve_direction_dense(model, R, mask)
    assert np.linalg.norm(fast.delta_A - dense.delta_A) <= 1e-8 * np.linalg.norm(dense.delta_A)
    assert np.linalg.norm(fast.delta_Psi - dense.delta_Psi) <= 1e-8 * np.linalg.norm(dense.delta_Psi)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 8), st.integers(0, 2**32 - 1), st.sampled_from([0, 1]))
def test_direction_invariants(P, seed, k):
    rng = np.random.default_rng(seed)
    Q = int(rng.integers(1, P - 1))
    mask = NoiseMask.banded(P, k)
    model, R, _ = make_instance(rng, P, Q, mask)
    d = compute_direction(R, model, mask, SolverConfig(inner_cg_tol=1e-14))
    np.testing.assert_allclose(d.delta_Psi, d.delta_Psi.conj().T, atol=0)
    assert not np.any(d.delta_Psi[~mask.mask])
    Z = build_reduction_basis(model).Z
    v = np.concatenate([vec(d.delta_A), vec(d.delta_A).conj()])
    assert np.linalg.norm(Z.conj().T @ v) <= 1e-8 * np.linalg.norm(v)


# spectral properties of T


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 20), st.integers(0, 2**32 - 1), st.sampled_from([0, 1]))
def test_T_spectral_radius_below_one(P, seed, k):
    rng = np.random.default_rng(seed)
    mask = NoiseMask.banded(P, k)
    Q = int(rng.integers(1, P))
    assume(check_identifiability(P, Q, mask))
    model, _, _ = make_instance(rng, P, Q, mask)
    rho = power_iteration(model.U0, mask, rng)
    assert rho < 1 - 1e-6
    n = mask.l1
    op = LinearOperator((n, n), matvec=lambda v: v - t_operator(model.U0, mask) @ v, dtype=complex)
    if n > 2:
        ritz = eigsh(op, k=1, which="SA", return_eigenvectors=False, tol=1e-10)[0]
        assert ritz > 0


def test_unidentifiable_T_reaches_one(rng):
    # Q = P - 1 with a full mask leaves no room: I - T is singular
    P = 5
    mask = NoiseMask(np.ones((P, P), bool))
    model, _, _ = make_instance(rng, P, P - 1, mask)
    eig = np.linalg.eigvalsh(dense_T(model.U0, mask))
    assert eig[-1] == pytest.approx(1.0, abs=1e-12)


# gn_step


def test_gn_step_keeps_exact_model(rng):
    model, R, mask = exact_model(rng, 6, 2)
    new, d = gn_step(R, model, mask)
    assert cost(new, R) <= cost(model, R) + 1e-24
    np.testing.assert_allclose(new.covariance(), model.covariance(), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gn_step_reduces_cost(seed):
    rng = np.random.default_rng(seed)
    model, R, mask = make_instance(rng, 6, 2)
    E0 = residual(model, R)
    new, d = gn_step(R, model, mask)
    assert cost(new, R) < cost(model, R)
    # the step lands on the best point of the ray, which a grid cannot beat
    B, C = step_terms(model.A, d.delta_A, d.delta_Psi)
    grid = min(ray_cost(E0, B, C, m) for m in np.linspace(0, 2, 201))
    assert cost(new, R) <= grid + 1e-12 * cost(model, R)
    assert new.constraint_error() <= 1e-10


def test_fixed_step_mode(rng):
    model, R, mask = make_instance(rng, 6, 2)
    cfg = SolverConfig(step_mode="fixed", fixed_mu=0.5)
    _, d = gn_step(R, model, mask, cfg)
    assert d.mu == 0.5


# fit


def test_fit_at_truth_stops_immediately(rng):
    model, R, mask = exact_model(rng, 8, 2)
    _, trace = fit(R, mask, 2, init=model)
    assert trace.status is Status.CONVERGED
    assert len(trace) == 1 and trace.records[0].iteration == 0


def test_fit_exact_recovery():
    truth, mask, R = build_covariance(ExperimentSpec(20, 4, 0, model_seed=3))
    model, trace = fit(R, mask, 4)
    assert trace.status is Status.CONVERGED
    assert cost(model, R) <= 1e-16 * np.linalg.norm(R) ** 2
    assert np.all(np.diff(trace.costs) <= 0)


def test_fit_sampled_data_gradient_drop():
    _, mask, R = build_covariance(ExperimentSpec(30, 5, 2000, model_seed=1, noise_seed=2))
    _, trace = fit(R, mask, 5, SolverConfig(max_iterations=100))
    assert trace.iterations_to_drop(1e6) is not None
    assert np.all(np.diff(trace.costs) <= 0)
    assert max(r.constraint_err for r in trace.records) <= 1e-10


def test_fit_banded_mask():
    _, mask, R = build_covariance(ExperimentSpec(12, 3, 0, "banded:1", model_seed=5))
    model, trace = fit(R, mask, 3)
    assert trace.status is Status.CONVERGED
    assert model.conforms_to(mask)


def test_fit_fixed_unit_step_runs():
    _, mask, R = build_covariance(ExperimentSpec(15, 3, 500, model_seed=2, noise_seed=9))
    _, trace = fit(R, mask, 3, SolverConfig(step_mode="fixed", max_iterations=50))
    assert all(r.mu == 1.0 for r in trace.records[1:])


def test_fit_warns_when_unidentifiable(rng):
    P = 6
    mask = NoiseMask(np.ones((P, P), bool))
    R = hermitian_part(cn(rng, P, P)) + 5 * np.eye(P)
    with pytest.warns(UserWarning, match="identifiable"):
        _, trace = fit(R, mask, 2, SolverConfig(max_iterations=5))
    assert trace.warnings


def test_fit_input_errors(rng):
    R = cn(rng, 4, 4)
    with pytest.raises(NotHermitian):
        fit(R, NoiseMask.identity(4), 1)
    with pytest.raises(ValueError):
        fit(np.eye(4), NoiseMask.identity(4), 5)


def test_fit_rank_collapse_is_reported(rng):
    # loadings cannot be rank 3 in a rank-1 signal; expect a clean status either way
    P = 8
    a = cn(rng, P, 1)
    R = hermitian_part(a @ a.conj().T + np.eye(P))
    _, trace = fit(R, NoiseMask.identity(P), 3, SolverConfig(max_iterations=200))
    assert trace.status in set(Status)
    if trace.status is Status.FAILED:
        assert "iteration" in trace.reason


def test_initial_model_is_valid(rng):
    model, R, mask = make_instance(rng, 10, 3, NoiseMask.banded(10, 1))
    init = initial_model(R, mask, 3)
    assert init.conforms_to(mask)
    assert np.all(init.Gamma > 0)
    assert init.constraint_error() <= 1e-12

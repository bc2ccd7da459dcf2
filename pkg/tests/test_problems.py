import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lionk import matcore, problems
from lionk.errors import ConvergenceError, DimensionError
from lionk.optimizer import Constant, LionKConfig, run


def test_identity_objective_values():
    I = np.eye(2)
    assert problems.MatrixQuadratic(I, np.zeros((2, 2))).f(np.zeros((2, 2))) == 0.0
    assert problems.MatrixQuadratic(I, I).f(np.zeros((2, 2))) == 2.0


def test_identity_gradient():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    p = problems.MatrixQuadratic(np.eye(2), B)
    X = np.array([[0.5, 0.0], [1.0, -1.0]])
    np.testing.assert_allclose(p.grad(X), 2 * (X - B))


@pytest.mark.parametrize("seed", range(5))
def test_optimum_is_stationary(seed):
    p = problems.random_quadratic(3, 2, mu=0.05, seed=seed)
    assert np.linalg.norm(p.grad(p.X_opt)) <= 1e-10
    assert p.f(p.X_opt) == p.F_star


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_central_differences(seed):
    p = problems.random_quadratic(3, 4, mu=0.1, seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(p.shape)
    G = p.grad(X)
    h = 1e-5
    num = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        num[idx] = (p.f(X + E) - p.f(X - E)) / (2 * h)
    assert np.linalg.norm(num - G) <= 1e-5 * max(1.0, np.linalg.norm(G))


def test_smoothness_and_descent_lemma():
    p = problems.random_quadratic(3, 3, mu=0.2, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        X, Y = rng.standard_normal((2, *p.shape)) * rng.uniform(0.1, 10)
        d = np.linalg.norm(X - Y)
        assert np.linalg.norm(p.grad(X) - p.grad(Y)) <= p.L * d * (1 + 1e-12)
        assert p.f(Y) <= p.f(X) + matcore.inner(p.grad(X), Y - X) + p.L / 2 * d**2 + 1e-9


def test_smoothness_constant_is_tight():
    A = np.diag([3.0, 1.0])
    p = problems.MatrixQuadratic(A, np.zeros((2, 1)), mu=0.5)
    assert p.L == pytest.approx(2 * (9 + 0.5))


def test_optimum_is_global_minimum():
    p = problems.toy_quadratic()
    rng = np.random.default_rng(1)
    for _ in range(100):
        assert p.f(p.X_opt) <= p.f(rng.standard_normal(p.shape)) + 1e-12


def test_toy_quadratic_geometry():
    p = problems.toy_quadratic()
    assert matcore.norm(p.X_opt, "spectral") == pytest.approx(0.5)
    A_sv = matcore.svd(p.A)[1]
    assert A_sv[0] / A_sv[-1] <= 10 + 1e-9


def test_dimension_errors():
    with pytest.raises(DimensionError):
        problems.MatrixQuadratic(np.ones((2, 3)), np.ones((2, 2)))
    with pytest.raises(DimensionError):
        problems.MatrixQuadratic(np.eye(2), np.ones((3, 2)))
    p = problems.toy_quadratic()
    with pytest.raises(DimensionError):
        p.f(np.ones((3, 3)))
    with pytest.raises(DimensionError):
        p.grad(np.ones((2, 3)))


def test_problem_arrays_are_read_only():
    p = problems.toy_quadratic()
    with pytest.raises(ValueError):
        p.A[0, 0] = 1.0


def test_seeded_instances_reproduce():
    a, b = problems.random_quadratic(seed=7), problems.random_quadratic(seed=7)
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.B, b.B)


@given(st.lists(st.floats(0, 5), min_size=2, max_size=2), st.integers(0, 1000))
def test_init_with_singular_values(values, seed):
    X = problems.init_with_singular_values(values, (2, 3), seed)
    np.testing.assert_allclose(matcore.svd(X)[1], sorted(values, reverse=True), atol=1e-12)


def test_init_from_diag_and_errors():
    np.testing.assert_array_equal(problems.init_from_diag([1, 2]), np.diag([1.0, 2.0]))
    with pytest.raises(DimensionError):
        problems.init_with_singular_values([1.0], (2, 2))


# -- constrained reference ----------------------------------------------------------


def test_reference_returns_optimum_when_feasible():
    p = problems.toy_quadratic()
    np.testing.assert_allclose(problems.solve_constrained_reference(p, 1.25), p.X_opt,
                               atol=1e-12)


def test_reference_satisfies_kkt():
    from lionk.diagnostics import kkt_certificate

    p = problems.toy_quadratic()
    X = problems.solve_constrained_reference(p, 4.0)
    cert = kkt_certificate(p, X, 4.0, 1e-6)
    assert cert.is_kkt, cert
    assert matcore.norm(X, "spectral") == pytest.approx(0.25, abs=1e-9)


def test_reference_no_worse_than_muon_endpoint():
    p = problems.toy_quadratic()
    X_ref = problems.solve_constrained_reference(p, 4.0)
    cfg = LionKConfig(beta1=0.9, beta2=0.99, lam=4.0, schedule=Constant(1e-3))
    traj = run(p, cfg, None, 5000, np.zeros(p.shape), keep_states=False, record=False)
    assert p.f(X_ref) <= p.f(traj.final.X) + 1e-4


def test_reference_convergence_error():
    p = problems.random_quadratic(3, 3, mu=0.0, seed=2, cond=10.0, target_norm=5.0)
    with pytest.raises(ConvergenceError):
        problems.solve_constrained_reference(p, 1.0, tol=1e-15, max_iter=3)


def test_projection_clips_singular_values():
    X = problems.init_with_singular_values([3.0, 0.1], (2, 2), seed=1)
    P = problems.project_spectral_ball(X, 1.0)
    np.testing.assert_allclose(matcore.svd(P)[1], [1.0, 0.1], atol=1e-12)

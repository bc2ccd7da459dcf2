"""Problem zoo: smooth matrix objectives with known smoothness and optimum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import ConvergenceError, DimensionError


@dataclass(frozen=True)
class MatrixQuadratic:
    """f(X) = ||A X - B||_F^2 + mu ||X||_F^2 with A (n x n), B (n x m).

    The smoothness constant ``L = 2 (sigma_1(A)^2 + mu)``, the unconstrained
    minimizer ``X_opt`` and ``F_star = f(X_opt)`` are computed on construction.
    """

    A: np.ndarray
    B: np.ndarray
    mu: float = 0.0
    L: float = field(init=False)
    X_opt: np.ndarray = field(init=False, repr=False)
    F_star: float = field(init=False)

    def __post_init__(self):
        A = matcore.as_matrix(self.A, "A")
        B = matcore.as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionError(f"A must be n x n and B n x m, got {A.shape} and {B.shape}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "L", 2.0 * (matcore.norm(A, "spectral") ** 2 + self.mu))
        H = A.T @ A + self.mu * np.eye(A.shape[0])
        X_opt, *_ = np.linalg.lstsq(H, A.T @ B, rcond=None)
        X_opt.flags.writeable = False
        object.__setattr__(self, "X_opt", X_opt)
        object.__setattr__(self, "F_star", self.f(X_opt))

    @property
    def shape(self):
        return (self.A.shape[1], self.B.shape[1])

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape != self.shape:
            raise DimensionError(f"X has shape {X.shape}, problem expects {self.shape}")
        return X

    def f(self, X) -> float:
        X = self._check(X)
        R = self.A @ X - self.B
        return float(np.sum(R * R) + self.mu * np.sum(X * X))

    def grad(self, X) -> np.ndarray:
        X = self._check(X)
        return 2.0 * self.A.T @ (self.A @ X - self.B) + 2.0 * self.mu * X


def eval_f(p: MatrixQuadratic, X) -> float:
    return p.f(X)


def grad_f(p: MatrixQuadratic, X) -> np.ndarray:
    return p.grad(X)


def _random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_well_conditioned(rng: np.random.Generator, n: int, m: int, cond: float = 10.0):
    """n x m matrix with singular values spread log-uniformly over [1/cond, 1]."""
    r = min(n, m)
    s = np.geomspace(1.0, 1.0 / cond, r) if r > 1 else np.ones(1)
    U = _random_orthogonal(rng, n)[:, :r]
    V = _random_orthogonal(rng, m)[:, :r]
    return (U * s) @ V.T


def random_quadratic(n: int = 2, m: int = 2, mu: float = 0.1, seed: int = 0,
                     cond: float = 10.0, target_norm: float | None = None) -> MatrixQuadratic:
    """Seeded instance with cond(A) <= ``cond``.

    With ``target_norm`` set, B is rescaled so that ||X_opt||_op equals it;
    this places the unconstrained optimum inside or outside a chosen ball.
    """
    rng = np.random.default_rng(seed)
    A = random_well_conditioned(rng, n, n, cond) * 2.0
    B = rng.standard_normal((n, m))
    p = MatrixQuadratic(A, B, mu)
    if target_norm is not None:
        scale = target_norm / matcore.norm(p.X_opt, "spectral")
        p = MatrixQuadratic(A, B * scale, mu)
    return p


def toy_quadratic(seed: int = 0) -> MatrixQuadratic:
    """The 2 x 2 instance shared by the demo configs and the acceptance runs.

    ||X_opt||_op = 0.5, so the optimum is feasible for lambda = 1.25 (radius
    0.8) and infeasible for lambda = 4 (radius 0.25).
    """
    return random_quadratic(2, 2, mu=0.1, seed=seed, cond=10.0, target_norm=0.5)


# -- initialization specs -----------------------------------------------------


def init_from_diag(values, shape=None) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    n, m = shape if shape is not None else (len(values), len(values))
    X = np.zeros((n, m))
    k = min(n, m, len(values))
    X[np.arange(k), np.arange(k)] = values[:k]
    return X


def init_with_singular_values(values, shape, seed: int = 0) -> np.ndarray:
    """Random matrix U diag(values) V^T with Haar-distributed U and V."""
    n, m = shape
    values = np.asarray(values, dtype=np.float64)
    r = min(n, m)
    if len(values) != r:
        raise DimensionError(f"need {r} singular values for shape {shape}, got {len(values)}")
    rng = np.random.default_rng(seed)
    U = _random_orthogonal(rng, n)[:, :r]
    V = _random_orthogonal(rng, m)[:, :r]
    return (U * values) @ V.T


# -- constrained reference ----------------------------------------------------


def project_spectral_ball(X, radius: float) -> np.ndarray:
    """Frobenius projection onto {||X||_op <= radius}: clip singular values."""
    U, s, V = matcore.svd(X)
    return (U * np.minimum(s, radius)) @ V.T


def solve_constrained_reference(p: MatrixQuadratic, lam: float, tol: float = 1e-9,
                                max_iter: int = 200_000) -> np.ndarray:
    """Minimize f over {||lam X||_op <= 1} by projected gradient descent.

    Stops when the gradient mapping norm ``L ||X - P(X - grad/L)||_F`` drops
    to ``tol``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    radius = 1.0 / lam
    X = project_spectral_ball(p.X_opt, radius)
    step = 1.0 / p.L
    for _ in range(max_iter):
        X_next = project_spectral_ball(X - step * p.grad(X), radius)
        if p.L * np.linalg.norm(X - X_next) <= tol:
            return X_next
        X = X_next
    raise ConvergenceError(f"projected gradient did not reach tol={tol} in {max_iter} iterations")

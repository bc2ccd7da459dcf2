"""Convex maps K with conjugates and subgradient selections.

A map decides what Lion-K does with momentum: the nuclear norm gives Muon,
the entrywise l1 norm gives Lion, and spectral sums sum_i phi(sigma_i(X))
interpolate between them. Each map also knows its conjugate K*, a selection
from the subdifferential of K*, and the dual-norm bound b on its subgradients
(the implicit constraint radius is b / lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import matcore
from .errors import DomainError, UnsupportedMapError

FEAS_TOL = 1e-8


class Infinite:
    """Tagged +/- infinity returned by conjugates outside their domain.

    Orders above (or below) every real but refuses arithmetic, so an
    infeasible value can never leak silently into a sum.
    """

    __slots__ = ("sign",)

    def __init__(self, sign: int = 1):
        self.sign = 1 if sign >= 0 else -1

    def __repr__(self):
        return "inf" if self.sign > 0 else "-inf"

    __str__ = __repr__

    def __eq__(self, other):
        return isinstance(other, Infinite) and other.sign == self.sign

    def __hash__(self):
        return hash(("Infinite", self.sign))

    def __lt__(self, other):
        if isinstance(other, Infinite):
            return self.sign < other.sign
        return self.sign < 0

    def __gt__(self, other):
        if isinstance(other, Infinite):
            return self.sign > other.sign
        return self.sign > 0

    def __le__(self, other):
        return self == other or self < other

    def __ge__(self, other):
        return self == other or self > other

    def __neg__(self):
        return Infinite(-self.sign)

    def __float__(self):
        return math.inf * self.sign


INF = Infinite(1)
NEG_INF = Infinite(-1)


def is_infinite(value) -> bool:
    return isinstance(value, Infinite)


# -- scalar profiles for spectral sums ---------------------------------------


@dataclass(frozen=True)
class ScalarConvex:
    """Convex nondecreasing phi on [0, inf) with a subgradient selection.

    ``conj`` and ``conj_grad`` describe the conjugate of x -> phi(|x|) on
    y >= 0; ``conj`` returns ``None`` outside its domain.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    slope_bound: float
    conj: Optional[Callable[[np.ndarray], Optional[float]]] = None
    conj_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None


def phi_abs() -> ScalarConvex:
    def conj(y):
        return 0.0 if np.all(y <= 1.0 + FEAS_TOL) else None

    return ScalarConvex(
        name="abs",
        f=np.abs,
        grad=np.sign,
        slope_bound=1.0,
        conj=conj,
        conj_grad=np.zeros_like,
    )


def phi_soft_threshold(e: float) -> ScalarConvex:
    if e < 0:
        raise ValueError("threshold e must be nonnegative")

    def conj(y):
        if np.any(y > 1.0 + FEAS_TOL):
            return None
        return float(e * np.sum(y))

    return ScalarConvex(
        name=f"soft_threshold({e:g})",
        f=lambda x: np.maximum(np.abs(x) - e, 0.0),
        # slope 0 at x == e: lower end of the subdifferential
        grad=lambda x: (x > e).astype(np.float64),
        slope_bound=1.0,
        conj=conj,
        conj_grad=lambda y: e * np.sign(y),
    )


def phi_square() -> ScalarConvex:
    return ScalarConvex(
        name="square",
        f=np.square,
        grad=lambda x: 2.0 * x,
        slope_bound=math.inf,
        conj=lambda y: float(np.sum(y**2) / 4.0),
        conj_grad=lambda y: y / 2.0,
    )


def phi_huber(delta: float) -> ScalarConvex:
    """Smooth approximation of |x|: quadratic on [0, delta], linear beyond."""
    if delta <= 0:
        raise ValueError("delta must be positive")

    def f(x):
        x = np.abs(x)
        return np.where(x <= delta, x**2 / (2 * delta), x - delta / 2)

    def conj(y):
        if np.any(y > 1.0 + FEAS_TOL):
            return None
        return float(np.sum(delta * y**2 / 2))

    return ScalarConvex(
        name=f"huber({delta:g})",
        f=f,
        grad=lambda x: np.clip(x / delta, -1.0, 1.0),
        slope_bound=1.0,
        conj=conj,
        conj_grad=lambda y: delta * y,
    )


PHI_FACTORIES = {
    "abs": lambda *p: phi_abs(),
    "soft_threshold": lambda e=0.5, *p: phi_soft_threshold(float(e)),
    "square": lambda *p: phi_square(),
    "huber": lambda d=0.5, *p: phi_huber(float(d)),
}


# -- maps ---------------------------------------------------------------------


class ConvexMap:
    """Interface shared by every K. Instances are immutable."""

    kind = "abstract"
    is_norm = False
    differentiable = False
    dual_bound = math.inf

    def eval(self, X) -> float:
        raise NotImplementedError

    def subgrad(self, X) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, Y):
        """K*(Y) as a float, or ``INF`` outside dom(K*)."""
        raise NotImplementedError

    def conjugate_subgrad(self, Y) -> np.ndarray:
        raise NotImplementedError

    def dual_norm(self, G) -> float:
        """The norm in which ``dual_bound`` bounds subgradients."""
        return matcore.norm(G, "spectral")

    def __repr__(self):
        return f"{type(self).__name__}()"

    def _check_domain(self, Y):
        if is_infinite(self.conjugate(Y)):
            raise DomainError(f"{self.kind}: argument lies outside dom(K*)")


class NuclearNorm(ConvexMap):
    """K(X) = ||X||_tr, the map that turns Lion-K into Muon."""

    kind = "nuclear"
    is_norm = True
    dual_bound = 1.0

    def __init__(self, rank_tol: float = 1e-10):
        self.rank_tol = rank_tol

    def eval(self, X):
        return matcore.norm(X, "nuclear")

    def subgrad(self, X):
        return matcore.msgn_exact(X, self.rank_tol)

    def conjugate(self, Y):
        return 0.0 if matcore.norm(Y, "spectral") <= 1.0 + FEAS_TOL else INF

    def conjugate_subgrad(self, Y):
        # 0 lies in dK*(Y) both strictly inside and on the unit sphere
        self._check_domain(Y)
        return np.zeros_like(np.asarray(Y, dtype=np.float64))


class EntrywiseL1(ConvexMap):
    """K(X) = sum |X_ij|; Lion's map. Subgradient is sign with sgn(0) = 0."""

    kind = "entrywise_l1"
    is_norm = True
    dual_bound = 1.0

    def eval(self, X):
        return matcore.norm(X, "entrywise_l1")

    def subgrad(self, X):
        return np.sign(np.asarray(X, dtype=np.float64))

    def conjugate(self, Y):
        return 0.0 if matcore.norm(Y, "entrywise_linf") <= 1.0 + FEAS_TOL else INF

    def conjugate_subgrad(self, Y):
        self._check_domain(Y)
        return np.zeros_like(np.asarray(Y, dtype=np.float64))

    def dual_norm(self, G):
        return matcore.norm(G, "entrywise_linf")


class SquaredFrobenius(ConvexMap):
    """K(X) = ||X||_F^2. Smooth; K*(Y) = ||Y||_F^2 / 4."""

    kind = "squared_frobenius"
    differentiable = True

    def eval(self, X):
        return float(np.sum(np.square(X)))

    def subgrad(self, X):
        return 2.0 * np.asarray(X, dtype=np.float64)

    def conjugate(self, Y):
        return float(np.sum(np.square(Y)) / 4.0)

    def conjugate_subgrad(self, Y):
        return np.asarray(Y, dtype=np.float64) / 2.0

    def dual_norm(self, G):
        return matcore.norm(G, "frobenius")


class QuadraticForm(ConvexMap):
    """K(X) = Tr(X^T P X) for symmetric positive definite P."""

    kind = "quadratic_form"
    differentiable = True

    def __init__(self, P):
        P = matcore.as_matrix(P, "P")
        if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("P must be square and symmetric")
        w = np.linalg.eigvalsh(P)
        if w[0] <= 0:
            raise ValueError("P must be positive definite")
        self.P = P
        self._P_inv = np.linalg.inv(P)

    def eval(self, X):
        X = np.asarray(X, dtype=np.float64)
        return float(np.sum(X * (self.P @ X)))

    def subgrad(self, X):
        return 2.0 * self.P @ np.asarray(X, dtype=np.float64)

    def conjugate(self, Y):
        Y = np.asarray(Y, dtype=np.float64)
        return float(np.sum(Y * (self._P_inv @ Y)) / 4.0)

    def conjugate_subgrad(self, Y):
        return self._P_inv @ np.asarray(Y, dtype=np.float64) / 2.0

    def dual_norm(self, G):
        return matcore.norm(G, "frobenius")


class SpectralSum(ConvexMap):
    """K(X) = sum_i phi(sigma_i(X)), gradient U diag(phi'(sigma)) V^T."""

    kind = "spectral_sum"

    def __init__(self, phi: ScalarConvex, rank_tol: float = 1e-10):
        self.phi = phi
        self.rank_tol = rank_tol
        self.dual_bound = phi.slope_bound

    def __repr__(self):
        return f"SpectralSum({self.phi.name})"

    def eval(self, X):
        return float(np.sum(self.phi.f(matcore.singular_values(X))))

    def subgrad(self, X):
        U, s, V = matcore.svd(X)
        s = np.where(s > self.rank_tol * s[0], s, 0.0)
        return (U * self.phi.grad(s)) @ V.T

    def conjugate(self, Y):
        if self.phi.conj is None:
            raise UnsupportedMapError(f"no conjugate available for phi={self.phi.name}")
        val = self.phi.conj(matcore.singular_values(Y))
        return INF if val is None else float(val)

    def conjugate_subgrad(self, Y):
        if self.phi.conj_grad is None:
            raise UnsupportedMapError(f"no conjugate subgradient for phi={self.phi.name}")
        self._check_domain(Y)
        U, s, V = matcore.svd(Y)
        s = np.where(s > self.rank_tol * max(s[0], 1e-300), s, 0.0)
        return (U * self.phi.conj_grad(s)) @ V.T


class SoftThresholdSpectral(SpectralSum):
    """K(X) = sum_i max(sigma_i - e, 0); conjugate is e ||Y||_tr on the unit op-ball."""

    kind = "soft_threshold_spectral"

    def __init__(self, e: float = 0.5, rank_tol: float = 1e-10):
        super().__init__(phi_soft_threshold(e), rank_tol)
        self.e = e

    def __repr__(self):
        return f"SoftThresholdSpectral(e={self.e:g})"


class Schatten(ConvexMap):
    """K(X) = ||sigma(X)||_p. p=1 is the nuclear norm, p=inf the spectral norm."""

    kind = "schatten"
    is_norm = True
    dual_bound = 1.0

    def __init__(self, p: float, rank_tol: float = 1e-10):
        if not p >= 1:
            raise ValueError("Schatten p must be >= 1")
        self.p = float(p)
        self.q = math.inf if self.p == 1 else (1.0 if math.isinf(self.p) else self.p / (self.p - 1))
        self.rank_tol = rank_tol

    def __repr__(self):
        return f"Schatten(p={self.p:g})"

    def eval(self, X):
        return matcore.schatten_norm(X, self.p)

    def subgrad(self, X):
        U, s, V = matcore.svd(X)
        if s[0] == 0.0:
            return np.zeros_like(np.asarray(X, dtype=np.float64))
        if self.p == 1:
            w = (s > self.rank_tol * s[0]).astype(np.float64)
        elif math.isinf(self.p):
            w = np.zeros_like(s)
            w[0] = 1.0
        else:
            r = s / s[0]  # scale first so s**p cannot underflow
            w = (r / np.sum(r**self.p) ** (1 / self.p)) ** (self.p - 1)
        return (U * w) @ V.T

    def conjugate(self, Y):
        return 0.0 if self.dual_norm(Y) <= 1.0 + FEAS_TOL else INF

    def conjugate_subgrad(self, Y):
        self._check_domain(Y)
        return np.zeros_like(np.asarray(Y, dtype=np.float64))

    def dual_norm(self, G):
        return matcore.schatten_norm(G, self.q)


def fenchel_gap(K: ConvexMap, X, Y) -> float:
    """K(X) + K*(Y) - <X, Y>; nonnegative by Fenchel-Young."""
    conj = K.conjugate(Y)
    if is_infinite(conj):
        raise DomainError(f"{K.kind}: Y outside dom(K*), Fenchel gap is infinite")
    return K.eval(X) + conj - matcore.inner(X, Y)


MAP_KINDS = (
    "nuclear",
    "entrywise_l1",
    "squared_frobenius",
    "spectral_sum",
    "soft_threshold_spectral",
    "schatten",
    "quadratic_form",
)


def make_map(kind: str, params=(), P=None) -> ConvexMap:
    """Build a map from a kind string and a positional parameter list.

    ``spectral_sum`` takes the phi name first (``abs``, ``soft_threshold``,
    ``square``, ``huber``) followed by phi's parameters.
    """
    params = list(params)
    if kind == "nuclear":
        return NuclearNorm()
    if kind == "entrywise_l1":
        return EntrywiseL1()
    if kind == "squared_frobenius":
        return SquaredFrobenius()
    if kind == "soft_threshold_spectral":
        return SoftThresholdSpectral(float(params[0]) if params else 0.5)
    if kind == "schatten":
        if not params:
            raise ValueError("schatten needs a parameter p")
        return Schatten(float(params[0]))
    if kind == "spectral_sum":
        if not params:
            raise ValueError("spectral_sum needs a phi name")
        name, *rest = params
        if name not in PHI_FACTORIES:
            raise ValueError(f"unknown phi {name!r}; expected one of {sorted(PHI_FACTORIES)}")
        return SpectralSum(PHI_FACTORIES[name](*(float(v) for v in rest)))
    if kind == "quadratic_form":
        if P is None:
            raise ValueError("quadratic_form needs a matrix P")
        return QuadraticForm(P)
    raise ValueError(f"unknown map kind {kind!r}; expected one of {MAP_KINDS}")

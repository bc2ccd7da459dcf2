"""Convergence diagnostics for Lion-K runs.

Quantities tracked per step ``t`` (all with step size ``eta_t``):

* ``S(X) = ||grad F(X)||_tr + <lam X, grad F(X)>``, the KKT score;
* ``V_B(X) = max(||X||_op - 1/lam, 0)``, distance to the implicit ball;
* ``H_t``, the discrete Hamiltonian, together with ``Gamma_t``, ``Delta_t``
  and coefficients ``a_t, b_t, c_t`` entering its per-step descent bound
  ``H_{t+1} - H_t <= -eta_t (a_t Gamma_t + b_t Delta_t) + eta_t^2 L/2 ||delta_t||^2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable

import numpy as np

from . import matcore
from .convex_maps import INF, NEG_INF, ConvexMap, Infinite, is_infinite
from .errors import DomainError, MissingOptimumError, UnsupportedMapError

NAN = float("nan")

CSV_COLUMNS = ("t", "F", "S", "V_B", "H", "Gamma", "Delta", "spec_norm_lambdaX", "delta_norm")


@dataclass(frozen=True)
class StepRecord:
    t: int
    F: float
    S: float
    V_B: float
    H: object  # float or Infinite
    Gamma: float
    Delta: float
    spec_norm_lambdaX: float
    a: float = NAN
    b_coef: float = NAN
    c: float = NAN
    delta_norm: float = NAN
    eta: float = NAN


# -- scalar diagnostics -------------------------------------------------------


def kkt_score(problem, X, lam: float, grad=None) -> float:
    G = problem.grad(X) if grad is None else grad
    return matcore.norm(G, "nuclear") + lam * matcore.inner(X, G)


@dataclass(frozen=True)
class KKTCertificate:
    is_kkt: bool
    feasibility_residual: float
    score: float
    score_tolerance: float


def kkt_certificate(problem, X, lam: float, tol: float) -> KKTCertificate:
    """Feasible and vanishing score, both up to ``tol``.

    ``feasibility_residual = max(||lam X||_op - 1, 0)``; the score test is
    relative: ``S <= tol * (1 + ||grad F||_tr)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    G = problem.grad(X)
    spec = lam * matcore.norm(X, "spectral")
    S = kkt_score(problem, X, lam, G)
    bound = tol * (1.0 + matcore.norm(G, "nuclear"))
    ok = spec <= 1.0 + tol and S <= bound
    return KKTCertificate(ok, max(spec - 1.0, 0.0), S, bound)


def lyapunov_vb(X, lam: float) -> float:
    if lam <= 0:
        raise DomainError("V_B needs lambda > 0: the constraint ball is unbounded otherwise")
    return max(matcore.norm(X, "spectral") - 1.0 / lam, 0.0)


def coefficients(eta: float, lam: float, beta1: float, beta2: float):
    """(a_t, b_t, c_t); b_t is NaN unless beta1 < beta2."""
    denom = eta * lam * (1.0 - beta1) + (1.0 - beta2)
    if denom <= 0:
        return NAN, NAN, NAN
    c = eta * lam * beta1 / denom
    b = beta1 * (1.0 - beta2) / ((beta2 - beta1) * denom) if beta2 > beta1 else NAN
    return c + 1.0, b, c


def hamiltonian(problem, kmap: ConvexMap, X, M, lam: float, c: float):
    """H(X, M) with coefficient c; ``INF`` when lam X is outside dom(K*)."""
    if lam <= 0:
        raise DomainError("the Hamiltonian needs lambda > 0")
    F_star = getattr(problem, "F_star", None)
    if F_star is None:
        raise MissingOptimumError("problem has no F_star; supply a lower bound on F")
    lamX = lam * np.asarray(X)
    conj = kmap.conjugate(lamX)
    if is_infinite(conj):
        return INF
    kinetic = conj + kmap.eval(M) - matcore.inner(lamX, M)
    return problem.f(X) - F_star + conj / lam + c / lam * kinetic


def gamma_term(kmap: ConvexMap, Mtilde_next, X_next, lam: float, direction=None) -> float:
    """<grad K(M~_{t+1}) - lam X_{t+1}, M~_{t+1} - grad K*(lam X_{t+1})>; NaN off dom(K*)."""
    D = kmap.subgrad(Mtilde_next) if direction is None else direction
    lamX = lam * np.asarray(X_next)
    try:
        dual = kmap.conjugate_subgrad(lamX)
    except DomainError:
        return NAN
    return matcore.inner(D - lamX, Mtilde_next - dual)


def delta_term(kmap: ConvexMap, Mtilde_next, M_next, direction=None) -> float:
    D = kmap.subgrad(Mtilde_next) if direction is None else direction
    return matcore.inner(D - kmap.subgrad(M_next), np.asarray(Mtilde_next) - M_next)


def hamiltonian_discrete(problem, config, X, M, X_next, M_next, Mtilde_next, eta: float) -> dict:
    """All Hamiltonian-side quantities for the transition t -> t+1."""
    lam = config.lam
    kmap = config.kmap
    a, b, c = coefficients(eta, lam, config.beta1, config.beta2)
    D = kmap.subgrad(Mtilde_next)
    delta = D - lam * np.asarray(X_next)
    return {
        "H": hamiltonian(problem, kmap, X, M, lam, c),
        "Gamma": gamma_term(kmap, Mtilde_next, X_next, lam, D),
        "Delta": delta_term(kmap, Mtilde_next, M_next, D),
        "a": a,
        "b_coef": b,
        "c": c,
        "delta_norm": float(np.linalg.norm(delta)),
    }


def make_record(problem, config, t: int, state, next_state=None, eta: float = NAN) -> StepRecord:
    """StepRecord for state ``t``; transition fields are NaN when ``next_state`` is None."""
    lam = config.lam
    X, M = state.X, state.M
    G = problem.grad(X)
    spec_X = matcore.norm(X, "spectral")
    S = matcore.norm(G, "nuclear") + lam * matcore.inner(X, G)
    V_B = max(spec_X - 1.0 / lam, 0.0) if lam > 0 else NAN
    values = {"H": NAN, "Gamma": NAN, "Delta": NAN, "a": NAN, "b_coef": NAN, "c": NAN,
              "delta_norm": NAN}
    if next_state is not None:
        D = config.kmap.subgrad(next_state.last_Mtilde)
        values["delta_norm"] = float(np.linalg.norm(D - lam * next_state.X))
        values["Delta"] = delta_term(config.kmap, next_state.last_Mtilde, next_state.M, D)
        if lam > 0:
            values["Gamma"] = gamma_term(config.kmap, next_state.last_Mtilde, next_state.X, lam, D)
        a, b, c = coefficients(eta, lam, config.beta1, config.beta2)
        values.update(a=a, b_coef=b, c=c)
    if lam > 0 and getattr(problem, "F_star", None) is not None:
        c = values["c"]
        if math.isnan(c):
            # final state: reuse the most recent step size for c
            c = coefficients(eta, lam, config.beta1, config.beta2)[2]
        if not math.isnan(c):
            values["H"] = hamiltonian(problem, config.kmap, X, M, lam, c)
    return StepRecord(t=t, F=problem.f(X), S=S, V_B=V_B, spec_norm_lambdaX=lam * spec_X,
                      eta=eta, **values)


def descent_residual(rec_t: StepRecord, rec_t1: StepRecord, eta_t: float, L: float):
    """H_{t+1} - H_t + eta (a Gamma + b Delta) - eta^2 L/2 ||delta||^2.

    Nonpositive (up to rounding) on deterministic runs inside the ball with a
    constant or nonincreasing step size. Infinite H propagates as a sentinel.
    """
    if is_infinite(rec_t1.H):
        return INF
    if is_infinite(rec_t.H):
        return NEG_INF
    if eta_t == 0:
        return rec_t1.H - rec_t.H
    return (rec_t1.H - rec_t.H
            + eta_t * (rec_t.a * rec_t.Gamma + rec_t.b_coef * rec_t.Delta)
            - 0.5 * eta_t**2 * L * rec_t.delta_norm**2)


# -- run-level bounds ---------------------------------------------------------


def c_k_nuclear(shape) -> float:
    """sqrt(min(n, m)): ||Z||_F <= C_K ||Z||_op for every Z of this shape."""
    return math.sqrt(min(shape))


def average_score_bound(H0: float, HT: float, eta: float, T: int, C_K: float, L: float,
                        beta1: float, beta2: float, init_gap: float) -> float:
    """Right-hand side bounding (1/T) sum_{t=1..T} S(X_t) for deterministic Muon.

    ``init_gap`` is ``||grad F(X_0) + M_0||_F``.
    """
    return ((H0 - HT) / (eta * T)
            + 2.0 * eta * C_K**2 * L
            + 2.0 * beta1 * C_K * init_gap / ((1.0 - beta2) * T)
            + 4.0 * eta * C_K**2 * L * (1.0 + beta1 - beta2) / (1.0 - beta2))


def momentum_tracking_bound(t: int, eta: float, C_K: float, L: float, beta1: float,
                            beta2: float, init_gap: float) -> float:
    """Upper bound on ||grad F(X_t) + M~_t||_F for t >= 1."""
    return (2.0 * eta * C_K * L * (1.0 + beta1 - beta2) / (1.0 - beta2)
            + beta1 * beta2 ** (t - 1) * init_gap)


def constraint_decay_slack(norm_t: float, norm_next: float, eta: float, lam: float,
                           b: float = 1.0) -> float:
    """(||X_{t+1}|| - b/lam) - (1 - eta lam)(||X_t|| - b/lam); nonpositive in theory."""
    r = b / lam
    return (norm_next - r) - (1.0 - eta * lam) * (norm_t - r)


# -- continuous time ----------------------------------------------------------


def hamiltonian_continuous(problem, X, M, alpha: float, gamma: float, epsilon: float,
                           lam: float, kmap: ConvexMap) -> float:
    """Lyapunov function of the Lion-K ODE for a differentiable map K."""
    if not kmap.differentiable:
        raise UnsupportedMapError(f"{kmap.kind} is not differentiable; the ODE Lyapunov needs smooth K")
    if epsilon * gamma > 1:
        raise ValueError("need epsilon * gamma <= 1")
    lamX = lam * np.asarray(X)
    conj = kmap.conjugate(lamX)
    K0 = kmap.eval(np.zeros_like(lamX))
    return (alpha * (problem.f(X) - problem.F_star)
            + gamma / lam * (conj + K0)
            + (1.0 - epsilon * gamma) / (1.0 + epsilon * lam)
            * (conj + kmap.eval(M) - matcore.inner(M, lamX)))


def ode_rhs(problem, kmap, X, M, alpha, gamma, epsilon, lam):
    G = problem.grad(X)
    Mt = M - epsilon * (gamma * M + alpha * G)
    return kmap.subgrad(Mt) - lam * X, -alpha * G - gamma * M


def hamiltonian_rate(problem, kmap, X, M, alpha, gamma, epsilon, lam) -> float:
    """Exact time derivative of :func:`hamiltonian_continuous` along the ODE."""
    kappa = (1.0 - epsilon * gamma) / (1.0 + epsilon * lam)
    Ystar = kmap.conjugate_subgrad(lam * X)
    grad_X = alpha * problem.grad(X) + gamma * Ystar + kappa * lam * (Ystar - M)
    grad_M = kappa * (kmap.subgrad(M) - lam * X)
    dX, dM = ode_rhs(problem, kmap, X, M, alpha, gamma, epsilon, lam)
    return matcore.inner(grad_X, dX) + matcore.inner(grad_M, dM)


@dataclass(frozen=True)
class OdeTrace:
    times: np.ndarray
    H: np.ndarray
    H_rate: np.ndarray


def integrate_ode(problem, kmap: ConvexMap, X0, M0, alpha: float, gamma: float,
                  epsilon: float, lam: float, dt: float, t_end: float) -> OdeTrace:
    """Forward-Euler trajectory of the Lion-K ODE.

    Records H and its exact instantaneous rate at every grid point.
    """
    if not kmap.differentiable:
        raise UnsupportedMapError(f"{kmap.kind} is not differentiable")
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    steps = int(round(t_end / dt))
    X = np.array(X0, dtype=np.float64)
    M = np.array(M0, dtype=np.float64)
    H = np.empty(steps + 1)
    rate = np.empty(steps + 1)
    args = (alpha, gamma, epsilon, lam)
    for k in range(steps + 1):
        H[k] = hamiltonian_continuous(problem, X, M, *args, kmap)
        rate[k] = hamiltonian_rate(problem, kmap, X, M, *args)
        if k < steps:
            dX, dM = ode_rhs(problem, kmap, X, M, *args)
            X = X + dt * dX
            M = M + dt * dM
    return OdeTrace(np.arange(steps + 1) * dt, H, rate)


def max_increase_rate(H: np.ndarray, dt: float) -> float:
    """Largest positive jump of H per unit time (0 if H never increases)."""
    jumps = np.diff(H) / dt
    return float(max(jumps.max(initial=0.0), 0.0))


def euler_defect(trace: OdeTrace, dt: float) -> float:
    """Largest excess of the discrete slope of H over its exact rate.

    Since the exact rate is nonpositive, this bounds how fast the discrete H
    can grow; it is first order in ``dt``.
    """
    excess = np.diff(trace.H) / dt - trace.H_rate[:-1]
    return float(max(excess.max(initial=0.0), 0.0))


# -- serialization ------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, Infinite):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def records_to_csv(records: Iterable[StepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, name)) for name in CSV_COLUMNS])
    return buf.getvalue()


def write_records_csv(path, records: Iterable[StepRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def _parse(token: str):
    if token == "inf":
        return INF
    if token == "-inf":
        return NEG_INF
    return float(token)


def read_records_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    out = []
    for row in rows[1:]:
        vals = dict(zip(CSV_COLUMNS, row))
        out.append(StepRecord(
            t=int(vals["t"]),
            **{k: _parse(vals[k]) for k in CSV_COLUMNS[1:]},
        ))
    return out


def validate_record(rec: StepRecord, tol: float = 1e-9) -> list:
    """Names of StepRecord invariants that ``rec`` violates (NaN fields are skipped)."""
    bad = []
    spec = rec.spec_norm_lambdaX

    def ok(v):
        return not (isinstance(v, float) and math.isnan(v))

    if ok(rec.S) and ok(spec) and spec <= 1.0 + tol and rec.S < -tol:
        bad.append("S_nonnegative_in_ball")
    if ok(rec.Gamma) and rec.Gamma < -tol:
        bad.append("Gamma_nonnegative")
    if ok(rec.Delta) and rec.Delta < -tol:
        bad.append("Delta_nonnegative")
    if ok(rec.V_B):
        if rec.V_B < 0:
            bad.append("V_B_nonnegative")
        if ok(spec):
            if spec <= 1.0 and rec.V_B != 0.0:
                bad.append("V_B_zero_in_ball")
            if spec > 1.0 + tol and rec.V_B <= 0.0:
                bad.append("V_B_positive_outside_ball")
    return bad


def record_fields() -> tuple:
    return tuple(f.name for f in fields(StepRecord))

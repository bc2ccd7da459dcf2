"""Mechanical checks of the convergence claims, one function per claim.

Each check returns a :class:`Check` holding the measured quantities and the
verdict at the stated tolerance. ``run_all`` drives every check and backs the
``verify-all`` subcommand.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from . import matcore, problems
from .convex_maps import fenchel_gap, is_infinite, make_map
from .optimizer import (Constant, Decaying, GradientOracle, InverseSqrt, LionKConfig,
                        OptimizerState, implicit_rate, run, step)

FEASIBLE_START = (1.25, (0.01, 0.75))
FEASIBLE_ALT = (1.25, (0.7, 0.7))
INFEASIBLE_START = (4.0, (0.1, 0.95))

RATE_C = 0.5
NOISE_C = 0.1
NOISE_T = 1000


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{verdict}] {self.criterion:2d} {self.name}: {parts} ({self.seconds:.1f}s)"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        check = fn(*args, **kwargs)
        check.seconds = time.perf_counter() - t0
        return check
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def min_score(problem, states, lam) -> float:
    """min over t >= 1 of S(X_t)."""
    return min(diag.kkt_score(problem, s.X, lam) for s in states[1:])


# -- constraint decay and trap --------------------------------------------------


def constraint_runs(n_runs=100, T=300, seed=0, lams=(0.5, 1.25, 4.0), etas=(1e-3, 1e-2)):
    """Seeded runs on random 2x2..8x8 problems, started both inside and outside the ball.

    ``eta`` is the step of the explicit form ``X' = X + eta (O - lam X)``; the
    implicit update realizes it with rate ``eta / (1 - eta lam)``.
    Yields (lam, eta, spectral norms of X_0..X_T) per run.
    """
    rng = np.random.default_rng(seed)
    for i in range(n_runs):
        n, m = (int(v) for v in rng.integers(2, 9, size=2))
        lam = lams[i % len(lams)]
        eta = etas[(i // len(lams)) % len(etas)]
        p = problems.random_quadratic(n, m, mu=0.1, seed=seed * 1000 + i)
        sv = np.sort(rng.uniform(0.0, 2.5 / lam, size=min(n, m)))[::-1]
        X0 = problems.init_with_singular_values(sv, (n, m), seed=seed * 1000 + i)
        cfg = LionKConfig(0.9, 0.99, lam, Constant(implicit_rate(eta, lam)), make_map("nuclear"))
        tr = run(p, cfg, GradientOracle(), T, X0, record=False)
        yield lam, eta, np.array([matcore.norm(s.X, "spectral") for s in tr.states])


@_timed
def check_constraint_decay(n_runs=100, T=300, seed=0, slack=1e-9) -> Check:
    worst = -math.inf
    violations = 0
    for lam, eta, norms in constraint_runs(n_runs, T, seed):
        d = norms - 1.0 / lam
        excess = d[1:] - (1.0 - eta * lam) * d[:-1]
        worst = max(worst, float(excess.max()))
        violations += int(np.sum(excess > slack))
    return Check(1, "constraint decay", violations == 0,
                 {"runs": n_runs, "max_excess": worst, "violations": violations})


@_timed
def check_trap(n_runs=100, T=300, seed=0, tol=1e-9) -> Check:
    violations = 0
    entered = 0
    for lam, _, norms in constraint_runs(n_runs, T, seed):
        inside = lam * norms <= 1.0 + tol
        if inside.any():
            entered += 1
            first = int(np.argmax(inside))
            violations += int(np.sum(~inside[first:]))
    return Check(2, "trap property", violations == 0,
                 {"runs_entering": entered, "violations": violations})


# -- discrete Lyapunov ----------------------------------------------------------


def lyapunov_run(T=10_000, eta=1e-3, beta1=0.9, beta2=0.99, init=FEASIBLE_START, seed=0):
    lam, x0 = init
    p = problems.toy_quadratic(seed)
    cfg = LionKConfig(beta1, beta2, lam, Constant(eta), make_map("nuclear"))
    return p, cfg, run(p, cfg, GradientOracle(), T, problems.init_from_diag(x0))


@_timed
def check_hamiltonian_descent(T=10_000, eta=1e-3, inits=(FEASIBLE_START, FEASIBLE_ALT)) -> Check:
    worst_res = -math.inf
    min_H = math.inf
    min_gd = math.inf
    for init in inits:
        p, cfg, tr = lyapunov_run(T, eta, init=init)
        R = tr.records
        for t in range(T):
            worst_res = max(worst_res, diag.descent_residual(R[t], R[t + 1], tr.etas[t], p.L))
            min_gd = min(min_gd, R[t].Gamma, R[t].Delta)
        min_H = min(min_H, min(r.H for r in R))
    ok = worst_res <= 1e-8 and min_H >= 0 and min_gd >= -1e-9
    return Check(3, "per-step Hamiltonian descent", ok,
                 {"max_residual": worst_res, "min_H": min_H, "min_Gamma_Delta": min_gd})


def average_score_gap(p, cfg, tr, eta) -> tuple:
    """(measured average of S over t=1..T, right-hand side of the bound)."""
    R = tr.records
    T = len(R) - 1
    avg = float(np.mean([r.S for r in R[1:]]))
    rhs = diag.average_score_bound(R[0].H, R[T].H, eta, T, diag.c_k_nuclear(p.shape), p.L,
                                   cfg.beta1, cfg.beta2, tr.metadata["init_gap"])
    return avg, rhs


@_timed
def check_average_score(T=10_000, etas=(1e-3, 1e-2), inits=(FEASIBLE_START, FEASIBLE_ALT)) -> Check:
    worst = -math.inf
    for eta in etas:
        for init in inits:
            p, cfg, tr = lyapunov_run(T, eta, init=init)
            avg, rhs = average_score_gap(p, cfg, tr, eta)
            worst = max(worst, avg - rhs)
    return Check(4, "average-score bound", worst <= 1e-6, {"max(avg - rhs)": worst})


def momentum_tracking_excess(p, cfg, tr, eta) -> float:
    C = diag.c_k_nuclear(p.shape)
    worst = -math.inf
    for t in range(1, len(tr.states)):
        s = tr.states[t]
        lhs = float(np.linalg.norm(p.grad(s.X) + s.last_Mtilde))
        rhs = diag.momentum_tracking_bound(t, eta, C, p.L, cfg.beta1, cfg.beta2,
                                           tr.metadata["init_gap"])
        worst = max(worst, lhs - rhs)
    return worst


@_timed
def check_momentum_tracking(T=10_000, etas=(1e-3, 1e-2), inits=(FEASIBLE_START, FEASIBLE_ALT)) -> Check:
    worst = -math.inf
    for eta in etas:
        for init in inits:
            p, cfg, tr = lyapunov_run(T, eta, init=init)
            worst = max(worst, momentum_tracking_excess(p, cfg, tr, eta))
    return Check(12, "momentum-tracking bound", worst <= 1e-8, {"max(lhs - rhs)": worst})


# -- rates ----------------------------------------------------------------------


def rate_sweep(Ts=(100, 1000, 10_000), c=RATE_C, init=FEASIBLE_START, beta1=0.9, beta2=0.99,
               problem=None, kmap=None):
    """min_{1<=t<=T} S(X_t) for each horizon, with eta = c / sqrt(T)."""
    lam, x0 = init
    p = problem if problem is not None else problems.toy_quadratic()
    X0 = problems.init_from_diag(x0, p.shape)
    out = []
    for T in Ts:
        cfg = LionKConfig(beta1, beta2, lam, InverseSqrt(c, T), kmap or make_map("nuclear"))
        tr = run(p, cfg, GradientOracle(), T, X0, record=False)
        out.append(min_score(p, tr.states, lam))
    return out


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@_timed
def check_rate(Ts=(100, 1000, 10_000)) -> Check:
    ms = rate_sweep(Ts)
    slope = loglog_slope(Ts, ms)
    decreasing = all(a > b for a, b in zip(ms, ms[1:]))
    return Check(5, "deterministic rate", decreasing and slope <= -0.4,
                 {"min_S": ms, "slope": slope})


def replica_scores(problem, config: LionKConfig, X0, T, noise_level, n_batch=1, replicas=30,
                   base_seed=0, mode="stochastic"):
    """Per-replica S trajectories (rows) for t = 1..T.

    Replica ``r`` draws its noise from ``SeedSequence([base_seed, r])``.
    """
    rows = []
    for r in range(replicas):
        oracle = GradientOracle(mode, noise_level * math.sqrt(n_batch), n_batch,
                                np.random.SeedSequence([base_seed, r]))
        tr = run(problem, config, oracle, T, X0, record=False)
        rows.append([diag.kkt_score(problem, s.X, config.lam) for s in tr.states[1:]])
    return np.array(rows)


@_timed
def check_noise_floor(levels=(0.1, 0.01, 0.001), replicas=30, T=NOISE_T, c=NOISE_C, seed=0) -> Check:
    lam, x0 = FEASIBLE_START
    p = problems.toy_quadratic()
    X0 = problems.init_from_diag(x0)
    cfg = LionKConfig(0.9, 0.99, lam, InverseSqrt(c, T), make_map("nuclear"))
    means = [float(replica_scores(p, cfg, X0, T, lv, replicas=replicas, base_seed=seed)
                   .min(axis=1).mean()) for lv in levels]
    det = min_score(p, run(p, cfg, GradientOracle(), T, X0, record=False).states, lam)
    zero = float(replica_scores(p, cfg, X0, T, 0.0, replicas=replicas, base_seed=seed)
                 .min(axis=1).mean())
    order = np.argsort(levels)[::-1]
    ordered = [means[i] for i in order]
    monotone = all(a >= b for a, b in zip(ordered, ordered[1:]))
    ok = monotone and abs(zero - det) <= 1e-12
    return Check(6, "stochastic floor", ok,
                 {"mean_min_S": means, "sigma0_minus_det": zero - det})


# -- KKT endpoint ---------------------------------------------------------------


def kkt_endpoint(T=100_000, eta0=0.01, tau=1000.0, beta1=0.9, beta2=0.99, init=INFEASIBLE_START):
    lam, x0 = init
    p = problems.toy_quadratic()
    cfg = LionKConfig(beta1, beta2, lam, Decaying(eta0, tau), make_map("nuclear"))
    tr = run(p, cfg, GradientOracle(), T, problems.init_from_diag(x0), record=False,
             keep_states=False)
    return p, lam, tr.final.X


@_timed
def check_kkt_endpoint(T=100_000) -> Check:
    p, lam, X = kkt_endpoint(T)
    cert = diag.kkt_certificate(p, X, lam, 1e-3)
    ref = problems.solve_constrained_reference(p, lam)
    gap = abs(p.f(X) - p.f(ref))
    return Check(7, "KKT endpoint", cert.is_kkt and gap <= 1e-3,
                 {"S": cert.score, "feasibility_residual": cert.feasibility_residual,
                  "objective_gap": gap})


# -- identities -----------------------------------------------------------------


def random_step_inputs(rng, max_dim=6):
    n, m = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
    X = rng.standard_normal((n, m))
    M = rng.standard_normal((n, m))
    G = rng.standard_normal((n, m))
    beta1, beta2 = np.sort(rng.uniform(0.0, 1.0, size=2))
    lam = float(rng.uniform(0.0, 5.0))
    eta = float(rng.uniform(0.0, 1.0 / max(lam, 1.0)))
    return X, M, G, float(beta1), float(beta2), lam, eta


@_timed
def check_muon_identity(n=1000, seed=0) -> Check:
    rng = np.random.default_rng(seed)
    err_nuc = 0.0
    err_sum = 0.0
    for _ in range(n):
        X, M, G, b1, b2, lam, eta = random_step_inputs(rng)
        state = OptimizerState(X, M)
        out = step(state, G, LionKConfig(b1, b2, lam, Constant(eta), make_map("nuclear")))
        Mt = b1 * M - (1 - b1) * G
        X_lit = (X + eta * matcore.msgn_exact(Mt)) / (1 + eta * lam)
        err_nuc = max(err_nuc, float(np.abs(out.X - X_lit).max()))
        alt = step(state, G, LionKConfig(b1, b2, lam, Constant(eta),
                                         make_map("spectral_sum", ["abs"])))
        err_sum = max(err_sum, float(np.abs(out.X - alt.X).max()))
    return Check(8, "Muon = Lion-K(nuclear)", err_nuc <= 1e-12 and err_sum <= 1e-10,
                 {"max_err_nuclear": err_nuc, "max_err_spectral_sum": err_sum})


def probe_maps(seed=0):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((3, 3))
    return {
        "nuclear": make_map("nuclear"),
        "entrywise_l1": make_map("entrywise_l1"),
        "squared_frobenius": make_map("squared_frobenius"),
        "spectral_sum(abs)": make_map("spectral_sum", ["abs"]),
        "spectral_sum(huber)": make_map("spectral_sum", ["huber", 0.5]),
        "soft_threshold_spectral": make_map("soft_threshold_spectral", [0.5]),
        "schatten(2)": make_map("schatten", [2]),
        "schatten(inf)": make_map("schatten", ["inf"]),
        "quadratic_form": make_map("quadratic_form", P=P @ P.T + np.eye(3)),
    }


def _dual_point(K, rng, shape):
    """Random Y inside dom(K*)."""
    Y = rng.standard_normal(shape)
    if math.isinf(K.dual_bound):
        return Y
    return Y * (rng.uniform(0.0, 1.0) * K.dual_bound / K.dual_norm(Y))


def fenchel_violations(K, n=1000, seed=0, tol=1e-9) -> dict:
    """Worst violation of each Fenchel/monotonicity property over ``n`` probes."""
    rng = np.random.default_rng(seed)
    worst = {"subgradient": 0.0, "monotone": 0.0, "cross_monotone": 0.0, "fenchel_young": 0.0}
    if K.is_norm:
        worst.update(euler=0.0, conj_at_subgrad=0.0)
    square = K.kind == "quadratic_form"
    for _ in range(n):
        if square:
            shape = (3, int(rng.integers(1, 5)))
        else:
            shape = tuple(int(v) for v in rng.integers(1, 6, size=2))
        X, Y = rng.standard_normal(shape), rng.standard_normal(shape)
        if rng.uniform() < 0.2:
            # rank-deficient probe
            X = np.outer(X[:, 0], Y[0])
        gX, gY = K.subgrad(X), K.subgrad(Y)
        scale = 1.0 + abs(K.eval(X)) + abs(K.eval(Y))
        worst["subgradient"] = max(worst["subgradient"],
                                   (K.eval(X) + matcore.inner(gX, Y - X) - K.eval(Y)) / scale)
        worst["monotone"] = max(worst["monotone"], -matcore.inner(gX - gY, X - Y) / scale)
        Z = _dual_point(K, rng, shape)
        cross = matcore.inner(gX - Z, X - K.conjugate_subgrad(Z))
        worst["cross_monotone"] = max(worst["cross_monotone"], -cross / scale)
        worst["fenchel_young"] = max(worst["fenchel_young"], -fenchel_gap(K, X, Z) / scale)
        if K.is_norm:
            worst["euler"] = max(worst["euler"], abs(matcore.inner(gX, X) - K.eval(X)) / scale)
            c = K.conjugate(gX)
            worst["conj_at_subgrad"] = max(worst["conj_at_subgrad"],
                                           math.inf if is_infinite(c) else abs(c))
    return worst


@_timed
def check_fenchel(n=1000, seed=0, tol=1e-9) -> Check:
    measured = {}
    ok = True
    for name, K in probe_maps(seed).items():
        w = max(fenchel_violations(K, n, seed, tol).values())
        measured[name] = w
        ok = ok and w <= tol
    return Check(9, "Fenchel/monotonicity suite", ok, measured)


def random_conditioned(rng, cond_max=100.0, max_dim=8):
    n, m = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
    r = min(n, m)
    cond = rng.uniform(1.0, cond_max)
    s = np.geomspace(1.0, 1.0 / cond, r) * rng.uniform(0.1, 10.0)
    return problems.init_with_singular_values(s, (n, m), seed=int(rng.integers(1 << 31)))


@_timed
def check_msgn(n=200, seed=0, iters=30) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        X = random_conditioned(rng)
        err = np.linalg.norm(matcore.msgn_newton_schulz(X, iters) - matcore.msgn_exact(X))
        worst = max(worst, float(err))
    return Check(10, "matrix-sign equivalence", worst <= 1e-4, {"max_fro_error": worst})


# -- continuous time ------------------------------------------------------------


def ode_metrics(dt=1e-4, t_end=2.0, alpha=1.0, gamma=1.0, epsilon=0.5, lam=1.0,
                X0=None, M0=None, problem=None):
    p = problem if problem is not None else problems.toy_quadratic()
    X0 = problems.init_from_diag(INFEASIBLE_START[1]) if X0 is None else X0
    M0 = np.zeros_like(X0) if M0 is None else M0
    K = make_map("squared_frobenius")
    out = {}
    for h in (dt, dt / 2):
        tr = diag.integrate_ode(p, K, X0, M0, alpha, gamma, epsilon, lam, h, t_end)
        out[h] = {"increase": diag.max_increase_rate(tr.H, h),
                  "defect": diag.euler_defect(tr, h),
                  "max_rate": float(tr.H_rate.max()),
                  "min_H": float(tr.H.min())}
    return out


@_timed
def check_ode(dt=1e-4) -> Check:
    m = ode_metrics(dt)
    full, half = m[dt], m[dt / 2]
    ratio = math.inf if half["defect"] == 0 else full["defect"] / half["defect"]
    ok = full["increase"] <= 1e-5 and ratio >= 1.5 and full["min_H"] >= -1e-9
    return Check(11, "continuous-time Hamiltonian", ok,
                 {"max_increase_per_time": full["increase"], "euler_defect": full["defect"],
                  "halving_ratio": ratio, "max_exact_rate": full["max_rate"]})


CHECKS = (check_constraint_decay, check_trap, check_hamiltonian_descent, check_average_score,
          check_rate, check_noise_floor, check_kkt_endpoint, check_muon_identity, check_fenchel,
          check_msgn, check_ode, check_momentum_tracking)


def run_all(log=None) -> list:
    results = []
    for fn in CHECKS:
        c = fn()
        results.append(c)
        if log is not None:
            log(c.line())
    return results


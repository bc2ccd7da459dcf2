"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a ``[PASS]``/``[FAIL]`` line; the lines are printed in the
terminal summary (see conftest) and when this file is run as a script.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from lionk import diagnostics as dg
from lionk import harness, matcore, problems
from lionk.config import load_config
from lionk.convex_maps import fenchel_gap, is_infinite, make_map
from lionk.optimizer import (Constant, Decaying, LionKConfig, OptimizerState, implicit_rate,
                             run, step)
from lionk.verification import probe_maps, random_conditioned, random_step_inputs

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LINES = {}

UPPER = (1.25, (0.01, 0.75))
UPPER_ALT = (1.25, (0.7, 0.7))
LOWER = (4.0, (0.1, 0.95))


def verdict(n, name, passed, **measured):
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return str(v)

    body = ", ".join(f"{k}={fmt(v)}" for k, v in measured.items())
    LINES[n] = f"[{'PASS' if passed else 'FAIL'}] criterion {n:2d} {name}: {body}"
    print(LINES[n])
    return passed


# -- criteria 1 and 2: constraint decay and trap -------------------------------------------


def _constraint_runs():
    """100 seeded runs, 2x2..8x8, half starting outside the ball.

    ``eta`` is the explicit-form step; the implicit update uses the matching
    rate eta / (1 - eta lam).
    """
    rng = np.random.default_rng(2024)
    lams, etas = (0.5, 1.25, 4.0), (1e-3, 1e-2)
    for i in range(100):
        n, m = (int(v) for v in rng.integers(2, 9, size=2))
        lam, eta = lams[i % 3], etas[(i // 3) % 2]
        p = problems.random_quadratic(n, m, mu=0.1, seed=10_000 + i)
        sv = np.sort(rng.uniform(0, 2.5 / lam, size=min(n, m)))[::-1]
        X0 = problems.init_with_singular_values(sv, (n, m), seed=10_000 + i)
        cfg = LionKConfig(0.9, 0.99, lam, Constant(implicit_rate(eta, lam)))
        tr = run(p, cfg, None, 300, X0, record=False)
        yield lam, eta, np.array([matcore.norm(s.X, "spectral") for s in tr.states])


@pytest.fixture(scope="module")
def constraint_data():
    t0 = time.perf_counter()
    data = list(_constraint_runs())
    return data, time.perf_counter() - t0


def test_criterion_01_constraint_decay(constraint_data):
    data, seconds = constraint_data
    worst, violations = -math.inf, 0
    for lam, eta, norms in data:
        d = norms - 1 / lam
        excess = d[1:] - (1 - eta * lam) * d[:-1]
        worst = max(worst, float(excess.max()))
        violations += int(np.sum(excess > 1e-9))
    ok = violations == 0 and seconds < 10
    assert verdict(1, "constraint decay", ok, runs=len(data), max_excess=worst,
                   violations=violations, seconds=seconds)


def test_criterion_02_trap(constraint_data):
    data, _ = constraint_data
    violations, entered, started_out = 0, 0, 0
    for lam, _, norms in data:
        inside = lam * norms <= 1 + 1e-9
        started_out += int(not inside[0])
        if inside.any():
            entered += 1
            violations += int(np.sum(~inside[int(np.argmax(inside)):]))
    assert verdict(2, "trap property", violations == 0, runs_entering=entered,
                   started_outside=started_out, violations=violations)


# -- criteria 3, 4, 12: discrete Lyapunov on feasible starts ------------------------------------


def _feasible_run(eta, init):
    lam, x0 = init
    p = problems.toy_quadratic()
    cfg = LionKConfig(0.9, 0.99, lam, Constant(eta))
    return p, cfg, run(p, cfg, None, 10_000, problems.init_from_diag(x0))


@pytest.fixture(scope="module")
def feasible_runs():
    return {(eta, init): _feasible_run(eta, init)
            for eta in (1e-3, 1e-2) for init in (UPPER, UPPER_ALT)}


def test_criterion_03_hamiltonian_descent(feasible_runs):
    worst, min_H, min_gd = -math.inf, math.inf, math.inf
    for (eta, _), (p, _, tr) in feasible_runs.items():
        R = tr.records
        for t in range(len(R) - 1):
            worst = max(worst, dg.descent_residual(R[t], R[t + 1], tr.etas[t], p.L))
            min_gd = min(min_gd, R[t].Gamma, R[t].Delta)
        min_H = min(min_H, min(r.H for r in R))
    ok = worst <= 1e-8 and min_H >= 0 and min_gd >= -1e-9
    assert verdict(3, "per-step Hamiltonian descent", ok, max_residual=worst, min_H=min_H,
                   min_Gamma_Delta=min_gd)


def test_criterion_04_average_score(feasible_runs):
    worst = -math.inf
    for (eta, _), (p, cfg, tr) in feasible_runs.items():
        R = tr.records
        T = len(R) - 1
        avg = float(np.mean([r.S for r in R[1:]]))
        C = math.sqrt(min(p.shape))
        rhs = ((R[0].H - R[T].H) / (eta * T) + 2 * eta * C**2 * p.L
               + 2 * cfg.beta1 * C * tr.metadata["init_gap"] / ((1 - cfg.beta2) * T)
               + 4 * eta * C**2 * p.L * (1 + cfg.beta1 - cfg.beta2) / (1 - cfg.beta2))
        worst = max(worst, avg - rhs)
    assert verdict(4, "average-score bound", worst <= 1e-6, max_avg_minus_rhs=worst)


def test_criterion_12_momentum_tracking(feasible_runs):
    worst = -math.inf
    for (eta, _), (p, cfg, tr) in feasible_runs.items():
        C = math.sqrt(min(p.shape))
        b1, b2 = cfg.beta1, cfg.beta2
        gap0 = np.linalg.norm(p.grad(tr.states[0].X) + tr.states[0].M)
        floor = 2 * eta * C * p.L * (1 + b1 - b2) / (1 - b2)
        for t, s in enumerate(tr.states[1:], start=1):
            lhs = np.linalg.norm(p.grad(s.X) + s.last_Mtilde)
            worst = max(worst, float(lhs - (floor + b1 * b2 ** (t - 1) * gap0)))
    assert verdict(12, "momentum-tracking bound", worst <= 1e-8, max_lhs_minus_rhs=worst)


# -- criteria 5 and 6: rates via the harness commands -----------------------------------------


def test_criterion_05_deterministic_rate(tmp_path):
    cfg = load_config(CONFIGS / "rate_sweep.ini")
    assert cfg.T_list == (100, 1000, 10_000)
    t0 = time.perf_counter()
    rep = harness.cmd_rate_sweep(cfg, tmp_path)
    seconds = time.perf_counter() - t0
    ms = rep.summary["min_S"]
    etas = [row[1] for row in rep.data["rows"]]
    assert etas == pytest.approx([0.5 / math.sqrt(T) for T in (100, 1000, 10_000)], rel=1e-15)
    decreasing = all(a > b for a, b in zip(ms, ms[1:]))
    ok = decreasing and rep.summary["slope"] <= -0.4 and seconds < 60
    assert verdict(5, "deterministic rate", ok, min_S=ms, slope=rep.summary["slope"],
                   seconds=seconds)


def test_criterion_06_stochastic_floor(tmp_path):
    cfg = load_config(CONFIGS / "noise_sweep.ini")
    assert cfg.replicas == 30 and set(cfg.noise_levels) == {0.1, 0.01, 0.001}
    rep = harness.cmd_noise_sweep(cfg, tmp_path)
    rows = {r[0]: r for r in rep.data["rows"]}
    means = [rows[lv][4] for lv in (0.1, 0.01, 0.001)]
    monotone = means[0] >= means[1] >= means[2]
    zero_gap = abs(rows[0.0][4] - rep.data["deterministic"])
    ok = monotone and zero_gap <= 1e-12
    assert verdict(6, "stochastic floor", ok, mean_min_S=means, sigma0_minus_det=zero_gap)


# -- criterion 7: KKT endpoint ----------------------------------------------------------------


def test_criterion_07_kkt_endpoint():
    lam, x0 = LOWER
    p = problems.toy_quadratic()
    cfg = LionKConfig(0.9, 0.99, lam, Decaying(0.01, 1000.0))
    tr = run(p, cfg, None, 100_000, problems.init_from_diag(x0), record=False, keep_states=False)
    X = tr.final.X
    cert = dg.kkt_certificate(p, X, lam, 1e-3)
    gap = abs(p.f(X) - p.f(problems.solve_constrained_reference(p, lam)))
    ok = cert.is_kkt and gap <= 1e-3
    assert verdict(7, "KKT endpoint", ok, S=cert.score, S_tol=cert.score_tolerance,
                   feasibility_residual=cert.feasibility_residual, objective_gap=gap)


# -- criteria 8, 9, 10: identities ------------------------------------------------------------


def test_criterion_08_muon_identity():
    rng = np.random.default_rng(8)
    nuc, ssum = make_map("nuclear"), make_map("spectral_sum", ["abs"])
    err_nuc = err_sum = 0.0
    for _ in range(1000):
        X, M, G, b1, b2, lam, eta = random_step_inputs(rng)
        state = OptimizerState(X, M)
        out = step(state, G, LionKConfig(b1, b2, lam, Constant(eta), nuc))
        Mt = b1 * M - (1 - b1) * G
        U, s, Vt = np.linalg.svd(Mt, full_matrices=False)
        O = (U * (s > 1e-10 * s[0])) @ Vt if s[0] > 0 else np.zeros_like(Mt)
        lit = (X + eta * O) / (1 + eta * lam)
        err_nuc = max(err_nuc, float(np.abs(out.X - lit).max()))
        alt = step(state, G, LionKConfig(b1, b2, lam, Constant(eta), ssum))
        err_sum = max(err_sum, float(np.abs(out.X - alt.X).max()))
    ok = err_nuc <= 1e-12 and err_sum <= 1e-10
    assert verdict(8, "Muon = Lion-K(nuclear)", ok, max_err_literal_msgn=err_nuc,
                   max_err_spectral_sum=err_sum)


def _fenchel_suite(K, rng, n=1000):
    worst = {"subgradient": 0.0, "monotone": 0.0, "cross_monotone": 0.0}
    if K.is_norm:
        worst.update(euler=0.0, conj_at_grad=0.0)
    for _ in range(n):
        shape = (3, int(rng.integers(1, 5))) if K.kind == "quadratic_form" else \
            tuple(int(v) for v in rng.integers(1, 6, size=2))
        X, Y = rng.standard_normal(shape) * rng.uniform(0.1, 5, size=2)[:, None, None]
        gX, gY = K.subgrad(X), K.subgrad(Y)
        scale = 1 + abs(K.eval(X)) + abs(K.eval(Y))
        worst["subgradient"] = max(worst["subgradient"],
                                   (K.eval(X) + matcore.inner(gX, Y - X) - K.eval(Y)) / scale)
        worst["monotone"] = max(worst["monotone"], -matcore.inner(gX - gY, X - Y) / scale)
        Z = rng.standard_normal(shape)
        if not math.isinf(K.dual_bound):
            Z *= rng.uniform() * K.dual_bound / max(K.dual_norm(Z), 1e-300)
        cross = matcore.inner(gX - Z, X - K.conjugate_subgrad(Z))
        worst["cross_monotone"] = max(worst["cross_monotone"], -cross / scale)
        assert fenchel_gap(K, X, Z) >= -1e-9 * scale
        if K.is_norm:
            worst["euler"] = max(worst["euler"], abs(matcore.inner(gX, X) - K.eval(X)) / scale)
            c = K.conjugate(gX)
            worst["conj_at_grad"] = max(worst["conj_at_grad"], math.inf if is_infinite(c) else abs(c))
    return max(worst.values())


def test_criterion_09_fenchel_suite():
    rng = np.random.default_rng(9)
    worst = {name: _fenchel_suite(K, rng) for name, K in probe_maps(seed=9).items()}
    ok = max(worst.values()) <= 1e-9
    assert verdict(9, "Fenchel/monotonicity suite", ok, maps=len(worst),
                   max_violation=max(worst.values()))


def test_criterion_10_matrix_sign():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(200):
        X = random_conditioned(rng, cond_max=100.0)
        s = np.linalg.svd(X, compute_uv=False)
        assert s[0] / s[-1] <= 100 * (1 + 1e-9)
        err = np.linalg.norm(matcore.msgn_newton_schulz(X, 30) - matcore.msgn_exact(X))
        worst = max(worst, float(err))
    assert verdict(10, "matrix-sign equivalence", worst <= 1e-4, max_fro_error=worst)


# -- criterion 11: continuous time -------------------------------------------------------------


def test_criterion_11_ode(tmp_path):
    cfg = load_config(CONFIGS / "ode_check.ini")
    assert cfg.optimizer.kmap.kind == "squared_frobenius" and cfg.ode.dt == 1e-4
    rep = harness.cmd_ode_check(cfg, tmp_path)
    s = rep.summary
    ok = s["max_increase_per_time"] <= 1e-5 and s["halving_ratio"] >= 1.5
    assert verdict(11, "continuous-time Hamiltonian", ok,
                   max_increase_per_time=s["max_increase_per_time"],
                   euler_defect=s["euler_defect"], halving_ratio=s["halving_ratio"],
                   max_exact_rate=s["max_exact_rate"])


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

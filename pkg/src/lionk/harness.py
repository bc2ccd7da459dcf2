"""Experiment commands behind the CLI.

Every command takes a parsed :class:`ExperimentConfig` and an output
directory, writes CSV artifacts there, and returns a :class:`Report`. Output
files depend only on the config and seed, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import matcore, verification
from .config import ExperimentConfig
from .convex_maps import make_map
from .optimizer import GradientOracle, InverseSqrt, LionKConfig, explicit_rate, run

FEAS_TOL = 1e-9


@dataclass
class Report:
    command: str
    passed: bool = True
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def fail(self, name: str, detail: str = "") -> None:
        self.passed = False
        self.failures.append(f"{name}: {detail}" if detail else name)

    def render(self) -> str:
        lines = [f"command = {self.command}", f"status = {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.summary.items()]
        lines += [f"failed = {f}" for f in self.failures]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(v) for v in row] for row in rows)
    return path


def _finish(report: Report, out: Path) -> Report:
    report.files.append(out / "summary.txt")
    (out / "summary.txt").write_text(report.render())
    return report


def make_oracle(cfg: ExperimentConfig, sigma=None, n_batch=None, seed=None, mode=None):
    o = cfg.oracle
    return GradientOracle(mode or o.mode, o.sigma if sigma is None else sigma,
                          o.n_batch if n_batch is None else n_batch,
                          o.seed if seed is None else seed)


# -- single run ---------------------------------------------------------------


def first_entry(values, tol=FEAS_TOL):
    """First index with value <= tol, or None."""
    for i, v in enumerate(values):
        if v <= tol:
            return i
    return None


def cmd_run(cfg: ExperimentConfig, out: Path) -> Report:
    rep = Report("run")
    opt, p = cfg.optimizer, cfg.problem
    tr = run(p, opt, make_oracle(cfg), cfg.T, cfg.X0, cfg.M0)
    R = tr.records
    steps_csv = out / "steps.csv"
    diag.write_records_csv(steps_csv, R[:-1])
    sv_rows = [[s.t, *matcore.singular_values(s.X)] for s in tr.states]
    r = min(p.shape)
    rep.files += [steps_csv, _write_csv(out / "singular_values.csv",
                                        ["t"] + [f"sigma_{i + 1}" for i in range(r)], sv_rows)]
    rep.data.update(records=R, singular_values=np.array(sv_rows, dtype=float), lam=opt.lam,
                    F_star=p.F_star)

    for rec in R:
        for name in diag.validate_record(rec):
            rep.fail(name, f"t={rec.t}")
    rep.summary["T"] = cfg.T
    rep.summary["final_F"] = R[-1].F
    rep.summary["final_S"] = R[-1].S
    rep.summary["min_S"] = min((rec.S for rec in R[1:]), default=math.nan)
    rep.summary["init_gap"] = tr.metadata["init_gap"]

    if opt.lam > 0:
        entry = first_entry([rec.V_B for rec in R])
        rep.summary["steps_to_feasibility"] = "never" if entry is None else entry
        if entry is not None:
            radius = opt.kmap.dual_bound / opt.lam
            worst = max(float(row[1]) for row in sv_rows[entry:])
            rep.summary["max_sigma_after_entry"] = worst
            if worst > radius + 1e-6:
                rep.fail("singular_values_trapped", f"{worst!r} > {radius!r}")
    if opt.supports_convergence_diagnostics and cfg.oracle.mode == "deterministic" and cfg.T:
        res = [diag.descent_residual(R[t], R[t + 1], tr.etas[t], p.L) for t in range(cfg.T)]
        finite = [v for v in res if not diag.is_infinite(v) and not math.isnan(v)]
        rep.summary["max_descent_residual"] = max(finite, default=math.nan)
        if finite and max(finite) > 1e-8:
            rep.fail("descent_residual", repr(max(finite)))
    return _finish(rep, out)


# -- sweeps -------------------------------------------------------------------


def _horizon_config(opt: LionKConfig, T: int) -> LionKConfig:
    sched = opt.schedule
    if isinstance(sched, InverseSqrt):
        return replace(opt, schedule=InverseSqrt(sched.c, T))
    return opt


def cmd_rate_sweep(cfg: ExperimentConfig, out: Path) -> Report:
    rep = Report("rate-sweep")
    p, Ts = cfg.problem, sorted(cfg.T_list)
    rows = []
    for T in Ts:
        opt = _horizon_config(cfg.optimizer, T)
        tr = run(p, opt, GradientOracle(), T, cfg.X0, cfg.M0, record=False)
        rows.append((T, opt.schedule(0), verification.min_score(p, tr.states, opt.lam)))
    ms = [r[2] for r in rows]
    slope = verification.loglog_slope(Ts, ms)
    rep.files.append(_write_csv(out / "rate_sweep.csv", ["T", "eta", "min_S"], rows))
    rep.summary.update(T_list=Ts, min_S=ms, slope=slope, max_slope=cfg.max_slope)
    rep.data.update(rows=rows)
    if not all(a > b for a, b in zip(ms, ms[1:])):
        rep.fail("min_S_strictly_decreasing")
    if not slope <= cfg.max_slope:
        rep.fail("loglog_slope", f"{slope!r} > {cfg.max_slope!r}")
    return _finish(rep, out)


def _replica(args):
    p, opt, X0, M0, T, sigma, n_batch, base_seed, r = args
    oracle = GradientOracle("stochastic", sigma, n_batch, np.random.SeedSequence([base_seed, r]))
    tr = run(p, opt, oracle, T, X0, M0, record=False)
    return r, [diag.kkt_score(p, s.X, opt.lam) for s in tr.states[1:]]


def replica_scores(cfg: ExperimentConfig, sigma: float, n_batch: int, workers: int = 1):
    """S trajectories for every replica, ordered by replica index."""
    opt = _horizon_config(cfg.optimizer, cfg.T)
    jobs = [(cfg.problem, opt, cfg.X0, cfg.M0, cfg.T, sigma, n_batch, cfg.oracle.seed, r)
            for r in range(cfg.replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replica, jobs))
    else:
        results = [_replica(j) for j in jobs]
    results.sort(key=lambda item: item[0])
    return np.array([s for _, s in results])


def cmd_noise_sweep(cfg: ExperimentConfig, out: Path) -> Report:
    rep = Report("noise-sweep")
    if cfg.T < 1:
        rep.fail("T", "noise-sweep needs T >= 1")
        return _finish(rep, out)
    nb = cfg.oracle.n_batch
    opt = _horizon_config(cfg.optimizer, cfg.T)
    det_tr = run(cfg.problem, opt, GradientOracle(), cfg.T, cfg.X0, cfg.M0, record=False)
    det = verification.min_score(cfg.problem, det_tr.states, opt.lam)
    rows = []
    levels = sorted(set(cfg.noise_levels) | {0.0}, reverse=True)
    for lv in levels:
        S = replica_scores(cfg, lv * math.sqrt(nb), nb, cfg.workers)
        mins = S.min(axis=1)
        se = float(mins.std(ddof=1) / math.sqrt(len(mins))) if len(mins) > 1 else math.nan
        rows.append((lv, lv * math.sqrt(nb), nb, cfg.replicas, float(mins.mean()), se,
                     float(S.mean(axis=0).min())))
    header = ["noise_level", "sigma", "n_batch", "replicas", "mean_min_S", "stderr_min_S",
              "min_mean_S"]
    rep.files.append(_write_csv(out / "noise_sweep.csv", header, rows))
    rep.data.update(rows=rows, deterministic=det)
    means = [r[4] for r in rows if r[0] in cfg.noise_levels]
    zero = next(r[4] for r in rows if r[0] == 0.0)
    rep.summary.update(noise_levels=[r[0] for r in rows], mean_min_S=[r[4] for r in rows],
                       deterministic_min_S=det, sigma0_minus_deterministic=zero - det)
    if not all(a >= b for a, b in zip(means, means[1:])):
        rep.fail("mean_min_S_monotone")
    if abs(zero - det) > 1e-12:
        rep.fail("sigma0_matches_deterministic", repr(zero - det))
    return _finish(rep, out)


# -- ODE ----------------------------------------------------------------------


def cmd_ode_check(cfg: ExperimentConfig, out: Path) -> Report:
    rep = Report("ode-check")
    o, opt = cfg.ode, cfg.optimizer
    traces = {}
    for h in (o.dt, o.dt / 2):
        traces[h] = diag.integrate_ode(cfg.problem, opt.kmap, cfg.X0, cfg.M0, o.alpha, o.gamma,
                                       o.epsilon, opt.lam, h, o.t_end)
    tr = traces[o.dt]
    inc = diag.max_increase_rate(tr.H, o.dt)
    d_full = diag.euler_defect(tr, o.dt)
    d_half = diag.euler_defect(traces[o.dt / 2], o.dt / 2)
    ratio = math.inf if d_half == 0 else d_full / d_half
    stride = max(1, len(tr.H) // 2000)
    rows = [(float(tr.times[i]), float(tr.H[i]), float(tr.H_rate[i]))
            for i in range(0, len(tr.H), stride)]
    rep.files.append(_write_csv(out / "ode.csv", ["time", "H", "H_rate"], rows))
    rep.data.update(rows=rows)
    rep.summary.update(dt=o.dt, t_end=o.t_end, max_increase_per_time=inc,
                       euler_defect=d_full, euler_defect_half_dt=d_half, halving_ratio=ratio,
                       max_exact_rate=float(tr.H_rate.max()), min_H=float(tr.H.min()))
    if inc > 1e-5:
        rep.fail("H_increase_per_time", repr(inc))
    if ratio < 1.5:
        rep.fail("defect_halving_ratio", repr(ratio))
    if tr.H.min() < -1e-9:
        rep.fail("H_nonnegative", repr(float(tr.H.min())))
    return _finish(rep, out)


# -- constraint ---------------------------------------------------------------


def cmd_constraint_check(cfg: ExperimentConfig, out: Path) -> Report:
    """Constraint decay with the explicit-form step of every transition.

    The implicit step ``eta`` moves X like an explicit step
    ``eta / (1 + eta lam)``, and that is the rate the decay bound uses.
    """
    rep = Report("constraint-check")
    opt = cfg.optimizer
    lam, b, K = opt.lam, opt.kmap.dual_bound, opt.kmap
    tr = run(cfg.problem, opt, make_oracle(cfg), cfg.T, cfg.X0, cfg.M0, record=False)
    norms = [K.dual_norm(s.X) for s in tr.states]
    vb = [max(v - b / lam, 0.0) for v in norms]
    product = 1.0
    rows = [(0, norms[0], vb[0], vb[0])]
    worst = -math.inf
    for t, eta in enumerate(tr.etas):
        rate = 1.0 - explicit_rate(eta, lam) * lam
        worst = max(worst, (norms[t + 1] - b / lam) - rate * (norms[t] - b / lam))
        product *= rate
        rows.append((t + 1, norms[t + 1], vb[t + 1], product * vb[0]))
    rep.files.append(_write_csv(out / "constraint.csv", ["t", "norm", "V_B", "product_bound"],
                                rows))
    rep.data.update(rows=rows, lam=lam, radius=b / lam)
    entry = first_entry(vb)
    rep.summary.update(T=cfg.T, radius=b / lam, initial_V_B=vb[0], final_V_B=vb[-1],
                       first_entry="never" if entry is None else entry,
                       max_decay_excess=worst if tr.etas else 0.0)
    if tr.etas and worst > FEAS_TOL:
        rep.fail("per_step_decay", repr(worst))
    if entry is not None and any(v > FEAS_TOL for v in vb[entry:]):
        rep.fail("trap")
    if any(row[2] > row[3] + FEAS_TOL for row in rows):
        rep.fail("product_bound")
    return _finish(rep, out)


# -- extras -------------------------------------------------------------------

KAPPA_MAPS = (
    ("nuclear", ()),
    ("soft_threshold_spectral", ("0.5",)),
    ("schatten", ("1",)),
    ("schatten", ("2",)),
    ("schatten", ("inf",)),
)


def cmd_kappa_sweep(cfg: ExperimentConfig, out: Path) -> Report:
    """Run one config under several maps and compare the implicit constraints.

    The threshold and Schatten orders are illustrative defaults.
    """
    rep = Report("kappa-sweep")
    rows = []
    for kind, params in KAPPA_MAPS:
        K = make_map(kind, params)
        opt = replace(cfg.optimizer, kmap=K)
        lam = opt.lam
        tr = run(cfg.problem, opt, make_oracle(cfg), cfg.T, cfg.X0, cfg.M0, record=False)
        final = K.dual_norm(tr.final.X)
        radius = K.dual_bound / lam if lam > 0 else math.inf
        label = f"{kind}({','.join(params)})" if params else kind
        rows.append((label, "illustrative", lam, K.dual_bound, radius, final,
                     cfg.problem.f(tr.final.X)))
        if lam > 0 and final > radius + 1e-6:
            rep.fail("final_within_radius", label)
    header = ["map", "label", "lambda", "dual_bound", "radius", "final_dual_norm", "final_F"]
    rep.files.append(_write_csv(out / "kappa_sweep.csv", header, rows))
    rep.data.update(rows=rows)
    rep.summary.update(maps=[r[0] for r in rows], final_dual_norm=[r[5] for r in rows],
                       final_F=[r[6] for r in rows])
    return _finish(rep, out)


def cmd_verify_all(out: Path, log=None) -> Report:
    rep = Report("verify-all")
    results = verification.run_all(log)
    rows = [(c.criterion, c.name, "PASS" if c.passed else "FAIL", f"{c.seconds:.2f}",
             "; ".join(f"{k}={verification._short(v)}" for k, v in c.measured.items()))
            for c in results]
    rep.files.append(_write_csv(out / "verify_all.csv",
                                ["criterion", "name", "status", "seconds", "measured"], rows))
    for c in results:
        rep.summary[f"criterion_{c.criterion}"] = "PASS" if c.passed else "FAIL"
        if not c.passed:
            rep.fail(c.name)
    return _finish(rep, out)


COMMANDS = {
    "run": cmd_run,
    "rate-sweep": cmd_rate_sweep,
    "noise-sweep": cmd_noise_sweep,
    "ode-check": cmd_ode_check,
    "constraint-check": cmd_constraint_check,
    "kappa-sweep": cmd_kappa_sweep,
}

MODE_COMMAND = {
    "single_run": "run",
    "rate_sweep": "rate-sweep",
    "noise_sweep": "noise-sweep",
    "ode_check": "ode-check",
    "constraint_check": "constraint-check",
}

"""Optional PNG figures written next to a command's CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _finite(values):
    return np.array([np.nan if not isinstance(v, float) else v for v in values], dtype=float)


def plot_run(report, out: Path) -> list:
    R = report.data["records"]
    sv = report.data["singular_values"]
    lam = report.data["lam"]
    t = np.array([r.t for r in R])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
        axes[0, 0].plot(sv[:, 0], sv[:, 1:])
        if lam > 0:
            axes[0, 0].axhline(1.0 / lam, color="k", ls="--", lw=0.8, label="1/lambda")
            axes[0, 0].legend()
        axes[0, 0].set_ylabel("singular values of X")
        axes[0, 1].semilogy(t, [r.F - report.data["F_star"] + 1e-16 for r in R])
        axes[0, 1].set_ylabel("F - F*")
        axes[1, 0].semilogy(t, np.abs([r.S for r in R]) + 1e-16)
        axes[1, 0].set_ylabel("|S|")
        H = _finite([r.H for r in R])
        axes[1, 1].semilogy(t, H + 1e-16, label="H")
        axes[1, 1].semilogy(t, np.array([r.V_B for r in R]) + 1e-16, label="V_B")
        axes[1, 1].legend()
        for ax in axes[1]:
            ax.set_xlabel("step")
        return [_save(fig, out / "run.png")]


def plot_rate_sweep(report, out: Path) -> list:
    rows = report.data["rows"]
    T = np.array([r[0] for r in rows], dtype=float)
    ms = np.array([r[2] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(T, ms, "o-", label=f"measured (slope {report.summary['slope']:.2f})")
        ax.loglog(T, ms[0] * np.sqrt(T[0] / T), "k--", lw=0.8, label="T^-1/2")
        ax.set_xlabel("T")
        ax.set_ylabel("min S")
        ax.legend()
        return [_save(fig, out / "rate_sweep.png")]


def plot_noise_sweep(report, out: Path) -> list:
    rows = [r for r in report.data["rows"] if r[0] > 0]
    lv = np.array([r[0] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(lv, [r[4] for r in rows], yerr=[2 * r[5] for r in rows], fmt="o-",
                    capsize=3, label="mean min S")
        ax.plot(lv, [r[6] for r in rows], "s--", label="min mean S")
        ax.axhline(report.data["deterministic"], color="k", lw=0.8, label="deterministic")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("sigma / sqrt(n_batch)")
        ax.legend()
        return [_save(fig, out / "noise_sweep.png")]


def plot_ode(report, out: Path) -> list:
    rows = np.array(report.data["rows"])
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
        a.semilogy(rows[:, 0], rows[:, 1])
        a.set_ylabel("H")
        b.plot(rows[:, 0], rows[:, 2])
        b.set_ylabel("dH/dt")
        for ax in (a, b):
            ax.set_xlabel("time")
        return [_save(fig, out / "ode.png")]


def plot_constraint(report, out: Path) -> list:
    rows = np.array(report.data["rows"], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rows[:, 0], rows[:, 2], label="V_B")
        ax.plot(rows[:, 0], rows[:, 3], "--", label="product bound")
        ax.set_xlabel("step")
        ax.legend()
        return [_save(fig, out / "constraint.png")]


def plot_kappa_sweep(report, out: Path) -> list:
    rows = report.data["rows"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(rows))
        ax.bar(x - 0.2, [r[5] for r in rows], 0.4, label="final dual norm")
        ax.bar(x + 0.2, [r[4] for r in rows], 0.4, label="radius b/lambda")
        ax.set_xticks(x, [r[0] for r in rows], rotation=20)
        ax.set_title("illustrative map settings")
        ax.legend()
        return [_save(fig, out / "kappa_sweep.png")]


PLOTTERS = {
    "run": plot_run,
    "rate-sweep": plot_rate_sweep,
    "noise-sweep": plot_noise_sweep,
    "ode-check": plot_ode,
    "constraint-check": plot_constraint,
    "kappa-sweep": plot_kappa_sweep,
}


def render(report, out: Path) -> list:
    fn = PLOTTERS.get(report.command)
    return fn(report, Path(out)) if fn else []

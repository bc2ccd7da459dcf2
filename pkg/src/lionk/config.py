"""Experiment configuration: an INI file with sections problem, optimizer, map, oracle, run.

Example::

    [problem]
    kind = toy_quadratic
    seed = 0

    [optimizer]
    beta1 = 0.9
    beta2 = 0.99
    lambda = 1.25
    schedule = constant
    eta = 0.001

    [map]
    kind = nuclear

    [oracle]
    mode = deterministic

    [run]
    mode = single_run
    T = 1000
    X0 = diag:0.01,0.75

Matrix-valued keys (``X0``, ``M0``, ``A``, ``B``, ``P``) accept ``diag:v1,v2``,
``sv:s1,s2`` (random factors with the given singular values), ``zeros``,
an inline matrix ``1,0;0,1``, or a path to a ``.csv`` or ``.bin`` file,
resolved relative to the config file. ``[convex_map]`` is accepted as another
name for ``[map]``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import matcore, problems
from .convex_maps import ConvexMap, make_map
from .errors import ConfigError, LionKError
from .optimizer import Constant, Decaying, InverseSqrt, LionKConfig

MAP_ALIAS = "convex_map"

MODES = ("single_run", "rate_sweep", "noise_sweep", "ode_check", "constraint_check")

KNOWN_KEYS = {
    "problem": {"kind", "seed", "n", "m", "mu", "cond", "target_norm", "a", "b"},
    "optimizer": {"beta1", "beta2", "lambda", "schedule", "eta", "c", "horizon", "tau"},
    "map": {"kind", "params", "p"},
    "oracle": {"mode", "sigma", "n_batch", "seed"},
    "run": {"mode", "t", "t_list", "noise_levels", "replicas", "workers", "x0", "m0", "out",
            "alpha", "gamma", "epsilon", "dt", "t_end", "max_slope", "kkt_tol"},
}


@dataclass(frozen=True)
class OracleSpec:
    mode: str = "deterministic"
    sigma: float = 0.0
    n_batch: int = 1
    seed: int = 0


@dataclass(frozen=True)
class OdeSpec:
    alpha: float = 1.0
    gamma: float = 1.0
    epsilon: float = 0.5
    dt: float = 1e-4
    t_end: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    problem: problems.MatrixQuadratic
    optimizer: LionKConfig
    oracle: OracleSpec
    X0: np.ndarray
    M0: Optional[np.ndarray] = None
    T: int = 1000
    T_list: tuple = (100, 1000, 10000)
    noise_levels: tuple = (0.1, 0.01, 0.001)
    replicas: int = 30
    workers: int = 1
    out: Optional[Path] = None
    ode: OdeSpec = field(default_factory=OdeSpec)
    max_slope: float = -0.4
    kkt_tol: float = 1e-3
    path: Optional[Path] = None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, oracle=replace(self.oracle, seed=seed))


class _Source:
    """configparser wrapper that remembers where each key was written."""

    _section = re.compile(r"^\s*\[([^\]]+)\]")
    _key = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")

    def __init__(self, text: str, path):
        self.path = path
        self.lines = {}
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("expected a [section] header", path, exc.lineno) from None
        except configparser.ParsingError as exc:
            errors = getattr(exc, "errors", None)
            raise ConfigError("malformed line", path, errors[0][0] if errors else None) from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", path,
                              exc.lineno) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
        if self.cp.has_section(MAP_ALIAS):
            if self.cp.has_section("map"):
                raise ConfigError(f"[map] and [{MAP_ALIAS}] are the same section", path)
            self.cp["map"] = dict(self.cp[MAP_ALIAS])
            self.cp.remove_section(MAP_ALIAS)
        section = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = self._section.match(line)
            if m:
                section = m.group(1).strip()
                section = "map" if section == MAP_ALIAS else section
                self.lines[(section, None)] = lineno
                continue
            m = self._key.match(line)
            if m and section is not None:
                self.lines[(section, m.group(1).strip().lower())] = lineno
        for sec in self.cp.sections():
            if sec not in KNOWN_KEYS:
                self.fail(f"unknown section [{sec}]", sec)
            for key in self.cp[sec]:
                if key not in KNOWN_KEYS[sec]:
                    self.fail(f"unknown key {key!r} in [{sec}]", sec, key)

    def line(self, section, key=None):
        return self.lines.get((section, key), self.lines.get((section, None)))

    def fail(self, msg, section, key=None):
        raise ConfigError(msg, self.path, self.line(section, key))

    def raw(self, section, key):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        return None

    def get(self, section, key, conv=str, default=None, required=False):
        raw = self.raw(section, key)
        if raw is None or raw == "":
            if required:
                self.fail(f"missing required key {key!r} in [{section}]", section)
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self.fail(f"bad value for {key!r}: {raw!r} ({exc})", section, key)

    def get_list(self, section, key, conv, default):
        raw = self.raw(section, key)
        if not raw:
            return default
        try:
            return tuple(conv(tok) for tok in raw.split(",") if tok.strip())
        except ValueError as exc:
            self.fail(f"bad list for {key!r}: {raw!r} ({exc})", section, key)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def parse_matrix(spec: str, base_dir: Path, shape=None, seed: int = 0) -> np.ndarray:
    spec = spec.strip()
    if spec == "zeros":
        if shape is None:
            raise ValueError("'zeros' needs a known shape")
        return np.zeros(shape)
    if spec.startswith("diag:"):
        return problems.init_from_diag([float(v) for v in spec[5:].split(",")], shape)
    if spec.startswith("sv:"):
        if shape is None:
            raise ValueError("'sv:' needs a known shape")
        return problems.init_with_singular_values([float(v) for v in spec[3:].split(",")],
                                                  shape, seed)
    if Path(spec).suffix.lower() in (".csv", ".bin", ".mat64"):
        path = Path(spec) if Path(spec).is_absolute() else base_dir / spec
        if not path.exists():
            raise FileNotFoundError(f"matrix file not found: {path}")
        return matcore.load_matrix(path)
    rows = [[float(v) for v in row.split(",")] for row in spec.split(";")]
    return matcore.as_matrix(rows)


def _schedule(src: _Source, T: int):
    kind = src.get("optimizer", "schedule", str, "constant")
    if kind == "constant":
        return Constant(src.get("optimizer", "eta", float, required=True))
    if kind == "inverse_sqrt":
        horizon = src.get("optimizer", "horizon", _int, T)
        return InverseSqrt(src.get("optimizer", "c", float, required=True), horizon)
    if kind == "decaying":
        return Decaying(src.get("optimizer", "eta", float, required=True),
                        src.get("optimizer", "tau", float, 1000.0))
    src.fail(f"unknown schedule {kind!r}; expected constant, inverse_sqrt or decaying",
             "optimizer", "schedule")


def _problem(src: _Source, base: Path) -> problems.MatrixQuadratic:
    kind = src.get("problem", "kind", str, "toy_quadratic")
    seed = src.get("problem", "seed", _int, 0)
    if kind == "toy_quadratic":
        return problems.toy_quadratic(seed)
    if kind == "random_quadratic":
        return problems.random_quadratic(
            src.get("problem", "n", _int, 2), src.get("problem", "m", _int, 2),
            mu=src.get("problem", "mu", float, 0.1), seed=seed,
            cond=src.get("problem", "cond", float, 10.0),
            target_norm=src.get("problem", "target_norm", float, None))
    if kind == "explicit":
        conv = lambda s: parse_matrix(s, base)  # noqa: E731
        A = src.get("problem", "a", conv, required=True)
        B = src.get("problem", "b", conv, required=True)
        return problems.MatrixQuadratic(A, B, src.get("problem", "mu", float, 0.0))
    src.fail(f"unknown problem kind {kind!r}", "problem", "kind")


def _map(src: _Source, base: Path) -> ConvexMap:
    kind = src.get("map", "kind", str, "nuclear")
    params = src.get("map", "params", lambda s: [t.strip() for t in s.split(",")], [])
    P = src.get("map", "p", lambda s: parse_matrix(s, base), None)
    return make_map(kind, params, P)


def parse_config(text: str, path=None, mode: Optional[str] = None) -> ExperimentConfig:
    """Parse config text; file references resolve relative to ``path``.

    ``mode`` overrides ``[run] mode`` so a subcommand can validate the file
    against its own requirements.
    """
    base = Path(path).parent if path is not None else Path.cwd()
    src = _Source(text, path if path is not None else "<config>")

    def guarded(section, key, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (LionKError, ValueError, TypeError, FileNotFoundError) as exc:
            src.fail(str(exc), section, key)

    mode = mode or src.get("run", "mode", str, "single_run")
    if mode not in MODES:
        src.fail(f"unknown mode {mode!r}; expected one of {MODES}", "run", "mode")
    T = src.get("run", "t", _int, 1000)
    if T < 0:
        src.fail("T must be nonnegative", "run", "t")
    problem = guarded("problem", "kind", lambda: _problem(src, base))
    kmap = guarded("map", "kind", lambda: _map(src, base))
    schedule = guarded("optimizer", "schedule", lambda: _schedule(src, T))
    optimizer = guarded("optimizer", None, lambda: LionKConfig(
        beta1=src.get("optimizer", "beta1", float, 0.9),
        beta2=src.get("optimizer", "beta2", float, 0.99),
        lam=src.get("optimizer", "lambda", float, 0.0),
        schedule=schedule, kmap=kmap))
    oracle = OracleSpec(
        mode=src.get("oracle", "mode", str, "deterministic"),
        sigma=src.get("oracle", "sigma", float, 0.0),
        n_batch=src.get("oracle", "n_batch", _int, 1),
        seed=src.get("oracle", "seed", _int, 0))
    if oracle.mode not in ("deterministic", "stochastic"):
        src.fail(f"unknown oracle mode {oracle.mode!r}", "oracle", "mode")
    if oracle.sigma < 0 or oracle.n_batch < 1:
        src.fail("need sigma >= 0 and n_batch >= 1", "oracle")

    shape = problem.shape
    pseed = src.get("problem", "seed", _int, 0)
    X0 = guarded("run", "x0", lambda: parse_matrix(
        src.get("run", "x0", str, "zeros"), base, shape, pseed))
    M0 = guarded("run", "m0", lambda: parse_matrix(
        src.get("run", "m0", str, "zeros"), base, shape, pseed))
    for name, mat in (("x0", X0), ("m0", M0)):
        if mat.shape != shape:
            src.fail(f"{name} has shape {mat.shape}, problem expects {shape}", "run", name)

    out = src.get("run", "out", str, None)
    cfg = ExperimentConfig(
        mode=mode, problem=problem, optimizer=optimizer, oracle=oracle, X0=X0, M0=M0, T=T,
        T_list=src.get_list("run", "t_list", _int, (100, 1000, 10000)),
        noise_levels=src.get_list("run", "noise_levels", float, (0.1, 0.01, 0.001)),
        replicas=src.get("run", "replicas", _int, 30),
        workers=src.get("run", "workers", _int, 1),
        out=(base / out) if out else None,
        ode=OdeSpec(alpha=src.get("run", "alpha", float, 1.0),
                    gamma=src.get("run", "gamma", float, 1.0),
                    epsilon=src.get("run", "epsilon", float, 0.5),
                    dt=src.get("run", "dt", float, 1e-4),
                    t_end=src.get("run", "t_end", float, 2.0)),
        max_slope=src.get("run", "max_slope", float, -0.4),
        kkt_tol=src.get("run", "kkt_tol", float, 1e-3),
        path=Path(path) if path is not None else None,
    )
    _check_mode(cfg, src)
    return cfg


def _check_mode(cfg: ExperimentConfig, src: _Source) -> None:
    if cfg.mode == "rate_sweep":
        Ts = sorted(cfg.T_list)
        if len(Ts) < 3 or Ts[-1] < 100 * Ts[0]:
            src.fail("rate_sweep needs at least 3 T values spanning 2 decades", "run", "t_list")
    if cfg.mode == "noise_sweep":
        if cfg.replicas < 30:
            src.fail("noise_sweep needs replicas >= 30", "run", "replicas")
        if not cfg.noise_levels or any(v < 0 for v in cfg.noise_levels):
            src.fail("noise_levels must be nonnegative", "run", "noise_levels")
    if cfg.mode == "ode_check":
        o = cfg.ode
        if not cfg.optimizer.kmap.differentiable:
            src.fail(f"ode_check needs a differentiable map, got {cfg.optimizer.kmap.kind}",
                     "map", "kind")
        if min(o.alpha, o.gamma, o.epsilon, cfg.optimizer.lam) < 0 or cfg.optimizer.lam == 0:
            src.fail("ode_check needs alpha, gamma, epsilon >= 0 and lambda > 0", "run")
        if o.epsilon * o.gamma > 1:
            src.fail("ode_check needs epsilon * gamma <= 1", "run", "epsilon")
        if not 0 < o.dt <= 1e-4:
            src.fail("ode_check needs 0 < dt <= 1e-4", "run", "dt")
    if cfg.mode == "constraint_check":
        if cfg.optimizer.lam <= 0:
            src.fail("constraint_check needs lambda > 0", "optimizer", "lambda")
        if math.isinf(cfg.optimizer.kmap.dual_bound):
            src.fail(f"{cfg.optimizer.kmap.kind} has unbounded subgradients; no implicit "
                     "constraint to check", "map", "kind")
    first = cfg.optimizer.schedule
    eta0 = getattr(first, "eta", getattr(first, "eta0", None))
    if eta0 is None and isinstance(first, InverseSqrt):
        eta0 = first.c / math.sqrt(max(first.horizon, 1))
    if eta0 is not None and eta0 * cfg.optimizer.lam > 1:
        src.fail(f"step size {eta0!r} times lambda exceeds 1", "optimizer", "lambda")
    if cfg.workers < 1:
        src.fail("workers must be >= 1", "run", "workers")


def load_config(path, mode: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path, mode)

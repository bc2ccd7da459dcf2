"""Lion-K stepping engine.

One step, with momentum accumulating the *negative* gradient::

    M'  = beta2 M - (1 - beta2) G
    M~' = beta1 M - (1 - beta1) G
    X'  = X + eta (grad K(M~') - lam X')        (implicit in X')

The last line is affine in X', so it is solved exactly:
``X' = (X + eta grad K(M~')) / (1 + eta lam)``. With ``K`` the nuclear norm
this is Muon with Nesterov momentum and decoupled weight decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import diagnostics, matcore
from .convex_maps import ConvexMap, NuclearNorm
from .errors import DimensionError, DomainError, ScheduleExhaustedError


# -- step-size schedules --------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    eta: float

    def __call__(self, t: int) -> float:
        return self.eta


@dataclass(frozen=True)
class InverseSqrt:
    """eta_t = c / sqrt(horizon) for t < horizon; a constant step tuned to the horizon."""

    c: float
    horizon: int

    def __call__(self, t: int) -> float:
        if t >= self.horizon:
            raise ScheduleExhaustedError(f"step {t} is past the horizon {self.horizon}")
        return self.c / math.sqrt(self.horizon)


@dataclass(frozen=True)
class Decaying:
    """eta_t = eta0 / (1 + t / tau)."""

    eta0: float
    tau: float = 1000.0

    def __call__(self, t: int) -> float:
        return self.eta0 / (1.0 + t / self.tau)


# -- configuration and state ----------------------------------------------------


@dataclass(frozen=True)
class LionKConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    lam: float = 0.0
    schedule: object = field(default_factory=lambda: Constant(1e-3))
    kmap: ConvexMap = field(default_factory=NuclearNorm)

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def supports_convergence_diagnostics(self) -> bool:
        return 0.0 < self.beta1 < self.beta2 < 1.0 and self.lam > 0


@dataclass(frozen=True)
class OptimizerState:
    X: np.ndarray
    M: np.ndarray
    t: int = 0
    last_Mtilde: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.last_Mtilde is None:
            object.__setattr__(self, "last_Mtilde", np.zeros_like(self.X))
        if not (self.X.shape == self.M.shape == self.last_Mtilde.shape):
            raise DimensionError(
                f"X, M, M~ shapes differ: {self.X.shape}, {self.M.shape}, {self.last_Mtilde.shape}")


def init_state(X0, M0=None) -> OptimizerState:
    X0 = matcore.as_matrix(X0, "X0")
    M0 = np.zeros_like(X0) if M0 is None else matcore.as_matrix(M0, "M0")
    return OptimizerState(X0, M0)


def _momenta(state: OptimizerState, grad, config: LionKConfig):
    G = np.asarray(grad, dtype=np.float64)
    if G.shape != state.X.shape:
        raise DimensionError(f"gradient shape {G.shape} != parameter shape {state.X.shape}")
    M_next = config.beta2 * state.M - (1.0 - config.beta2) * G
    Mtilde = config.beta1 * state.M - (1.0 - config.beta1) * G
    return M_next, Mtilde


def _eta(state: OptimizerState, config: LionKConfig) -> float:
    eta = config.schedule(state.t)
    if eta < 0:
        raise DomainError(f"negative step size {eta} at t={state.t}")
    if eta * config.lam > 1.0:
        raise DomainError(f"eta * lambda = {eta * config.lam} > 1 at t={state.t}")
    return eta


def step(state: OptimizerState, grad, config: LionKConfig) -> OptimizerState:
    """One implicit Lion-K step, solved in closed form."""
    eta = _eta(state, config)
    M_next, Mtilde = _momenta(state, grad, config)
    X_next = (state.X + eta * config.kmap.subgrad(Mtilde)) / (1.0 + eta * config.lam)
    return OptimizerState(X_next, M_next, state.t + 1, Mtilde)


def step_explicit(state: OptimizerState, grad, config: LionKConfig) -> OptimizerState:
    """The same step written in explicit form with the reparameterized rate.

    ``X' = X + eta~ (grad K(M~') - lam X)`` where ``eta~ = eta / (1 + eta lam)``.
    Agrees with :func:`step` up to rounding.
    """
    eta = _eta(state, config)
    eta_r = explicit_rate(eta, config.lam)
    M_next, Mtilde = _momenta(state, grad, config)
    X_next = state.X + eta_r * (config.kmap.subgrad(Mtilde) - config.lam * state.X)
    return OptimizerState(X_next, M_next, state.t + 1, Mtilde)


def explicit_rate(eta: float, lam: float) -> float:
    """Step of the explicit form equivalent to an implicit step ``eta``."""
    return eta / (1.0 + eta * lam)


def implicit_rate(eta_explicit: float, lam: float) -> float:
    """Inverse of :func:`explicit_rate`; needs ``eta_explicit * lam < 1``."""
    if eta_explicit * lam >= 1.0:
        raise DomainError("explicit step must satisfy eta * lambda < 1")
    return eta_explicit / (1.0 - eta_explicit * lam)


# -- gradient sources -----------------------------------------------------------


@dataclass
class GradientOracle:
    """Deterministic or Gaussian-perturbed gradients.

    Stochastic samples are ``grad F(X) + N`` with i.i.d. centred Gaussian
    entries scaled so that ``E ||N||_F^2 = sigma^2 / n_batch``. The noise draw
    does not depend on ``sigma``, so oracles sharing a seed see the same
    standard-normal stream at every noise level.
    """

    mode: str = "deterministic"
    sigma: float = 0.0
    n_batch: int = 1
    seed: object = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if self.sigma < 0 or self.n_batch < 1:
            raise ValueError("need sigma >= 0 and n_batch >= 1")
        self.rng = np.random.default_rng(self.seed)

    @property
    def noise_level(self) -> float:
        """sigma / sqrt(n_batch), the gradient noise standard deviation."""
        return self.sigma / math.sqrt(self.n_batch)

    def sample(self, problem, X) -> np.ndarray:
        G = problem.grad(X)
        if self.mode == "deterministic":
            return G
        Z = self.rng.standard_normal(G.shape)
        return G + (self.noise_level / math.sqrt(G.size)) * Z


def sample_gradient(oracle: GradientOracle, problem, X) -> np.ndarray:
    return oracle.sample(problem, X)


# -- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    states: list
    records: list
    etas: list
    metadata: dict

    @property
    def final(self) -> OptimizerState:
        return self.states[-1]


def run(problem, config: LionKConfig, oracle: GradientOracle | None, T: int, X0, M0=None,
        record: bool = True, keep_states: bool = True) -> Trajectory:
    """Drive ``T`` steps and collect the states with per-state diagnostics.

    ``records[t]`` describes state ``t`` and, for ``t < T``, the transition
    to ``t + 1``. With ``record=False`` only states are kept; with
    ``keep_states=False`` only the initial and final states are. A ``None``
    oracle means exact gradients.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if oracle is None:
        oracle = GradientOracle()
    state = init_state(X0, M0)
    g0 = problem.grad(state.X)
    meta = {
        "T": T,
        "init_gap": float(np.linalg.norm(g0 + state.M)),
        "M0_fro": float(np.linalg.norm(state.M)),
        "map": repr(config.kmap),
        "oracle": {"mode": oracle.mode, "sigma": oracle.sigma, "n_batch": oracle.n_batch},
    }
    states = [state]
    etas = []
    records = []
    prev = state
    for _ in range(T):
        eta = config.schedule(prev.t)
        G = oracle.sample(problem, prev.X)
        nxt = step(prev, G, config)
        etas.append(eta)
        if record:
            records.append(diagnostics.make_record(problem, config, prev.t, prev, nxt, eta))
        if keep_states:
            states.append(nxt)
        prev = nxt
    if not keep_states and T > 0:
        states.append(prev)
    if record:
        last_eta = etas[-1] if etas else _initial_eta(config)
        records.append(diagnostics.make_record(problem, config, prev.t, prev, None, last_eta))
    return Trajectory(states, records, etas, meta)


def _initial_eta(config: LionKConfig) -> float:
    try:
        return config.schedule(0)
    except ScheduleExhaustedError:
        return float("nan")


def with_schedule(config: LionKConfig, schedule) -> LionKConfig:
    return replace(config, schedule=schedule)

"""One-step transition kernels for exact and subsampling Metropolis-Hastings.

Every kernel shares the same decision rule: draw a proposal ``ell`` and a
uniform ``u``, then accept iff

    Lambda* > psi = (1/m) * (log u + log p(theta) - log p(ell))

where Lambda* is the mean log-likelihood ratio over the (sub)sampled points
and ``m`` is the tail denominator (N for narrow tails, n for wide tails).
The proposal is symmetric, so its density cancels from psi.

Cost unit: one data point's log-likelihood ratio at a (theta, ell) pair.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import BudgetExceededError, ParameterError
from .model import (
    DataSet,
    GaussianConjugate,
    ModelSpec,
    closed_form_tempered,
    tempered_posterior,
)

ROBERTS_SCALE = 2.38


@dataclass(frozen=True)
class FullMH:
    proposal_scale: Optional[float] = None


@dataclass(frozen=True)
class WideMH:
    n: int
    proposal_scale: Optional[float] = None


@dataclass(frozen=True)
class SubsampleNarrow:
    n: int
    proposal_scale: Optional[float] = None


@dataclass(frozen=True)
class SubsampleWide:
    n: int
    A: int = 1
    proposal_scale: Optional[float] = None


@dataclass(frozen=True)
class Austerity:
    gamma: float = 2.0
    delta0: float = 0.01
    rho: float = 0.5
    proposal_scale: Optional[float] = None

    def delta(self, look: int) -> float:
        return self.delta0 * self.rho**look


@dataclass(frozen=True)
class InfiniteResample:
    n: int
    theta_star: float = 0.0
    proposal_scale: Optional[float] = None


KernelConfig = Union[FullMH, WideMH, SubsampleNarrow, SubsampleWide, Austerity, InfiniteResample]
MH_FAMILY = (FullMH, WideMH, SubsampleNarrow, SubsampleWide)


def validate(config: KernelConfig, N: Optional[int]) -> None:
    """Raise ParameterError if ``config`` is inconsistent with N data points."""
    if config.proposal_scale is not None and not config.proposal_scale > 0:
        raise ParameterError(f"proposal_scale must be positive, got {config.proposal_scale}")
    if isinstance(config, Austerity):
        if not config.gamma > 1:
            raise ParameterError(f"Austerity gamma must be > 1 (valid range (1, inf)), got {config.gamma}")
        if not 0 < config.delta0 < 1 or not 0 < config.rho < 1:
            raise ParameterError("Austerity delta0 and rho must lie in (0, 1)")
        return
    if isinstance(config, FullMH):
        return
    n = config.n
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if isinstance(config, InfiniteResample) or N is None:
        return
    if isinstance(config, SubsampleWide):
        if config.A < 1:
            raise ParameterError(f"A must be >= 1, got {config.A}")
        if config.A * n > N:
            raise ParameterError(f"A*n = {config.A * n} exceeds N = {N} (valid range 1 <= A*n <= N)")
    elif n > N:
        raise ParameterError(f"n = {n} exceeds N = {N} (valid range 1 <= n <= N)")


def tail_denominator(config: KernelConfig, N: int) -> int:
    if isinstance(config, (FullMH, SubsampleNarrow, Austerity)):
        return N
    return config.n


def subsample_size(config: KernelConfig, N: int) -> int:
    """Number of data points whose log-ratios enter Lambda* (fixed-size kernels)."""
    if isinstance(config, (FullMH, WideMH)):
        return N
    if isinstance(config, SubsampleNarrow):
        return config.n
    if isinstance(config, SubsampleWide):
        return config.A * config.n
    if isinstance(config, InfiniteResample):
        return config.n
    raise ParameterError("Austerity has an adaptive subsample size")


def step_cost(config: KernelConfig, N: int) -> Optional[int]:
    """Declared per-step cost; None for the adaptive Austerity kernel."""
    if isinstance(config, Austerity):
        return None
    return subsample_size(config, N)


def target_sd(config: KernelConfig, model: ModelSpec, data: Optional[DataSet]) -> float:
    """Standard deviation of (an approximation to) the kernel's target."""
    if isinstance(config, InfiniteResample):
        return 1.0 / math.sqrt(model.prior_sd**-2 + config.n)
    m = tail_denominator(config, data.N)
    if isinstance(model, GaussianConjugate):
        return math.sqrt(closed_form_tempered(model, data, m)[1])
    logdens = tempered_posterior(model, data, m)
    # locate the mode coarsely, then take moments on a fine window around it
    coarse = np.linspace(-20 * model.prior_sd, 20 * model.prior_sd, 4001)
    lc = logdens(coarse)
    w = np.exp(lc - lc.max())
    mu = np.sum(w * coarse) / w.sum()
    sd = math.sqrt(max(np.sum(w * (coarse - mu) ** 2) / w.sum(), 1e-300))
    fine = np.linspace(mu - 12 * sd, mu + 12 * sd, 20001)
    lf = logdens(fine)
    w = np.exp(lf - lf.max())
    mu = np.sum(w * fine) / w.sum()
    return math.sqrt(np.sum(w * (fine - mu) ** 2) / w.sum())


def proposal_scale(config: KernelConfig, model: ModelSpec, data: Optional[DataSet]) -> float:
    """Configured scale, else 2.38 times the target standard deviation."""
    if config.proposal_scale is not None:
        return float(config.proposal_scale)
    return ROBERTS_SCALE * target_sd(config, model, data)


def mean_log_ratio(model: ModelSpec, theta: float, ell: float, points: np.ndarray) -> float:
    return float(np.mean(model.log_lik(ell, points) - model.log_lik(theta, points)))


def psi(model: ModelSpec, theta: float, ell: float, u, m: int):
    """Acceptance threshold; ``u`` may be an array of uniforms."""
    val = (np.log(u) + model.log_prior(theta) - model.log_prior(ell)) / m
    return float(val) if np.ndim(val) == 0 else val


def decide(config: KernelConfig, model: ModelSpec, theta: float, ell: float, u: float,
           points: np.ndarray, N: Optional[int] = None) -> bool:
    """Acceptance decision given the proposal, the uniform and the (sub)sample used."""
    m = config.n if isinstance(config, InfiniteResample) else tail_denominator(config, N)
    return mean_log_ratio(model, theta, ell, points) > psi(model, theta, ell, u, m)


@dataclass
class ChainState:
    theta: float
    step_index: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ParameterError(f"chain state must be finite, got {self.theta}")


@dataclass
class CostLedger:
    per_step: list = field(default_factory=list)

    @property
    def total_lik_evals(self) -> int:
        return int(sum(self.per_step))

    def record(self, evals: int) -> None:
        self.per_step.append(int(evals))


@dataclass
class Trajectory:
    states: np.ndarray
    accepted: np.ndarray
    ledger: CostLedger
    seed: int
    truncated: bool = False

    @property
    def T(self) -> int:
        return len(self.states) - 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "theta", "accepted", "lik_evals"])
            w.writerow([0, repr(float(self.states[0])), "", 0])
            for t in range(1, len(self.states)):
                w.writerow([t, repr(float(self.states[t])), int(self.accepted[t - 1]),
                            self.ledger.per_step[t - 1]])


class _Stepper:
    """Precomputes per-chain constants so each step does only O(s) work."""

    def __init__(self, config: KernelConfig, model: ModelSpec, data: Optional[DataSet]):
        validate(config, None if data is None else data.N)
        if data is None and not isinstance(config, InfiniteResample):
            raise ParameterError(f"{type(config).__name__} needs a data set")
        self.config = config
        self.model = model
        self.data = data
        self.N = None if data is None else data.N
        self.scale = proposal_scale(config, model, data)
        if isinstance(config, InfiniteResample):
            self.m = config.n
            self.s = config.n
        elif not isinstance(config, Austerity):
            self.m = tail_denominator(config, self.N)
            self.s = subsample_size(config, self.N)
        else:
            self.m = self.N
            self.max_abs_x = data.max_abs

    def step(self, theta: float, rng: np.random.Generator):
        ell = theta + self.scale * rng.standard_normal()
        u = 1.0 - rng.random()  # in (0, 1]
        if isinstance(self.config, Austerity):
            acc, cost = self._austerity(theta, ell, u, rng)
        else:
            if isinstance(self.config, InfiniteResample):
                pts = self.model.sample_data(self.config.theta_star, self.s, rng)
            elif self.s >= self.N:
                pts = self.data.points
            else:
                pts = self.data.points[rng.choice(self.N, size=self.s, replace=False)]
            acc = mean_log_ratio(self.model, theta, ell, pts) > psi(self.model, theta, ell, u, self.m)
            cost = self.s
        return (ell if acc else theta), bool(acc), int(cost)

    def _austerity(self, theta, ell, u, rng):
        cfg, N = self.config, self.N
        target = psi(self.model, theta, ell, u, N)
        bound = float(self.model.lik_diff_bound(theta, ell, self.max_abs_x))
        order = rng.permutation(N)
        s, look, lam, b = 0, 0, 0.0, 1
        while True:
            new = self.data.points[order[s:b]]
            batch = float(np.sum(self.model.log_lik(ell, new) - self.model.log_lik(theta, new)))
            lam = (s * lam + batch) / b
            s = b
            f_star = (s - 1) / N
            c = 2.0 * bound * math.sqrt((1.0 - f_star) * math.log(2.0 / cfg.delta(look)) / (2.0 * s))
            look += 1
            b = min(N, math.ceil(cfg.gamma * s))
            if abs(lam - target) >= c or s >= N:
                break
        return lam > target, s


def mh_family_step(config, state: ChainState, model: ModelSpec, data: DataSet):
    """One step of the FullMH / WideMH / SubsampleNarrow / SubsampleWide kernels."""
    if not isinstance(config, MH_FAMILY):
        raise ParameterError(f"{type(config).__name__} is not an MH-family kernel")
    theta, _, cost = _Stepper(config, model, data).step(state.theta, state.rng)
    return ChainState(theta, state.step_index + 1, state.rng), cost


def austerity_step(config: Austerity, state: ChainState, model: ModelSpec, data: DataSet):
    """One adaptive-subsampling step; cost is the number of distinct points consumed."""
    theta, _, cost = _Stepper(config, model, data).step(state.theta, state.rng)
    return ChainState(theta, state.step_index + 1, state.rng), cost


def infinite_resample_step(config: InfiniteResample, state: ChainState, model: ModelSpec):
    """One step with a fresh sample of size n from p(. | theta_star)."""
    theta, _, cost = _Stepper(config, model, None).step(state.theta, state.rng)
    return ChainState(theta, state.step_index + 1, state.rng), cost


def run_chain(config: KernelConfig, T: int, theta0: float, seed: int, model: ModelSpec,
              data: Optional[DataSet] = None, max_lik_evals: Optional[int] = None,
              on_budget: str = "raise") -> Trajectory:
    """Iterate the configured kernel T times from theta0.

    With ``max_lik_evals`` set, a step that would push the ledger past the cap
    is discarded; ``on_budget="raise"`` then raises BudgetExceededError
    carrying the truncated trajectory, ``"truncate"`` returns it.
    """
    if T < 0:
        raise ParameterError(f"T must be >= 0, got {T}")
    if not math.isfinite(theta0):
        raise ParameterError("theta0 must be finite")
    stepper = _Stepper(config, model, data)
    rng = np.random.default_rng(seed)
    states = np.empty(T + 1)
    accepted = np.zeros(T, dtype=bool)
    states[0] = theta0
    ledger = CostLedger()
    spent = 0
    theta = float(theta0)
    for t in range(T):
        new, acc, cost = stepper.step(theta, rng)
        if max_lik_evals is not None and spent + cost > max_lik_evals:
            traj = Trajectory(states[:t + 1].copy(), accepted[:t].copy(), ledger, seed, truncated=True)
            if on_budget == "truncate":
                return traj
            raise BudgetExceededError(
                f"likelihood budget {max_lik_evals} exceeded after {t} steps", trajectory=traj)
        spent += cost
        ledger.record(cost)
        theta = new
        states[t + 1] = theta
        accepted[t] = acc
    return Trajectory(states, accepted, ledger, seed)


def mcmc_estimate(traj: Trajectory, f) -> float:
    """(1/(T+1)) sum_t f(X_t)."""
    if len(traj.states) == 0:
        raise ParameterError("empty trajectory")
    return float(np.mean(f(traj.states)))

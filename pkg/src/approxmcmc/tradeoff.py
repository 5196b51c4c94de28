"""Budgeted error of approximate MCMC: error bounds, tradeoff curve, fitting.

A sampler with per-step cost c and budget M runs T = floor(M / c) steps.  Its
mean squared error for f with values in [0, 1] splits into burn-in (e1),
stationary-start variance (e2) and stationary bias (e3).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import FitError, ParameterError
from .grid import (
    TransitionMatrix,
    discretize,
    grid_for,
    kernel_delta,
    mixing_time,
    stationary,
)
from .kernels import (
    Austerity,
    FullMH,
    KernelConfig,
    proposal_scale,
    run_chain,
    step_cost,
)
from .model import DataSet, ModelSpec, closed_form_posterior
from .seeds import child_seed


def _steps(c: int, M: int) -> int:
    T = M // c
    if T < 1:
        raise ParameterError(f"budget M={M} is below one step of cost {c}")
    return T


def burnin_bound(tau: int, c: int, M: int) -> float:
    """2 tau^2 floor(M/c)^-2."""
    return 2.0 * tau**2 / _steps(c, M) ** 2


def variance_bound(tau: int, var_f: float, c: int, M: int) -> float:
    """2 tau Var(f) floor(M/c)^-1."""
    return 2.0 * tau * var_f / _steps(c, M)


def bias_bound(delta: float, tau: int, tau_tilde: int) -> float:
    """(16/9) delta^2 min(tau, tau~)^2."""
    if not 0 <= delta < 1:
        raise ParameterError(f"delta must lie in [0, 1), got {delta}")
    return 16.0 / 9.0 * delta**2 * min(tau, tau_tilde) ** 2


@dataclass
class ErrorDecomposition:
    e1: Optional[float]
    e2: Optional[float]
    e3: Optional[float]
    total: float
    kind: Literal["Bound", "Empirical"]
    se: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def bound(cls, e1, e2, e3, **extra):
        return cls(e1, e2, e3, e1 + e2 + e3, "Bound", extra=extra)


def bound_decomposition(tau: int, tau_tilde: int, var_f: float, delta: float, c: int,
                        M: int) -> ErrorDecomposition:
    """Burn-in, variance and bias bounds for an approximate kernel with mixing time tau_tilde."""
    return ErrorDecomposition.bound(burnin_bound(tau_tilde, c, M),
                                    variance_bound(tau_tilde, var_f, c, M),
                                    bias_bound(delta, tau, tau_tilde))


# ---------------------------------------------------------------------------
# exact grid counterparts of the bounded quantities
# ---------------------------------------------------------------------------

def exact_burnin(P, T: int, pi=None) -> float:
    """sup_x E[(min(tau_c, T+1) / (T+1))^2] under the maximal coupling with a stationary copy.

    The maximal coupling has P(tau_c > t) = TV(P^t(x, .), pi), so
    E[min(tau_c, T+1)^2] = sum_{t<=T} (2t+1) d_x(t).
    """
    P = P.P if isinstance(P, TransitionMatrix) else np.asarray(P)
    pi = stationary(P) if pi is None else pi
    Q = np.eye(P.shape[0])
    acc = np.zeros(P.shape[0])
    for t in range(T + 1):
        acc += (2 * t + 1) * 0.5 * np.abs(Q - pi).sum(axis=1)
        Q = Q @ P
    return float(acc.max() / (T + 1) ** 2)


def exact_stationary_mse(P, fvals, T: int, pi=None) -> float:
    """Var of (1/(T+1)) sum_{t<=T} f(X_t) for a stationary start."""
    P = P.P if isinstance(P, TransitionMatrix) else np.asarray(P)
    pi = stationary(P) if pi is None else pi
    f = np.asarray(fvals, dtype=float)
    mean = pi @ f
    g = f - mean
    h = g.copy()
    total = (T + 1) * float(pi @ (g * g))
    for k in range(1, T + 1):
        h = P @ h
        total += 2 * (T + 1 - k) * float(pi @ (g * h))
    return total / (T + 1) ** 2


def variance_under(pi, fvals) -> float:
    f = np.asarray(fvals, dtype=float)
    m = pi @ f
    return float(pi @ (f - m) ** 2)


# ---------------------------------------------------------------------------
# tradeoff bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TradeoffConstants:
    C1: float  # C' : max mixing-time ratio
    C2: float  # C'': n Var bound
    C3: float  # C''': perturbation / bias prefactor
    c1: float
    c2: float
    tau: int
    C_lower: Optional[float] = None  # recorded, unused by the bound

    def __post_init__(self):
        for name in ("C1", "C2", "C3", "c2"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.c1 < 0 or self.tau < 1:
            raise ParameterError("c1 must be >= 0 and tau >= 1")

    @property
    def n0(self) -> int:
        """min{n : C3 n^-c2 <= 9 / (128 C1 tau)}."""
        thr = 9.0 / (128.0 * self.C1 * self.tau)
        n = max(1, math.ceil((self.C3 / thr) ** (1.0 / self.c2)))
        while n > 1 and self.C3 * (n - 1) ** -self.c2 <= thr:
            n -= 1
        while self.C3 * n**-self.c2 > thr:
            n += 1
        return n


@dataclass
class TradeoffRow:
    n: int
    cost: float
    e1: float
    e2: float
    e3: float
    total: float
    valid: bool
    note: str = ""


@dataclass
class TradeoffCurve:
    rows: list
    n_hat: int
    bound_at_n_hat: float
    bound_main: float
    consts: TradeoffConstants

    @property
    def argmin(self) -> Optional[int]:
        valid = [r for r in self.rows if r.valid]
        if not valid:
            return None
        best = min(r.total for r in valid)
        return min(r.n for r in valid if r.total == best)

    def pairs(self):
        return [(r.n, r.total) for r in self.rows]


def tradeoff_bound(consts: TradeoffConstants, M: int, n: int) -> TradeoffRow:
    """Four-term bound on the standardized error of the n-th approximate kernel."""
    k = consts
    cost = n ** (1 + k.c1)
    T = math.floor(M / cost)
    ct = k.C1 * k.tau
    if T < 1:
        return TradeoffRow(n, cost, math.inf, math.inf, math.inf, math.inf, False,
                           "budget below one step")
    e1 = 2 * ct**2 / T**2
    e2 = 2 * k.C1 * k.C2 * k.tau / n / T
    e3 = 16.0 / 9.0 * ct**2 * n ** (-2 * k.c2) + k.C3 * n ** (-k.c2)
    valid = n >= k.n0
    return TradeoffRow(n, cost, e1, e2, e3, e1 + e2 + e3, valid, "" if valid else "n < n0")


def tradeoff_curve(consts: TradeoffConstants, M: int, n_range: Sequence[int]) -> TradeoffCurve:
    rows = [tradeoff_bound(consts, M, int(n)) for n in n_range]
    n_hat = math.ceil(M ** (1.0 / (2.0 + consts.c1)))
    at_hat = tradeoff_bound(consts, M, n_hat).total
    return TradeoffCurve(rows, n_hat, at_hat, main_bound(consts, M), consts)


def main_bound(consts: TradeoffConstants, M: int) -> float:
    """The closed-form bound at the plug-in size, with its floor expressions taken literally."""
    k = consts
    r = M ** (1.0 / (2.0 + k.c1))
    fl = math.floor(r - 1)
    if fl < 1:
        return math.inf
    ct = k.C1 * k.tau
    return (2 * ct**2 / fl**2 + 2 * k.C1 * k.C2 * k.tau / r / fl
            + (k.C3 + 16.0 / 9.0 * ct**2) * (M ** (-2.0 * k.c2 / (2.0 + k.c1)) + 2.0))


# ---------------------------------------------------------------------------
# constants from a grid family
# ---------------------------------------------------------------------------

@dataclass
class FamilyPoint:
    n: int
    cost: float
    tau_ref: int
    tau_approx: int
    var_f: float
    delta: float
    bias: float
    approx_mean: float = math.nan


def _loglog_fit(n, y):
    n, y = np.asarray(n, dtype=float), np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(n <= 0):
        raise FitError("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(n), np.log(y), 1)
    return float(slope), float(intercept)


def fit_constants(points: Sequence[FamilyPoint], tau: int, c1: Optional[float] = None) -> TradeoffConstants:
    """Fit the tradeoff constants to a family of grid measurements.

    c2 is the negated log-log slope of max(delta, bias); C3 is then the
    smallest prefactor with C3 n^-c2 dominating every point.
    """
    if len(points) < 3:
        raise FitError(f"fit_constants needs at least 3 values of n, got {len(points)}")
    ns = np.array([p.n for p in points], dtype=float)
    C1 = max(max(p.tau_ref, p.tau_approx) for p in points) / tau
    C2 = max(p.n * p.var_f for p in points)
    y = np.array([max(p.delta, p.bias) for p in points])
    slope, _ = _loglog_fit(ns, y)
    c2 = -slope
    if not c2 > 0:
        raise FitError(f"perturbation does not decay in n (fitted exponent {c2:.3g})")
    C3 = float(np.max(y * ns**c2))
    if c1 is None:
        cs = np.array([p.cost for p in points], dtype=float)
        c1 = max(0.0, _loglog_fit(ns, cs)[0] - 1.0)
    return TradeoffConstants(C1, C2, C3, float(c1), c2, int(tau))


def gaussian_expectation(f: Callable, mean: float, sd: float) -> float:
    """E f(theta) for theta ~ N(mean, sd^2) by adaptive quadrature."""
    def integrand(z):
        return float(f(mean + sd * z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    val, _ = integrate.quad(integrand, -12, 12, points=[-mean / sd] if sd > 0 else None, limit=200)
    return val


def build_family(model: ModelSpec, data: DataSet, n_list: Sequence[int], f: Callable,
                 approx: Callable[[int, float], KernelConfig], ref: Callable[[int, float], KernelConfig],
                 G: int = 200, width: float = 6.0):
    """Grid measurements (tau, Var, delta, bias, cost) for the family approx(n) vs ref(n).

    ``approx`` and ``ref`` map (n, proposal scale) to kernel configs; both kernels of a
    pair share the reference kernel's proposal scale and grid.  Returns the list of
    FamilyPoint records and the mixing time of the exact full-data kernel.
    """
    mean, var = closed_form_posterior(model, data)
    pi_f = gaussian_expectation(f, mean, math.sqrt(var))
    full = FullMH()
    Kfull = discretize(full, model, data, grid_for(full, model, data, G, width))
    tau = mixing_time(Kfull)
    points = []
    for n in n_list:
        r0 = ref(n, None)
        scale = proposal_scale(r0, model, data)
        rc, ac = ref(n, scale), approx(n, scale)
        grid = grid_for(rc, model, data, G, width)
        K = discretize(rc, model, data, grid)
        Kt = discretize(ac, model, data, grid)
        pi_r, pi_a = stationary(K), stationary(Kt)
        fv = f(grid.centers)
        points.append(FamilyPoint(
            n=int(n), cost=float(step_cost(ac, data.N)),
            tau_ref=mixing_time(K, pi_r), tau_approx=mixing_time(Kt, pi_a),
            var_f=max(variance_under(pi_r, fv), variance_under(pi_a, fv)),
            delta=kernel_delta(K, Kt), bias=abs(pi_f - float(pi_r @ fv)),
            approx_mean=float(pi_a @ fv)))
    return points, tau, pi_f


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def empirical_error(config: KernelConfig, f: Callable, M: int, x0: float, reps: int,
                    reference_mean: Optional[float], model: ModelSpec, data: Optional[DataSet],
                    seed: int = 0, stationary_bias: Optional[float] = None) -> ErrorDecomposition:
    """Mean squared error of the budget-M time average over ``reps`` independent chains."""
    if reference_mean is None:
        raise ParameterError("reference_mean unavailable: pass the grid stationary expectation "
                             "of f under the exact kernel as the reference")
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    cost = step_cost(config, data.N) if data is not None else config.n
    if isinstance(config, Austerity):
        T = M
    else:
        T = _steps(cost, M)
    sq = np.empty(reps)
    for r in range(reps):
        traj = run_chain(config, T, x0, child_seed(seed, "empirical_error", r), model, data,
                         max_lik_evals=M, on_budget="truncate")
        sq[r] = (np.mean(f(traj.states)) - reference_mean) ** 2
    extra = {"T": T, "reps": reps, "cost_per_step": cost}
    e3 = None if stationary_bias is None else stationary_bias**2
    return ErrorDecomposition(None, None, e3, float(sq.mean()), "Empirical",
                              se=float(sq.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
                              extra=extra)


TABLE_COLUMNS = ["n", "cost_per_step", "tau", "delta", "e1_bound", "e2_bound", "e3_bound",
                 "total_bound", "empirical_total", "empirical_se", "n_hat_flag"]


def write_table(path, curve: TradeoffCurve, points=None, empirical=None) -> None:
    """Tradeoff table CSV; ``points`` and ``empirical`` are keyed by n when given."""
    points = {p.n: p for p in (points or [])}
    empirical = empirical or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for row in curve.rows:
            p = points.get(row.n)
            e = empirical.get(row.n)
            w.writerow([row.n, repr(float(row.cost)),
                        "" if p is None else max(p.tau_ref, p.tau_approx),
                        "" if p is None else repr(p.delta),
                        repr(row.e1), repr(row.e2), repr(row.e3), repr(row.total),
                        "" if e is None else repr(e.total), "" if e is None else repr(e.se),
                        int(row.n == curve.n_hat)])

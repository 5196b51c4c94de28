"""Exact finite-state analysis of kernels discretised on a 1-D grid.

``discretize`` turns any kernel into a row-stochastic matrix whose row ``g``
is the one-step law from cell centre ``x_g``:

* the proposal mass to cell ``j`` is the Gaussian density at ``x_j - x_g``
  times the cell width, divided by the lattice normaliser
  ``sum_k phi(k h) h`` (the row sum of an interior row on an infinite grid).
  The matrix is therefore symmetric, and proposal mass falling off the grid
  is rejected, so an MH kernel satisfies detailed balance exactly with
  respect to its target evaluated at the cell centres;
* acceptance is marginalised over ``u`` analytically
  (P[u < exp(m Lambda* - D)] = min(1, exp(m Lambda* - D))) and over the
  subsample exactly when the subsample law is enumerable, otherwise by an
  inner Monte Carlo whose standard error is recorded on the matrix.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Literal, Optional, Sequence

import numpy as np
from scipy import optimize, sparse, stats
from scipy.sparse.csgraph import connected_components
from scipy.special import comb

from .errors import (
    InfeasibleError,
    MultiplicityError,
    NotMixedError,
    ParameterError,
)
from .kernels import (
    Austerity,
    InfiniteResample,
    KernelConfig,
    proposal_scale,
    subsample_size,
    tail_denominator,
    target_sd,
    validate,
)
from .model import (
    DataSet,
    GaussianConjugate,
    ModelSpec,
    closed_form_tempered,
    gaussian_tail_prob_min1,
    tempered_posterior,
    total_log_lik,
)

Metric = Literal["discrete", "truncated", "euclid"]
ENUM_LIMIT = 10**6
MC_DRAWS = 10**4
ROW_TOL = 1e-10
SLACK = 1e-10


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    G: int

    def __post_init__(self):
        if self.G < 2:
            raise ParameterError(f"grid needs G >= 2 cells, got {self.G}")
        if not self.lo < self.hi:
            raise ParameterError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.G

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.G) + 0.5) * self.h

    @classmethod
    def around(cls, mean: float, sd: float, G: int, width: float = 6.0) -> "Grid":
        return cls(mean - width * sd, mean + width * sd, G)

    def cell_probs(self, mean: float, sd: float) -> np.ndarray:
        """Normal(mean, sd^2) mass of each cell, renormalised to the grid."""
        edges = self.lo + np.arange(self.G + 1) * self.h
        p = np.diff(stats.norm.cdf(edges, loc=mean, scale=sd))
        return p / p.sum()

    def coverage(self, logdens) -> float:
        """Fraction of the mass of ``exp(logdens)`` lying inside [lo, hi]."""
        span = self.hi - self.lo
        xs = np.linspace(self.lo - 20 * span, self.hi + 20 * span, 200_001)
        lw = logdens(xs)
        w = np.exp(lw - lw.max())
        inside = (xs >= self.lo) & (xs <= self.hi)
        return float(w[inside].sum() / w.sum())


def grid_for(config: KernelConfig, model: ModelSpec, data: Optional[DataSet], G: int,
             width: float = 6.0) -> Grid:
    """Grid of G cells centred on the kernel's (tempered) target, +-width sd."""
    sd = target_sd(config, model, data)
    if isinstance(config, InfiniteResample):
        return Grid.around(config.theta_star * sd**2 * config.n, sd, G, width)
    m = tail_denominator(config, data.N)
    if isinstance(model, GaussianConjugate):
        mean = closed_form_tempered(model, data, m)[0]
    else:
        logdens = tempered_posterior(model, data, m)
        xs = np.linspace(-20 * model.prior_sd, 20 * model.prior_sd, 40001)
        lw = logdens(xs)
        w = np.exp(lw - lw.max())
        mean = float(np.sum(w * xs) / w.sum())
    return Grid.around(mean, sd, G, width)


@dataclass(eq=False)
class TransitionMatrix:
    P: np.ndarray
    grid: Grid
    proposal: Optional[np.ndarray] = None
    accept: Optional[np.ndarray] = None
    exact: bool = True
    inner_se: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (self.grid.G, self.grid.G):
            raise ParameterError(f"matrix shape {P.shape} does not match grid G={self.grid.G}")
        if np.any(P < 0):
            raise ParameterError("transition matrix has negative entries")
        err = np.max(np.abs(P.sum(axis=1) - 1.0))
        if err > ROW_TOL:
            raise ParameterError(f"rows do not sum to 1 (max error {err:.3e})")
        self.P = P

    @property
    def centers(self) -> np.ndarray:
        return self.grid.centers

    def to_csv(self, path) -> None:
        """Header row (G, lo, hi) then G rows of G values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.grid.G, repr(self.grid.lo), repr(self.grid.hi)])
            for row in self.P:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "TransitionMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        G, lo, hi = int(rows[0][0]), float(rows[0][1]), float(rows[0][2])
        P = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(P, Grid(lo, hi, G))


def _arr(P) -> np.ndarray:
    return P.P if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)


# ---------------------------------------------------------------------------
# discretisation
# ---------------------------------------------------------------------------

def proposal_matrix(grid: Grid, scale: float) -> np.ndarray:
    """Symmetric sub-stochastic proposal matrix (see module docstring)."""
    h = grid.h
    ratio = scale / h
    if ratio > 5.0:
        Z = 1.0  # lattice sum equals 1 to machine precision
    else:
        K = int(math.ceil(40 * ratio)) + 1
        k = np.arange(-K, K + 1)
        Z = float(np.sum(stats.norm.pdf(k * h, scale=scale)) * h)
    off = np.arange(grid.G)
    diff = (off[None, :] - off[:, None]) * h
    return stats.norm.pdf(diff, scale=scale) * h / Z


def discretize(config: KernelConfig, model: ModelSpec, data: Optional[DataSet], grid: Grid,
               inner: Literal["auto", "exact", "mc"] = "auto", R: int = MC_DRAWS,
               seed: int = 0) -> TransitionMatrix:
    """Exact (or inner-MC) transition matrix of one kernel step on ``grid``."""
    validate(config, None if data is None else data.N)
    x = grid.centers
    scale = proposal_scale(config, model, data)
    q = proposal_matrix(grid, scale)
    lp = model.log_prior(x)
    D = lp[:, None] - lp[None, :]  # log p(theta) - log p(ell)
    rng = np.random.default_rng(seed)
    exact, se = True, None

    if isinstance(config, Austerity):
        if inner == "exact":
            raise InfeasibleError("Austerity rows need inner Monte Carlo; exact enumeration of the "
                                  "adaptive stopping rule is not supported")
        alpha, se = _austerity_accept(config, model, data, x, D, rng, R)
        exact = False
    elif isinstance(config, InfiniteResample):
        m = config.n
        if isinstance(model, GaussianConjugate):
            dx = x[None, :] - x[:, None]
            quad = x[None, :] ** 2 - x[:, None] ** 2
            mean = m * (dx * config.theta_star - 0.5 * quad) - D
            var = (m * dx) ** 2 / config.n
            alpha = gaussian_tail_prob_min1(mean, var)
        else:
            if inner == "exact":
                raise InfeasibleError("fresh-sample law is continuous; exact rows need the conjugate model")
            S = np.stack([total_log_lik(model, DataSet(model.sample_data(config.theta_star, config.n, rng)), x)
                          for _ in range(R)])
            alpha, se = _mixture_accept(S, np.full(R, 1.0 / R), m / config.n, D)
            exact = False
    else:
        N = data.N
        m = tail_denominator(config, N)
        s = subsample_size(config, N)
        vals, counts = data.atoms()
        if s >= N or vals.size == 1:
            S = total_log_lik(model, data, x)
            alpha = np.exp(np.minimum(0.0, (m / N) * (S[None, :] - S[:, None]) - D))
        elif vals.size == 2:
            alpha = _two_atom_accept(model, vals, counts, N, s, m, x, D)
        else:
            n_subsets = comb(N, s, exact=True)
            if n_subsets <= ENUM_LIMIT and (model.linear_stat or n_subsets * grid.G**2 <= 5 * 10**8):
                alpha = _enumerated_accept(model, data, s, m, x, D)
            elif inner == "exact":
                raise InfeasibleError(
                    f"exact subsample enumeration infeasible: C({N},{s}) = {n_subsets} exceeds {ENUM_LIMIT}")
            else:
                alpha, se = _mc_subsample_accept(model, data, s, m, x, D, rng, R)
                exact = False

    alpha = np.clip(alpha, 0.0, 1.0)
    P = q * alpha
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return TransitionMatrix(P, grid, proposal=q, accept=alpha, exact=exact, inner_se=se,
                            label=type(config).__name__)


def mh_matrix(grid: Grid, log_target, scale: float, label: str = "MH") -> TransitionMatrix:
    """Exact MH matrix on ``grid`` for an arbitrary log target (values or callable)."""
    x = grid.centers
    lt = log_target(x) if callable(log_target) else np.asarray(log_target, dtype=float)
    q = proposal_matrix(grid, scale)
    alpha = np.exp(np.minimum(0.0, lt[None, :] - lt[:, None]))
    P = q * alpha
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return TransitionMatrix(P, grid, proposal=q, accept=alpha, label=label)


def _linear_accept(w, p, m, x, D):
    """alpha_gj = sum_r p_r min(1, exp(c0 + c1 w_r)) for a scalar sufficient statistic.

    For the Gaussian likelihood the mean log-ratio is (ell - theta) w - (ell^2 - theta^2)/2
    with w the subsample mean, so c1 = m (x_j - x_g) depends only on the offset j - g.
    Per offset, the law of w is sorted once and each pair is a binary search.
    Returns (alpha, max per-entry standard error if ``p`` are MC weights).
    """
    order = np.argsort(w)
    w, p = w[order], p[order]
    logp = np.log(np.where(p > 0, p, 1e-300))
    pcum = np.concatenate([[0.0], np.cumsum(p)])
    G = x.size
    alpha = np.ones((G, G))
    second = np.ones((G, G))
    h = x[1] - x[0]
    for k in range(-(G - 1), G):
        if k == 0:
            continue
        g = np.arange(max(0, -k), min(G, G - k))
        j = g + k
        c1 = m * k * h
        c0 = -0.5 * m * (x[j] ** 2 - x[g] ** 2) - D[g, j]
        thr = -c0 / c1
        for power, out in ((1, alpha), (2, second)):
            terms = logp + power * c1 * w
            if c1 > 0:
                lse = np.concatenate([[-np.inf], np.logaddexp.accumulate(terms)])
                idx = np.searchsorted(w, thr, side="left")
                val = (1.0 - pcum[idx]) + np.exp(power * c0 + lse[idx])
            else:
                lse = np.concatenate([np.logaddexp.accumulate(terms[::-1])[::-1], [-np.inf]])
                idx = np.searchsorted(w, thr, side="right")
                val = pcum[idx] + np.exp(power * c0 + lse[idx])
            out[g, j] = val
    return alpha, second


def _mixture_accept(S, p, ratio, D, chunk=32):
    """alpha_gj = sum_r p_r min(1, exp(ratio (S_r[j] - S_r[g]) - D_gj)).

    ``S`` holds per-subsample log-likelihood totals at each grid point.
    Returns (alpha, max standard error treating p as equal MC weights).
    """
    G = S.shape[1]
    acc = np.zeros((G, G))
    acc2 = np.zeros((G, G))
    for i in range(0, S.shape[0], chunk):
        blk = S[i:i + chunk]
        y = ratio * (blk[:, None, :] - blk[:, :, None]) - D[None]
        a = np.exp(np.minimum(0.0, y))
        wts = p[i:i + chunk, None, None]
        acc += np.sum(wts * a, axis=0)
        acc2 += np.sum(wts * a * a, axis=0)
    n_eff = 1.0 / np.sum(p**2)
    se = float(np.sqrt(np.max(np.maximum(acc2 - acc**2, 0.0)) / n_eff))
    return acc, se


def _two_atom_accept(model, vals, counts, N, s, m, x, D):
    """Exact rows for two-valued data: the subsample count of one value is hypergeometric."""
    a, b = vals
    Na = int(counts[0])
    hg = stats.hypergeom(N, Na, s)
    k = np.arange(max(0, s - (N - Na)), min(s, Na) + 1)
    pmf = hg.pmf(k)
    keep = pmf >= 1e-20  # dropped mass is below 1e-15 in total
    k, pmf = k[keep], pmf[keep] / pmf[keep].sum()
    if model.linear_stat:
        w = (k * a + (s - k) * b) / s
        alpha, _ = _linear_accept(w, pmf, m, x, D)
        return alpha
    la = model.log_lik(x, a)
    lb = model.log_lik(x, b)
    S = k[:, None] * la[None, :] + (s - k)[:, None] * lb[None, :]
    alpha, _ = _mixture_accept(S, pmf, m / s, D)
    return alpha


def _enumerated_accept(model, data, s, m, x, D):
    pts = data.points
    if model.linear_stat:
        w = np.fromiter((np.mean(pts[list(c)]) for c in combinations(range(data.N), s)), dtype=float)
        w, inv = np.unique(w, return_inverse=True)
        p = np.bincount(inv).astype(float)
        alpha, _ = _linear_accept(w, p / p.sum(), m, x, D)
        return alpha
    L = model.log_lik(x[None, :], pts[:, None])  # N x G
    S = np.stack([L[list(c)].sum(axis=0) for c in combinations(range(data.N), s)])
    alpha, _ = _mixture_accept(S, np.full(S.shape[0], 1.0 / S.shape[0]), m / s, D)
    return alpha


def _draw_subsets(N, s, R, rng):
    return np.stack([rng.choice(N, size=s, replace=False) for _ in range(R)])


def _mc_subsample_accept(model, data, s, m, x, D, rng, R):
    idx = _draw_subsets(data.N, s, R, rng)
    if model.linear_stat:
        w = data.points[idx].mean(axis=1)
        p = np.full(R, 1.0 / R)
        alpha, second = _linear_accept(w, p, m, x, D)
        se = float(np.sqrt(np.max(np.maximum(second - alpha**2, 0.0)) / R))
        return alpha, se
    L = model.log_lik(x[None, :], data.points[:, None])
    S = np.stack([L[r].sum(axis=0) for r in idx])
    return _mixture_accept(S, np.full(R, 1.0 / R), m / s, D)


def _austerity_accept(config: Austerity, model, data, x, D, rng, R):
    """Inner MC over (u, permutation) of the adaptive stopping rule (conjugate model only)."""
    if not model.linear_stat:
        raise InfeasibleError("Austerity discretisation needs a model with a linear sufficient statistic")
    N = data.N
    sizes = []
    s = 1
    while True:
        sizes.append(s)
        if s >= N:
            break
        s = min(N, math.ceil(config.gamma * s))
    sizes = np.array(sizes)
    looks = np.arange(sizes.size)
    deltas = config.delta0 * config.rho**looks
    f_star = (sizes - 1) / N
    width = 2.0 * np.sqrt((1.0 - f_star) * np.log(2.0 / deltas) / (2.0 * sizes))
    means = np.empty((R, sizes.size))
    for r in range(R):
        perm = data.points[rng.permutation(N)]
        means[r] = np.cumsum(perm)[sizes - 1] / sizes
    logu = np.log(1.0 - rng.random(R))
    G = x.size
    xg, xj = x[:, None], x[None, :]
    bound = model.lik_diff_bound(xg, xj, data.max_abs)
    acc = np.zeros((G, G))
    acc2 = np.zeros((G, G))
    for r in range(R):
        lam = (xj - xg)[..., None] * means[r] - 0.5 * (xj**2 - xg**2)[..., None]
        target = ((logu[r] + D) / N)[..., None]
        stop = np.abs(lam - target) >= bound[..., None] * width
        stop[..., -1] = True
        first = np.argmax(stop, axis=-1)
        lam_stop = np.take_along_axis(lam, first[..., None], axis=-1)[..., 0]
        dec = (lam_stop > target[..., 0]).astype(float)
        acc += dec
        acc2 += dec
    acc /= R
    se = float(np.sqrt(np.max(acc * (1 - acc)) / R))
    return acc, se


# ---------------------------------------------------------------------------
# distributions and distances
# ---------------------------------------------------------------------------

def _closed_classes(P: np.ndarray):
    adj = sparse.csr_matrix(P > 0)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    if n_comp == 1:
        return [np.arange(P.shape[0])]
    rows, cols = adj.nonzero()
    leaving = np.zeros(n_comp, dtype=bool)
    mask = labels[rows] != labels[cols]
    leaving[labels[rows[mask]]] = True
    return [np.flatnonzero(labels == c) for c in range(n_comp) if not leaving[c]]


def stationary(P) -> np.ndarray:
    """Unique stationary vector; raises MultiplicityError for several closed classes."""
    P = _arr(P)
    classes = _closed_classes(P)
    if len(classes) > 1:
        shown = [c.tolist() for c in classes[:10]]
        raise MultiplicityError(f"{len(classes)} closed classes; stationary law not unique: {shown}"
                                + (" ..." if len(classes) > 10 else ""), classes)
    C = classes[0]
    sub = P[np.ix_(C, C)]
    A = sub.T - np.eye(C.size)
    A[-1] = 1.0
    rhs = np.zeros(C.size)
    rhs[-1] = 1.0
    piC = np.linalg.solve(A, rhs)
    pi = np.zeros(P.shape[0])
    pi[C] = np.maximum(piC, 0.0)
    pi /= pi.sum()
    for _ in range(1000):
        nxt = pi @ P
        nxt /= nxt.sum()
        done = np.abs(nxt - pi).sum() <= 1e-12
        pi = nxt
        if done:
            break
    return pi


def tv_distance(mu, nu) -> float:
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ParameterError(f"grid mismatch: {mu.shape} vs {nu.shape}")
    return 0.5 * float(np.abs(mu - nu).sum())


def row_tv(P, Pt) -> np.ndarray:
    P, Pt = _arr(P), _arr(Pt)
    if P.shape != Pt.shape:
        raise ParameterError(f"grid mismatch: {P.shape} vs {Pt.shape}")
    return 0.5 * np.abs(P - Pt).sum(axis=1)


def kernel_delta(P, Pt, rows=None) -> float:
    """max over (selected) rows of the one-step TV distance."""
    if isinstance(P, TransitionMatrix) and isinstance(Pt, TransitionMatrix) and P.grid != Pt.grid:
        raise ParameterError("grid mismatch between kernels")
    tv = row_tv(P, Pt)
    if rows is not None:
        tv = tv[rows]
    return float(tv.max()) if tv.size else 0.0


def _pair_cost(x, metric: Metric) -> np.ndarray:
    d = np.abs(x[:, None] - x[None, :])
    if metric == "euclid":
        return d
    if metric == "truncated":
        return np.minimum(1.0, d)
    if metric == "discrete":
        return (d > 0).astype(float)
    raise ParameterError(f"unknown metric {metric!r}")


def wasserstein(mu, nu, x, metric: Metric = "euclid") -> float:
    """W_d between two laws on the ordered support ``x``."""
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    x = x.centers if isinstance(x, Grid) else np.asarray(x, dtype=float)
    if mu.shape != nu.shape or mu.shape != x.shape:
        raise ParameterError("grid mismatch in wasserstein")
    if metric == "discrete":
        return tv_distance(mu, nu)
    if metric == "euclid":
        F = np.cumsum(mu - nu)[:-1]
        return float(np.sum(np.abs(F) * np.diff(x)))
    if metric == "truncated":
        return _transport_lp(mu, nu, x)
    raise ParameterError(f"unknown metric {metric!r}")


def _transport_lp(mu, nu, x) -> float:
    i = np.flatnonzero(mu > 0)
    j = np.flatnonzero(nu > 0)
    a, b = mu[i] / mu.sum(), nu[j] / nu.sum()
    cost = np.minimum(1.0, np.abs(x[i][:, None] - x[j][None, :])).ravel()
    ni, nj = i.size, j.size
    rows_eq = sparse.kron(sparse.eye(ni), np.ones((1, nj)))
    cols_eq = sparse.kron(np.ones((1, ni)), sparse.eye(nj))
    A = sparse.vstack([rows_eq, cols_eq]).tocsr()
    res = optimize.linprog(cost, A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise InfeasibleError(f"transport LP failed: {res.message}")
    return float(res.fun)


def distance_profile(P, pi=None, t: int = 1) -> np.ndarray:
    """Row-wise TV distance of P^t(x_g, .) to pi."""
    P = _arr(P)
    pi = stationary(P) if pi is None else pi
    Q = np.linalg.matrix_power(P, t)
    return 0.5 * np.abs(Q - pi[None, :]).sum(axis=1)


def mixing_time(P, pi=None, t_max: int = 10**6, eps: float = 0.25) -> int:
    """Smallest t with max_g TV(P^t(x_g, .), pi) < eps, by binary lifting on matrix powers."""
    P = _arr(P)
    pi = stationary(P) if pi is None else pi

    def d(Q):
        return 0.5 * float(np.abs(Q - pi[None, :]).sum(axis=1).max())

    if d(np.eye(P.shape[0])) < eps:
        return 0
    powers = [P]
    while d(powers[-1]) >= eps:
        if 2 ** len(powers) > t_max:
            Q = np.eye(P.shape[0])
            for bit, Pk in enumerate(powers):
                if (t_max >> bit) & 1:
                    Q = Q @ Pk
            raise NotMixedError(f"not mixed within t_max={t_max}; d(t_max)={d(Q):.4g}", d(Q))
        powers.append(powers[-1] @ powers[-1])
    k = len(powers) - 1
    if k == 0:
        return 1
    Q, t = powers[k - 1], 2 ** (k - 1)
    for j in range(k - 2, -1, -1):
        cand = Q @ powers[j]
        if d(cand) >= eps:
            Q, t = cand, t + 2**j
    return t + 1


def trace_kernel(P, mask) -> np.ndarray:
    """Transition matrix of the chain watched only while in the cells selected by ``mask``."""
    P = _arr(P)
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return P.copy()
    S, Sc = np.flatnonzero(mask), np.flatnonzero(~mask)
    if S.size == 0:
        raise ParameterError("trace set is empty")
    I = np.eye(Sc.size)
    try:
        esc = np.linalg.solve(I - P[np.ix_(Sc, Sc)], P[np.ix_(Sc, S)])
    except np.linalg.LinAlgError as exc:
        raise ParameterError("trace set is not reachable from its complement") from exc
    PS = P[np.ix_(S, S)] + P[np.ix_(S, Sc)] @ esc
    PS = np.maximum(PS, 0.0)
    return PS / PS.sum(axis=1, keepdims=True)


def curvature(P, x, metric: Metric = "discrete", adjacent_only: bool = False) -> float:
    """min over distinct grid pairs of 1 - W(P(x,.), P(y,.)) / d(x, y)."""
    P = _arr(P)
    x = x.centers if isinstance(x, Grid) else np.asarray(x, dtype=float)
    G = P.shape[0]
    if adjacent_only:
        pairs = [(g, g + 1) for g in range(G - 1)]
        return min(1.0 - wasserstein(P[a], P[b], x, metric) / _pair_cost(x[[a, b]], metric)[0, 1]
                   for a, b in pairs)
    if metric == "truncated":
        if G > 40:
            raise InfeasibleError("all-pairs truncated-metric curvature needs G <= 40; use adjacent_only")
        return min(1.0 - wasserstein(P[a], P[b], x, metric) / min(1.0, abs(x[a] - x[b]))
                   for a in range(G) for b in range(a + 1, G))
    best = np.inf
    F = np.cumsum(P, axis=1)[:, :-1]
    dx = np.diff(x)
    for g in range(G - 1):
        if metric == "discrete":
            W = 0.5 * np.abs(P[g + 1:] - P[g]).sum(axis=1)
            d = 1.0
        else:
            W = (np.abs(F[g + 1:] - F[g]) * dx).sum(axis=1)
            d = x[g + 1:] - x[g]
        best = min(best, float(np.min(1.0 - W / d)))
    return best


def eccentricity(pi, x, g: int, metric: Metric = "euclid") -> float:
    x = x.centers if isinstance(x, Grid) else np.asarray(x, dtype=float)
    return float(_pair_cost(x, metric)[g] @ np.asarray(pi, dtype=float))


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------

def lyapunov(x) -> np.ndarray:
    """Default Lyapunov function V(theta) = 1 + theta^2."""
    x = x.centers if isinstance(x, Grid) else np.asarray(x, dtype=float)
    return 1.0 + x**2


@dataclass
class DriftReport:
    a: float
    b: float
    lag: int
    V: str = "1+theta^2"
    witness: list = field(default_factory=list)
    valid: bool = True

    def check(self, P, V) -> bool:
        PV = _lagged(P, V, self.lag)
        return bool(np.all(PV - (1.0 - self.a) * V <= self.b))


def _lagged(P, V, lag):
    P = _arr(P)
    out = np.asarray(V, dtype=float)
    for _ in range(lag):
        out = P @ out
    return out


def drift_b(P, V, a: float, lag: int = 1) -> float:
    """Smallest b making E[V(X_lag)|x] <= (1-a) V(x) + b hold on every row."""
    PV = _lagged(P, V, lag)
    return float(np.max(PV - (1.0 - a) * V))


def verify_drift(P, V, lag: int = 1, a_min: float = 1e-9, iters: int = 200) -> DriftReport:
    """Fit (a, b) for the drift inequality on every grid row.

    Among all valid pairs we pick the one minimising b/a (the quantity that
    controls concentration): with t = 1/a, b/a = max_g (c_g t + V_g) where
    c_g = PV_g - V_g, a convex piecewise-linear function of t >= 1 that we
    minimise by bisection on its slope.
    """
    V = np.asarray(V, dtype=float)
    PV = _lagged(P, V, lag)
    c = PV - V

    def slope(t):
        return c[np.argmax(c * t + V)]

    lo, hi = 1.0, 1.0 / a_min
    if slope(lo) >= 0:
        t = lo
    elif slope(hi) < 0:
        t = hi
    else:
        for _ in range(iters):
            mid = math.sqrt(lo * hi)
            if slope(mid) < 0:
                lo = mid
            else:
                hi = mid
        t = lo if np.max(c * lo + V) <= np.max(c * hi + V) else hi
    a = 1.0 / t
    resid = PV - (1.0 - a) * V
    b = float(np.max(resid))
    if not a > a_min * 0.999:
        return DriftReport(0.0, math.inf, lag, valid=False)
    witness = np.flatnonzero(resid >= b - 1e-12 * max(1.0, abs(b))).tolist()
    return DriftReport(a, b, lag, witness=witness)


def drift_concentration_check(pi, V, a: float, b: float, C: float) -> bool:
    """pi({V <= C}) >= 1 - b/(aC)."""
    mass = float(np.sum(np.asarray(pi)[np.asarray(V) <= C]))
    return mass >= 1.0 - b / (a * C) - SLACK


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    name: str
    lhs: float
    rhs: float
    holds: Optional[bool]
    slack: Optional[float]
    hypotheses: dict = field(default_factory=dict)
    status: str = ""

    @classmethod
    def compare(cls, name, lhs, rhs, hypotheses=None, hypothesis_ok=True):
        hyp = dict(hypotheses or {})
        if not hypothesis_ok:
            return cls(name, float(lhs), float(rhs), None, None, hyp, "hypothesis not satisfied")
        ok = bool(lhs <= rhs + SLACK)
        return cls(name, float(lhs), float(rhs), ok, float(rhs - lhs), hyp, "holds" if ok else "fails")

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class CertificateReport:
    certificates: list
    grid: dict
    uncertain: bool = False
    reports: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Certificate:
        for c in self.certificates:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.certificates if c.status != "hypothesis not satisfied")

    def to_json(self) -> str:
        return json.dumps({"grid": self.grid, "uncertain": self.uncertain,
                           "certificates": [c.to_dict() for c in self.certificates],
                           "reports": _jsonable(self.reports)}, indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def certify_perturbation(K: TransitionMatrix, Kt: TransitionMatrix, V=None,
                         drift_factors: Sequence[float] = (4.0, 8.0),
                         wass_metric: Metric = "discrete", wass_power: Optional[int] = None,
                         t_max: int = 10**6) -> CertificateReport:
    """Exact grid evaluation of every perturbation inequality for the pair (K, Kt)."""
    if K.grid != Kt.grid:
        raise ParameterError("certify_perturbation needs both kernels on the same grid")
    x = K.centers
    V = lyapunov(x) if V is None else np.asarray(V, dtype=float)
    P, Pt = K.P, Kt.P
    pi, pit = stationary(P), stationary(Pt)
    delta = kernel_delta(P, Pt)
    tau = mixing_time(P, pi, t_max)
    tau_t = mixing_time(Pt, pit, t_max)
    certs = []

    tv = tv_distance(pi, pit)
    certs.append(Certificate.compare("tv_stationary", tv, 4.0 * delta / 3.0 * tau,
                                     {"delta": delta, "tau_mix": tau}))

    thr = 9.0 / (128.0 * tau)
    certs.append(Certificate.compare("mixing_doubling", tau_t, 2 * tau,
                                     {"delta": delta, "threshold": thr, "tau_mix": tau,
                                      "tau_mix_tilde": tau_t},
                                     hypothesis_ok=delta < thr))

    s = tau if wass_power is None else int(wass_power)
    Ps, Pts = np.linalg.matrix_power(P, s), np.linalg.matrix_power(Pt, s)
    contraction = 1.0 - curvature(Ps, x, wass_metric)
    alpha = 1.0 - contraction
    delta_w = max(wasserstein(Ps[g], Pts[g], x, wass_metric) for g in range(x.size))
    w_lhs = wasserstein(pi, pit, x, wass_metric)
    certs.append(Certificate.compare("wasserstein_stationary", w_lhs,
                                     delta_w / alpha if alpha > 0 else math.inf,
                                     {"metric": wass_metric, "power": s, "alpha": alpha, "delta_w": delta_w},
                                     hypothesis_ok=alpha > 0))

    dr, drt = verify_drift(P, V), verify_drift(Pt, V)
    hyp_drift = dr.valid and drt.valid and 0 < dr.a <= 1 and 0 < drt.a <= 1
    base = max(dr.b / dr.a, drt.b / drt.a) if hyp_drift else math.nan
    reports = {"drift": {"a": dr.a, "b": dr.b, "a_tilde": drt.a, "b_tilde": drt.b}}
    for factor in drift_factors:
        C = factor * base
        name = f"bias_geometric_C{factor:g}"
        conc_name = f"drift_concentration_C{factor:g}"
        if not hyp_drift:
            certs.append(Certificate.compare(name, tv, math.inf, {"factor": factor}, hypothesis_ok=False))
            continue
        inside = V < C
        closed = V <= C
        delta_X = kernel_delta(P, Pt, rows=closed)
        try:
            tau_X = mixing_time(trace_kernel(P, inside), t_max=t_max)
            ok = True
        except (MultiplicityError, ParameterError, NotMixedError):
            tau_X, ok = math.inf, False
        rhs = 4.0 * delta_X / 3.0 * tau_X + 2 * dr.b / (dr.a * C) + 2 * drt.b / (drt.a * C)
        certs.append(Certificate.compare(
            name, tv, rhs,
            {"C": C, "factor": factor, "delta_X": delta_X, "tau_trace": tau_X, "a": dr.a, "b": dr.b,
             "a_tilde": drt.a, "b_tilde": drt.b, "cells_in_X": int(inside.sum())},
            hypothesis_ok=ok))
        certs.append(Certificate.compare(
            conc_name, float(pi[V > C].sum()), dr.b / (dr.a * C), {"C": C, "a": dr.a, "b": dr.b}))
        certs.append(Certificate.compare(
            conc_name + "_tilde", float(pit[V > C].sum()), drt.b / (drt.a * C),
            {"C": C, "a": drt.a, "b": drt.b}))

    if K.accept is not None and Kt.accept is not None and K.proposal is not None \
            and Kt.proposal is not None and np.allclose(K.proposal, Kt.proposal) and dr.valid:
        certs.append(drift_inheritance(K, Kt, V, dr))

    return CertificateReport(
        certs,
        {"G": x.size, "lo": K.grid.lo, "hi": K.grid.hi, "h": K.grid.h},
        uncertain=not (K.exact and Kt.exact),
        reports=reports,
    )


def inheritance_delta(K: TransitionMatrix, Kt: TransitionMatrix, V) -> float:
    """Smallest delta admitting f with |alpha - alpha~| <= delta f <= delta and sum_y f V q <= V."""
    q = K.proposal
    dA = np.abs(K.accept - Kt.accept)
    np.fill_diagonal(dA, 0.0)
    weighted = (q * dA) @ V / V
    return float(max(dA.max(), weighted.max()))


def drift_inheritance(K: TransitionMatrix, Kt: TransitionMatrix, V, drift: DriftReport) -> Certificate:
    """Approximate kernel satisfies E[V] <= (1 - a + 2 delta) V + b."""
    d = inheritance_delta(K, Kt, V)
    PV = Kt.P @ V
    lhs = float(np.max(PV - (1.0 - drift.a + 2.0 * d) * V))
    return Certificate.compare("drift_inheritance", lhs, drift.b,
                               {"a": drift.a, "b": drift.b, "delta": d,
                                "kernel_delta": kernel_delta(K, Kt)})


def drift_like_bound(K: TransitionMatrix, Kt: TransitionMatrix, x0: int, T: int, X_mask,
                     p_index: int, L=None) -> dict:
    """Report-only evaluation of every term of the drift-like Wasserstein bound.

    The path-escape probability is replaced by the union bound over the two
    chains, valid for any coupling.
    """
    x = K.centers
    L = lyapunov(x) if L is None else np.asarray(L, dtype=float)
    X = np.asarray(X_mask, dtype=bool)
    P, Pt = K.P, Kt.P
    pi = stationary(P)
    d1, d2 = verify_drift(P, L), verify_drift(Pt, L)
    beta = min(d1.a, d2.a)
    B = max(drift_b(P, L, beta), drift_b(Pt, L, beta))
    Cc = 0.0
    for M in (P, Pt):
        out = M[np.ix_(X, ~X)]
        mass = out.sum(axis=1)
        ok = mass > 0
        if np.any(ok):
            Cc = max(Cc, float(np.max((out[ok] @ L[~X]) / mass[ok])))
    D = float(pi[~X] @ L[~X] / pi[~X].sum()) if pi[~X].sum() > 0 else 0.0
    c_p = float(max(0.0, np.max(np.abs(x - x[p_index]) - L)))
    idx = np.flatnonzero(X)
    ratio = 0.0
    for i, a in enumerate(idx[:-1]):
        for b in idx[i + 1:]:
            ratio = max(ratio, wasserstein(P[a], P[b], x, "euclid") / abs(x[a] - x[b]))
    alpha = 1.0 - ratio
    delta = max(wasserstein(Pt[g], P[g], x, "euclid") for g in idx)
    ecc = eccentricity(pi, x, x0)

    def stay(start, M):
        v = start.copy()
        for _ in range(max(0, T - 1)):
            v = (v @ M) * X
        return float(v.sum())

    e0 = np.zeros(x.size)
    e0[x0] = 1.0
    escape = min(1.0, (1.0 - stay(pi * X, P) - pi[~X].sum()) + (1.0 - stay(e0 * X, Pt)))
    law = e0 @ np.linalg.matrix_power(Pt, T)
    lhs = wasserstein(law, pi, x, "euclid")
    terms = {
        "delta_over_alpha": delta / alpha if alpha > 0 else math.inf,
        "contraction_term": (1 - alpha) ** T * ecc,
        "outside_term": (2 * B / beta + (1 - beta) ** T * (L[x0] + D) + 2 * c_p) * float(pi[~X].sum()),
        "escape_term": 2 * escape * (Cc + B / beta + c_p),
    }
    return {"lhs": lhs, "rhs": float(sum(terms.values())), "terms": terms,
            "constants": {"alpha": alpha, "delta": delta, "beta": beta, "B": B, "C": Cc, "D": D,
                          "c_p": c_p, "eccentricity": ecc, "escape_union_bound": escape},
            "hypotheses_ok": bool(alpha > 0 and 0 < beta < 1),
            "note": "escape probability uses the union bound over the two chains"}

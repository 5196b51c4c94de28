"""Data sets, likelihood/prior families, proposals and closed-form references.

Log-likelihoods drop the Gaussian normalising constant, so
``log p(x | theta) = -(x - theta)**2 / 2``.  Only differences in theta are
ever used by the kernels, and the grid module renormalises explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import NumericOverflowError, ParameterError, UnsupportedModelError

_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class DataSet:
    """Ordered observations x_1..x_N."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size < 1:
            raise ParameterError("DataSet needs N >= 1 points")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("DataSet points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return int(self.points.size)

    @classmethod
    def synthesize(cls, N: int, theta_star: float = 0.0, seed: int = 0) -> "DataSet":
        """N i.i.d. draws from N(theta_star, 1)."""
        if N < 1:
            raise ParameterError(f"N must be >= 1, got {N}")
        rng = np.random.default_rng(seed)
        return cls(theta_star + rng.standard_normal(N))

    @classmethod
    def two_point(cls, N: int, values=(-0.25, 0.25)) -> "DataSet":
        """Deterministic data set alternating between two values.

        Subsample laws of two-valued data are hypergeometric, which lets the
        grid module discretise subsampling kernels exactly for any N.
        """
        a, b = values
        pts = np.where(np.arange(N) % 2 == 0, a, b).astype(float)
        return cls(pts)

    def atoms(self):
        """Distinct values and their multiplicities."""
        vals, counts = np.unique(self.points, return_counts=True)
        return vals, counts

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.points)))

    def __eq__(self, other):
        return isinstance(other, DataSet) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class GaussianConjugate:
    """Prior N(0, prior_sd^2), likelihood N(x | theta, 1)."""

    prior_sd: float = 1.0
    linear_stat = True

    def __post_init__(self):
        if not self.prior_sd > 0:
            raise ParameterError(f"prior_sd must be positive, got {self.prior_sd}")

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -0.5 * theta**2 / self.prior_sd**2

    def log_lik(self, theta, x):
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        return -0.5 * (x - theta) ** 2

    def lik_diff_bound(self, theta, theta_new, max_abs_x):
        """Upper bound on max_i |log p(x_i|theta_new) - log p(x_i|theta)|.

        The log-ratio is (theta_new - theta) x - (theta_new^2 - theta^2)/2.
        """
        d = np.abs(theta_new - theta)
        return d * max_abs_x + 0.5 * np.abs(theta_new**2 - theta**2)

    def sample_data(self, theta_star, size, rng):
        return theta_star + rng.standard_normal(size)


@dataclass(frozen=True)
class BoundedGaussian:
    """Gaussian likelihood hard-clamped so that |log p(x|theta)| <= clip."""

    prior_sd: float = 1.0
    clip: float = 0.5
    linear_stat = False

    def __post_init__(self):
        if not self.prior_sd > 0:
            raise ParameterError(f"prior_sd must be positive, got {self.prior_sd}")
        if not self.clip > 0:
            raise ParameterError(f"clip must be positive, got {self.clip}")

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -0.5 * theta**2 / self.prior_sd**2

    def log_lik(self, theta, x):
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        val = np.clip(-0.5 * (x - theta) ** 2, -self.clip, self.clip)
        assert np.all(np.abs(val) <= self.clip)
        return val

    def lik_diff_bound(self, theta, theta_new, max_abs_x):
        # clamping is 1-Lipschitz, so the Gaussian bound still applies
        d = np.abs(theta_new - theta)
        gauss = d * max_abs_x + 0.5 * np.abs(theta_new**2 - theta**2)
        return np.minimum(gauss, 2.0 * self.clip)

    def sample_data(self, theta_star, size, rng):
        return theta_star + rng.standard_normal(size)


ModelSpec = Union[GaussianConjugate, BoundedGaussian]


@dataclass(frozen=True)
class Proposal:
    """Symmetric Gaussian random-walk proposal with standard deviation ``scale``."""

    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"proposal scale must be positive, got {self.scale}")

    def logpdf(self, x, y):
        z = (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) / self.scale
        return -0.5 * z**2 - np.log(self.scale * np.sqrt(2.0 * np.pi))

    def sample(self, x, rng):
        return x + self.scale * rng.standard_normal()


@dataclass(frozen=True)
class SquareClipped:
    """f(theta) = min(1, theta^2)."""

    def __call__(self, theta):
        return np.minimum(1.0, np.asarray(theta, dtype=float) ** 2)

    bounded = True


@dataclass(frozen=True)
class Square:
    """f(theta) = theta^2 (unbounded; only for the resampling example)."""

    def __call__(self, theta):
        return np.asarray(theta, dtype=float) ** 2

    bounded = False


@dataclass(frozen=True)
class IndicatorInterval:
    lo: float
    hi: float

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return ((theta >= self.lo) & (theta <= self.hi)).astype(float)

    bounded = True


TestFunction = Union[SquareClipped, Square, IndicatorInterval]


def total_log_lik(model: ModelSpec, data: DataSet, thetas) -> np.ndarray:
    """Sum_i log p(x_i | theta) for each theta in ``thetas``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if isinstance(model, GaussianConjugate):
        x = data.points
        s1, s2 = x.sum(), np.dot(x, x)
        return -0.5 * (s2 - 2.0 * thetas * s1 + data.N * thetas**2)
    vals, counts = data.atoms()
    out = np.zeros(thetas.shape)
    step = max(1, _CHUNK // max(1, thetas.size))
    for i in range(0, vals.size, step):
        v, c = vals[i:i + step], counts[i:i + step]
        out += model.log_lik(thetas[:, None], v[None, :]) @ c
    return out


def log_posterior(model: ModelSpec, data: DataSet, theta):
    """log p(theta) + sum_i log p(x_i | theta), up to a theta-free constant."""
    theta_arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta_arr)):
        raise ParameterError(f"theta must be finite, got {theta}")
    with np.errstate(over="ignore", invalid="ignore"):
        val = model.log_prior(theta_arr) + total_log_lik(model, data, theta_arr.reshape(-1)).reshape(theta_arr.shape)
    if not np.all(np.isfinite(val)):
        bad = theta_arr.reshape(-1)[~np.isfinite(np.reshape(val, -1))][0]
        raise NumericOverflowError(f"log posterior not finite at theta={bad}", theta=float(bad))
    return val if theta_arr.ndim else float(val)


def closed_form_posterior(model: ModelSpec, data: DataSet):
    """(mean, variance) of the conjugate posterior."""
    return closed_form_tempered(model, data, data.N)


def closed_form_tempered(model: ModelSpec, data: DataSet, n: int):
    """(mean, variance) of p(theta) prod_i p(x_i|theta)^(n/N) for the conjugate model."""
    if not isinstance(model, GaussianConjugate):
        raise UnsupportedModelError(f"no closed form for {type(model).__name__}")
    _check_n(n, data.N)
    prec = model.prior_sd**-2 + n
    return (n / data.N) * float(data.points.sum()) / prec, 1.0 / prec


def tempered_posterior(model: ModelSpec, data: DataSet, n: int) -> Callable:
    """theta -> log p(theta) + (n/N) sum_i log p(x_i|theta)."""
    _check_n(n, data.N)
    w = n / data.N

    def logdens(theta):
        theta_arr = np.asarray(theta, dtype=float)
        val = model.log_prior(theta_arr) + w * total_log_lik(model, data, theta_arr.reshape(-1)).reshape(theta_arr.shape)
        return val if theta_arr.ndim else float(val)

    return logdens


def _check_n(n, N):
    if not (1 <= n <= N):
        raise ParameterError(f"n must satisfy 1 <= n <= N={N}, got {n}")


def gaussian_tail_prob_min1(mean, var):
    """E[min(1, exp(Y))] for Y ~ N(mean, var), elementwise.

    Split at Y = 0: P(Y >= 0) + E[exp(Y); Y < 0].
    """
    from scipy.special import log_ndtr, ndtr

    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = ndtr(mean / sd)
        lower = np.exp(mean + 0.5 * var + log_ndtr((-mean - var) / sd))
        out = upper + lower
    point = sd == 0
    if np.any(point):
        out = np.where(point, np.minimum(1.0, np.exp(np.minimum(mean, 0.0))), out)
    return np.clip(out, 0.0, 1.0)

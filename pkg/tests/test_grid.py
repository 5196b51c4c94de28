import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxmcmc.errors import InfeasibleError, MultiplicityError, ParameterError
from approxmcmc.grid import (
    Grid,
    TransitionMatrix,
    certify_perturbation,
    curvature,
    discretize,
    eccentricity,
    grid_for,
    kernel_delta,
    lyapunov,
    mh_matrix,
    mixing_time,
    proposal_matrix,
    stationary,
    trace_kernel,
    tv_distance,
    verify_drift,
    wasserstein,
)
from approxmcmc.kernels import Austerity, FullMH, InfiniteResample, SubsampleNarrow, SubsampleWide
from approxmcmc.model import DataSet, closed_form_posterior

stoch = st.integers(2, 7).flatmap(
    lambda G: st.lists(st.lists(st.floats(0.01, 1.0), min_size=G, max_size=G), min_size=G, max_size=G))


def _norm(rows):
    P = np.array(rows)
    return P / P.sum(axis=1, keepdims=True)


def test_identity_has_many_closed_classes():
    with pytest.raises(MultiplicityError) as exc:
        stationary(np.eye(3))
    assert len(exc.value.classes) == 3


def test_two_state_stationary_and_mixing():
    P = np.array([[0.9, 0.1], [0.1, 0.9]])
    assert np.allclose(stationary(P), [0.5, 0.5])
    assert mixing_time(P) == 4
    Q = np.array([[0.7, 0.3], [0.6, 0.4]])
    assert np.allclose(stationary(Q), [2 / 3, 1 / 3])


def test_transient_states_get_zero_mass():
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.2, 0.8], [0.0, 0.6, 0.4]])
    pi = stationary(P)
    assert pi[0] == 0.0 and np.allclose(pi @ P, pi)


def test_identical_rows_mix_in_one_step():
    P = np.tile([0.2, 0.3, 0.5], (3, 1))
    x = np.arange(3.0)
    assert mixing_time(P) == 1
    assert curvature(P, x, "discrete") == pytest.approx(1.0)
    dr = verify_drift(P, lyapunov(x))
    assert dr.a == pytest.approx(1.0)
    assert dr.b == pytest.approx(float(stationary(P) @ lyapunov(x)))


def test_identity_has_zero_curvature():
    assert curvature(np.eye(4), np.arange(4.0), "discrete") == 0.0


@settings(max_examples=50, deadline=None)
@given(stoch)
def test_stationary_is_fixed_point(rows):
    P = _norm(rows)
    pi = stationary(P)
    assert np.allclose(pi @ P, pi, atol=1e-12) and pi.sum() == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(stoch, stoch)
def test_discrete_wasserstein_is_tv(a, b):
    mu, nu = _norm([a[0]])[0], _norm([b[0]])[0]
    if mu.size != nu.size:
        return
    x = np.arange(mu.size, dtype=float)
    assert wasserstein(mu, nu, x, "discrete") == pytest.approx(tv_distance(mu, nu))


def test_point_mass_wasserstein():
    x = np.array([0.0, 0.4, 3.0])
    e0, e2 = np.eye(3)[0], np.eye(3)[2]
    assert wasserstein(e0, e2, x, "euclid") == pytest.approx(3.0)
    assert wasserstein(e0, e2, x, "truncated") == pytest.approx(1.0)
    assert wasserstein(e0, np.eye(3)[1], x, "truncated") == pytest.approx(0.4)
    with pytest.raises(ParameterError):
        wasserstein(e0, np.ones(4) / 4, x)


def test_trace_onto_everything_is_identity_op():
    P = _norm(np.random.default_rng(0).random((5, 5)))
    assert np.allclose(trace_kernel(P, np.ones(5, bool)), P)
    T = trace_kernel(P, np.array([1, 1, 0, 1, 0], bool))
    assert np.allclose(T.sum(axis=1), 1.0)
    # the trace chain's stationary law is pi restricted and renormalised
    pi = stationary(P)[[0, 1, 3]]
    assert np.allclose(stationary(T), pi / pi.sum())


@settings(max_examples=30, deadline=None)
@given(stoch)
def test_curvature_bounds_mixing(rows):
    P = _norm(rows)
    kappa = curvature(P, np.arange(P.shape[0], dtype=float), "discrete")
    if kappa > 0:
        bound = 1 if kappa >= 1 else math.ceil(math.log(0.25) / math.log(1 - kappa) + 1e-12)
        assert mixing_time(P) <= max(bound, 1)


@settings(max_examples=50, deadline=None)
@given(stoch, st.data())
def test_kernel_delta_triangle(rows, data):
    P = _norm(rows)
    G = P.shape[0]
    mk = lambda: _norm(data.draw(st.lists(st.lists(st.floats(0.01, 1.0), min_size=G, max_size=G),
                                          min_size=G, max_size=G)))
    Q, R = mk(), mk()
    assert kernel_delta(P, R) <= kernel_delta(P, Q) + kernel_delta(Q, R) + 1e-12
    assert kernel_delta(P, P) == 0.0


def test_tiny_proposal_is_near_identity(gauss, data100):
    grid = grid_for(FullMH(), gauss, data100, 60)
    q = proposal_matrix(grid, grid.h / 10)
    assert np.all(q.sum(axis=1) <= 1 + 1e-12)
    off = q - np.diag(np.diag(q))
    assert off.max() <= 0.25


def test_proposal_symmetric_and_substochastic(gauss, data100):
    grid = grid_for(FullMH(), gauss, data100, 80)
    q = proposal_matrix(grid, 3 * grid.h)
    assert np.allclose(q, q.T) and q.sum(axis=1).max() <= 1 + 1e-12


def test_fullmh_grid_matches_posterior(gauss, data100):
    grid = grid_for(FullMH(), gauss, data100, 200)
    K = discretize(FullMH(), gauss, data100, grid)
    mean, var = closed_form_posterior(gauss, data100)
    pi = stationary(K)
    assert tv_distance(pi, grid.cell_probs(mean, math.sqrt(var))) < 1e-3
    assert K.exact and K.label == "FullMH"


def test_mh_matrix_is_reversible(gauss, data100):
    grid = Grid(-2, 2, 30)
    K = mh_matrix(grid, lambda x: -x**2, 0.3)
    pi = stationary(K)
    flow = pi[:, None] * K.P
    assert np.allclose(flow, flow.T, atol=1e-14)


def test_subsample_routes_agree(gauss):
    # two atoms: exact hypergeometric route vs enumeration on a small set
    d = DataSet(np.array([1.0] * 6 + [-1.0] * 4))
    grid = Grid(-1.5, 1.5, 25)
    K2 = discretize(SubsampleNarrow(4), gauss, d, grid)
    d3 = DataSet(d.points + np.r_[np.zeros(9), 1e-13])
    K3 = discretize(SubsampleNarrow(4), gauss, d3, grid)
    assert kernel_delta(K2, K3) < 1e-9
    Kmc = discretize(SubsampleNarrow(4), gauss, d3, grid, inner="mc", R=20000, seed=1)
    assert kernel_delta(K2, Kmc) < 0.05


def test_exact_austerity_is_infeasible(gauss, data100):
    grid = Grid(-1, 1, 10)
    with pytest.raises(InfeasibleError):
        discretize(Austerity(), gauss, data100, grid, inner="exact")


def test_certify_identical_kernels_holds(gauss, data100):
    cfg = SubsampleWide(5, 2)
    grid = grid_for(cfg, gauss, data100, 60)
    K = discretize(cfg, gauss, data100, grid)
    rep = certify_perturbation(K, K)
    assert rep.all_hold
    assert rep["tv_stationary"].lhs == pytest.approx(0.0, abs=1e-12)
    assert rep["mixing_doubling"].holds


def test_csv_round_trip(tmp_path, gauss, data100):
    grid = Grid(-1, 1, 12)
    K = discretize(InfiniteResample(5), gauss, None, grid)
    K.to_csv(tmp_path / "k.csv")
    K2 = TransitionMatrix.from_csv(tmp_path / "k.csv")
    assert K2.grid == grid and np.array_equal(K2.P, K.P)


def test_bad_matrix_rejected():
    with pytest.raises(ParameterError):
        TransitionMatrix(np.array([[0.5, 0.4], [0.5, 0.5]]), Grid(0, 1, 2))
    with pytest.raises(ParameterError):
        Grid(1, 0, 3)


def test_eccentricity_at_mean_is_mad():
    grid = Grid(-8, 8, 4000)
    sd = math.sqrt(0.5)
    pi = grid.cell_probs(0.0, sd)
    g = int(np.argmin(np.abs(grid.centers)))
    # mean absolute deviation of N(0, 1/2) is sqrt(1/pi)
    assert eccentricity(pi, grid, g) == pytest.approx(0.5641895835477564, abs=2e-3)

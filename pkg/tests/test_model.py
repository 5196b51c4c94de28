import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxmcmc.errors import NumericOverflowError, ParameterError, UnsupportedModelError
from approxmcmc.grid import Grid, tv_distance
from approxmcmc.model import (
    BoundedGaussian,
    DataSet,
    GaussianConjugate,
    IndicatorInterval,
    Proposal,
    Square,
    SquareClipped,
    closed_form_posterior,
    closed_form_tempered,
    gaussian_tail_prob_min1,
    log_posterior,
    tempered_posterior,
)


def test_dataset_validation():
    with pytest.raises(ParameterError):
        DataSet(np.array([]))
    with pytest.raises(ParameterError):
        DataSet(np.array([0.0, np.inf]))
    d = DataSet([1.0, 2.0])
    assert d.N == 2
    with pytest.raises(ValueError):
        d.points[0] = 3.0


def test_synthesize_is_seeded():
    a = DataSet.synthesize(50, 0.3, seed=4)
    b = DataSet.synthesize(50, 0.3, seed=4)
    assert a == b and hash(a) == hash(b)
    assert a != DataSet.synthesize(50, 0.3, seed=5)


def test_two_point_atoms():
    d = DataSet.two_point(7, (-1.0, 2.0))
    vals, counts = d.atoms()
    assert vals.tolist() == [-1.0, 2.0] and counts.tolist() == [4, 3]


def test_single_point_posterior_mode(gauss):
    d = DataSet([0.0])
    # log N(0|0,1) + log N(0|0,1) up to the dropped constants
    assert log_posterior(gauss, d, 0.0) == 0.0
    assert log_posterior(gauss, d, 1.0) == pytest.approx(-1.0)


def test_closed_form_single_point(gauss):
    mean, var = closed_form_posterior(gauss, DataSet([0.0]))
    assert mean == 0.0 and var == 0.5


def test_closed_form_conjugate_update(gauss, data100):
    mean, var = closed_form_posterior(gauss, data100)
    assert var == pytest.approx(1 / 101)
    assert mean == pytest.approx(data100.points.sum() / 101)


def test_closed_form_rejects_bounded(bounded, data100):
    with pytest.raises(UnsupportedModelError):
        closed_form_posterior(bounded, data100)


def test_log_posterior_rejects_nonfinite(gauss, data100):
    with pytest.raises(ParameterError):
        log_posterior(gauss, data100, np.nan)
    with pytest.raises(NumericOverflowError) as exc:
        log_posterior(GaussianConjugate(1.0), data100, 1e200)
    assert exc.value.theta == 1e200


def test_log_posterior_differences_independent_of_order(gauss, data100, rng):
    th = rng.normal(size=20)
    forward = log_posterior(gauss, data100, th)
    backward = log_posterior(gauss, data100, th[::-1])[::-1]
    assert np.allclose(forward - forward[0], backward - backward[0], atol=1e-12, rtol=0)


def test_tempered_full_equals_posterior(gauss, data100, rng):
    th = rng.normal(size=100)
    lp = tempered_posterior(gauss, data100, data100.N)
    assert np.allclose(lp(th), log_posterior(gauss, data100, th), atol=1e-12, rtol=0)


def test_tempered_range(gauss, data100):
    with pytest.raises(ParameterError):
        tempered_posterior(gauss, data100, 0)
    with pytest.raises(ParameterError):
        tempered_posterior(gauss, data100, 101)


def test_tempered_matches_completed_square(gauss, data100):
    n = 10
    mean, var = closed_form_tempered(gauss, data100, n)
    assert var == pytest.approx(1 / 11)
    assert mean == pytest.approx(n / 100 * data100.points.sum() / 11)
    grid = Grid.around(mean, math.sqrt(var), 2000, 10)
    lp = tempered_posterior(gauss, data100, n)(grid.centers)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    assert abs(w.sum() - 1) < 1e-8
    assert np.sum(w * grid.centers) == pytest.approx(mean, abs=1e-8)
    assert np.sum(w * (grid.centers - mean) ** 2) == pytest.approx(var, rel=1e-5)


def test_grid_posterior_matches_closed_form(gauss, data100):
    mean, var = closed_form_posterior(gauss, data100)
    grid = Grid.around(mean, math.sqrt(var), 400, 6)
    lp = log_posterior(gauss, data100, grid.centers)
    w = np.exp(lp - lp.max())
    assert tv_distance(w / w.sum(), grid.cell_probs(mean, math.sqrt(var))) <= 1e-4


def test_bounded_loglik_sweep():
    m = BoundedGaussian(1.0, 2.0)
    th = np.linspace(-10, 10, 401)
    x = np.linspace(-10, 10, 401)
    vals = m.log_lik(th[:, None], x[None, :])
    assert vals.min() >= -2.0 and vals.max() <= 2.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3))
def test_bound_dominates_log_ratio(t1, t2, x):
    for m in (GaussianConjugate(1.0), BoundedGaussian(1.0, 0.5)):
        diff = abs(float(m.log_lik(t2, x) - m.log_lik(t1, x)))
        assert diff <= float(m.lik_diff_bound(t1, t2, abs(x))) + 1e-12


def test_proposal_symmetry():
    p = Proposal(0.7)
    assert p.logpdf(0.1, 0.9) == p.logpdf(0.9, 0.1)
    with pytest.raises(ParameterError):
        Proposal(0.0)


def test_test_functions():
    th = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert SquareClipped()(th).tolist() == [1.0, 0.25, 0.0, 0.25, 1.0]
    assert Square()(th).tolist() == [4.0, 0.25, 0.0, 0.25, 4.0]
    assert IndicatorInterval(-1, 0.5)(th).tolist() == [0.0, 1.0, 1.0, 1.0, 0.0]
    assert SquareClipped.bounded and not Square.bounded


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 3), st.one_of(st.just(0.0), st.floats(1e-4, 4.0)))
def test_gaussian_tail_prob_matches_quadrature(m, v):
    from scipy import integrate

    if v == 0:
        expect = min(1.0, math.exp(min(m, 0.0)))
    else:
        sd = math.sqrt(v)
        expect = integrate.quad(lambda y: min(1.0, math.exp(y)) * math.exp(-0.5 * ((y - m) / sd) ** 2)
                                / (sd * math.sqrt(2 * math.pi)), m - 12 * sd, m + 12 * sd, points=[0.0])[0]
    assert float(gaussian_tail_prob_min1(m, v)) == pytest.approx(expect, abs=1e-7)

import numpy as np
import pytest

from ampsi.models import (BddPrior, BgPrior, GgPrior, SiChannel, make_si,
                          sample_bdd_pair, sample_bdd_stationary,
                          sample_bdd_step, sample_bg, sample_gg,
                          signal_second_moment)


def test_bg_prior_validation():
    BgPrior(0.0)
    BgPrior(1.0)
    with pytest.raises(ValueError):
        BgPrior(-0.1)
    with pytest.raises(ValueError):
        BgPrior(1.1)


def test_bdd_prior_derived_quantities():
    p = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=2.0, rho=0.9)
    assert p.gamma == pytest.approx(0.19)
    assert p.sigma_sq == pytest.approx((1 - 0.81) * 2.0)
    # rho = 1 must be allowed: no innovation, drift copies the old value
    assert BddPrior(0.5, 0.1, 0.3, 0.1, rho=1.0).sigma_sq == 0.0


def test_bdd_prior_validation():
    with pytest.raises(ValueError):
        BddPrior(0.5, 0.1, 0.3, 0.2)          # probabilities sum to 1.1
    with pytest.raises(ValueError):
        BddPrior(0.9, -0.1, 0.1, 0.1)
    with pytest.raises(ValueError):
        BddPrior(0.5, 0.1, 0.3, 0.1, rho=0.0)
    with pytest.raises(ValueError):
        BddPrior(0.5, 0.1, 0.3, 0.1, rho=1.2)


def test_second_moments():
    assert signal_second_moment(BgPrior(0.3)) == pytest.approx(0.3)
    assert signal_second_moment(GgPrior(2.5)) == pytest.approx(2.5)
    p = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=1.5)
    assert signal_second_moment(p) == pytest.approx(0.19 * 1.5)


def test_sample_bg_statistics():
    prior = BgPrior(0.3)
    x = sample_bg(prior, 400_000, seed=1)
    frac = np.mean(x != 0)
    assert frac == pytest.approx(0.3, abs=0.005)
    assert np.var(x[x != 0]) == pytest.approx(1.0, rel=0.02)
    assert np.mean(x**2) == pytest.approx(0.3, rel=0.02)


def test_sample_gg_statistics():
    x = sample_gg(GgPrior(2.0), 200_000, seed=2)
    assert np.mean(x**2) == pytest.approx(2.0, rel=0.03)
    assert np.all(x != 0)


def test_sample_bdd_stationary_statistics():
    prior = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=1.0, rho=0.95)
    x = sample_bdd_stationary(prior, 400_000, seed=3)
    assert np.mean(x != 0) == pytest.approx(prior.gamma, abs=0.005)
    assert np.mean(x**2) == pytest.approx(prior.gamma * prior.sigma_s_sq,
                                          rel=0.03)


def test_sample_bdd_step_preserves_stationary_law():
    # chaining several batches must keep support fraction and energy at the
    # stationary values, not wash the signal out
    prior = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=1.0, rho=0.95)
    x = sample_bdd_stationary(prior, 300_000, seed=4)
    for k in range(5):
        x, cases = sample_bdd_step(prior, x, seed=100 + k)
        assert cases.shape == x.shape
    assert np.mean(x != 0) == pytest.approx(prior.gamma, abs=0.01)
    assert np.mean(x**2) == pytest.approx(prior.gamma * prior.sigma_s_sq,
                                          rel=0.05)


def test_sample_bdd_step_case_semantics():
    prior = BddPrior(0.25, 0.25, 0.25, 0.25, sigma_s_sq=1.0, rho=0.95)
    x_prev = sample_bdd_stationary(prior, 200_000, seed=5)
    x, cases = sample_bdd_step(prior, x_prev, seed=6)
    # deaths zero out, births appear on previously empty entries
    assert np.all(x[cases == 1] == 0)
    assert np.all(x[cases == 2] == 0)
    assert np.all(x[cases == 4] != 0)
    assert np.all(x_prev[cases == 4] == 0)
    drift = cases == 3
    assert np.all(x_prev[drift] != 0)
    # drift correlation: E[x_curr * x_prev] = rho * E[x_prev^2] on that set
    ratio = np.mean(x[drift] * x_prev[drift]) / np.mean(x_prev[drift] ** 2)
    assert ratio == pytest.approx(prior.rho, abs=0.02)


def test_sample_bdd_pair_joint_law():
    prior = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=1.0, rho=0.95)
    pair = sample_bdd_pair(prior, 400_000, seed=7)
    freq = np.bincount(pair.case_labels, minlength=5)[1:] / pair.x.size
    np.testing.assert_allclose(
        freq, [prior.eps1, prior.eps2, prior.eps3, prior.eps4], atol=0.004)
    drift = pair.case_labels == 3
    ratio = (np.mean(pair.x[drift] * pair.x_prev[drift])
             / np.mean(pair.x_prev[drift] ** 2))
    assert ratio == pytest.approx(prior.rho, abs=0.01)
    assert np.mean(pair.x**2) == pytest.approx(
        prior.gamma * prior.sigma_s_sq, rel=0.03)


def test_make_si():
    x = sample_bg(BgPrior(0.5), 200_000, seed=8)
    si = make_si(x, SiChannel(0.04), seed=9)
    assert np.var(si - x) == pytest.approx(0.04, rel=0.03)
    exact = make_si(x, SiChannel(0.0), seed=9)
    np.testing.assert_array_equal(exact, x)
    assert exact is not x


def test_sampling_reproducible():
    prior = BddPrior(0.80, 0.01, 0.18, 0.01)
    a = sample_bdd_stationary(prior, 1000, seed=42)
    b = sample_bdd_stationary(prior, 1000, seed=42)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(sample_bg(BgPrior(0.3), 100, seed=1),
                                  sample_bg(BgPrior(0.3), 100, seed=1))


def test_si_channel_validation():
    SiChannel(0.0)
    with pytest.raises(ValueError):
        SiChannel(-0.01)

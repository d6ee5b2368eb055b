import numpy as np
import pytest
from scipy import stats

from ampsi.gaussian import (GaussianDensityParams, gauss_product,
                            joint_cond_mean, joint_density_log, log_gauss_pdf,
                            matched_filter_mu, matched_filter_var)


def test_log_gauss_pdf_matches_scipy():
    x = np.array([-3.0, -0.2, 0.0, 1.7, 10.0])
    got = log_gauss_pdf(x, mean=0.4, var=2.5)
    want = stats.norm.logpdf(x, loc=0.4, scale=np.sqrt(2.5))
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_log_gauss_pdf_scalar_and_validation():
    assert isinstance(log_gauss_pdf(0.3), float)
    with pytest.raises(ValueError):
        log_gauss_pdf(0.0, var=0.0)
    with pytest.raises(ValueError):
        log_gauss_pdf(0.0, var=-1.0)


def test_gauss_product_pointwise_identity():
    p1 = GaussianDensityParams(mean=0.7, var=1.3)
    p2 = GaussianDensityParams(mean=-0.4, var=0.6)
    combined, log_scale = gauss_product(p1, p2)
    for x in (-2.0, 0.0, 0.5, 3.1):
        lhs = (log_gauss_pdf(x, p1.mean, p1.var)
               + log_gauss_pdf(x, p2.mean, p2.var))
        rhs = log_scale + log_gauss_pdf(x, combined.mean, combined.var)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_gauss_product_moments():
    p1 = GaussianDensityParams(0.0, 2.0)
    p2 = GaussianDensityParams(1.0, 2.0)
    combined, _ = gauss_product(p1, p2)
    assert combined.mean == pytest.approx(0.5)
    assert combined.var == pytest.approx(1.0)


def test_density_params_validation():
    with pytest.raises(ValueError):
        GaussianDensityParams(0.0, 0.0)


def _quad_joint(a, b, rho, sigma_x_sq, sigma_a_sq, sigma_b_sq):
    # brute-force check value: integrate the three-factor integrand over x
    from scipy.integrate import quad

    def integrand(x):
        return (stats.norm.pdf(x, scale=np.sqrt(sigma_x_sq))
                * stats.norm.pdf(a - rho * x, scale=np.sqrt(sigma_a_sq))
                * stats.norm.pdf(b - x, scale=np.sqrt(sigma_b_sq)))

    val, err = quad(integrand, -40, 40, epsabs=1e-14, epsrel=1e-12, limit=200)
    assert err < 1e-12
    return val


@pytest.mark.parametrize("rho", [0.95, -0.6, 1.0])
def test_joint_density_log_matches_quadrature(rho):
    for a, b in [(0.3, -0.2), (1.5, 1.1), (-0.7, 0.4)]:
        got = joint_density_log(a, b, rho, 1.0, 0.3, 0.5)
        want = np.log(_quad_joint(a, b, rho, 1.0, 0.3, 0.5))
        assert got == pytest.approx(want, abs=1e-10)


def test_joint_cond_mean_matches_linear_solve():
    rho, sx, sa, sb = 0.8, 1.2, 0.4, 0.7
    # posterior precision/mean of x given a = rho*x + noise_a, b = x + noise_b
    prec = 1.0 / sx + rho**2 / sa + 1.0 / sb
    for a, b in [(0.5, -0.3), (2.0, 1.0)]:
        want = (rho * a / sa + b / sb) / prec
        got = joint_cond_mean(a, b, rho, sx, sa, sb)
        assert got == pytest.approx(want, abs=1e-12)


def test_matched_filter_combines_two_observations():
    lam_sq, sh_sq = 0.5, 0.2
    a, b = 1.0, -0.4
    mu = matched_filter_mu(a, b, lam_sq, sh_sq)
    # inverse-variance weighting of the two unbiased observations of x
    want = (a / lam_sq + b / sh_sq) / (1.0 / lam_sq + 1.0 / sh_sq)
    assert mu == pytest.approx(want, rel=1e-14)
    var = matched_filter_var(lam_sq, sh_sq)
    assert var == pytest.approx(1.0 / (1.0 / lam_sq + 1.0 / sh_sq), rel=1e-14)


def test_matched_filter_degenerate_sides():
    # a noiseless side collapses the filter onto that observation
    assert matched_filter_mu(1.3, 0.2, 0.0, 0.5) == pytest.approx(1.3)
    assert matched_filter_mu(1.3, 0.2, 0.5, 0.0) == pytest.approx(0.2)
    assert matched_filter_var(0.0, 0.5) == 0.0
    assert matched_filter_var(0.5, 0.0) == 0.0


def test_matched_filter_vectorized():
    a = np.array([0.0, 1.0, -2.0])
    b = np.array([0.5, 0.5, 0.5])
    mu = matched_filter_mu(a, b, 1.0, 1.0)
    np.testing.assert_allclose(mu, (a + b) / 2.0)

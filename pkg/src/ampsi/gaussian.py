"""Gaussian density algebra used by the conditional denoisers.

All densities are parameterized by variance (not standard deviation) and all
heavy lifting happens in the log domain so that mixture weights stay finite
far out in the tails.
"""

from dataclasses import dataclass

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianDensityParams:
    """Mean/variance pair identifying a scalar Gaussian density."""

    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"variance must be positive, got {self.var}")


def log_gauss_pdf(x, mean=0.0, var=1.0):
    """Log density of N(mean, var) evaluated at x (scalar or array)."""
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0):
        raise ValueError("variance must be positive")
    x = np.asarray(x, dtype=float)
    out = -0.5 * (_LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)
    return out if out.ndim else float(out)


def gauss_product(p1: GaussianDensityParams, p2: GaussianDensityParams):
    """Collapse a product of two Gaussian densities in the same variable.

    Returns (combined, log_scale) such that, pointwise in x,

        N(x; p1) * N(x; p2) = exp(log_scale) * N(x; combined)

    The scale is the value of a zero-mean Gaussian with variance
    var1 + var2 evaluated at mean1 - mean2.
    """
    v1, v2 = p1.var, p2.var
    vsum = v1 + v2
    combined = GaussianDensityParams(
        mean=(p1.mean * v2 + p2.mean * v1) / vsum,
        var=v1 * v2 / vsum,
    )
    log_scale = log_gauss_pdf(p1.mean - p2.mean, 0.0, vsum)
    return combined, log_scale


def _check_joint_params(rho, sigma_x_sq, sigma_a_sq, sigma_b_sq):
    if rho == 0:
        raise ValueError("rho must be nonzero")
    for name, v in (("sigma_x_sq", sigma_x_sq), ("sigma_a_sq", sigma_a_sq),
                    ("sigma_b_sq", sigma_b_sq)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def joint_density_log(a, b, rho, sigma_x_sq, sigma_a_sq, sigma_b_sq):
    """Log joint density of (A, B) = (rho*X + W_a, X + W_b).

    X ~ N(0, sigma_x_sq), W_a ~ N(0, sigma_a_sq), W_b ~ N(0, sigma_b_sq),
    all independent.  The integral over X of the three-Gaussian product
    collapses to two factors:

        f(a, b) = (1/|rho|) * N(b; 0, sx+sb)
                           * N(sx*b/(sx+sb) - a/rho; 0, sx*sb/(sx+sb) + sa/rho^2)

    where sx, sa, sb are the three variances.
    """
    _check_joint_params(rho, sigma_x_sq, sigma_a_sq, sigma_b_sq)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sxb = sigma_x_sq + sigma_b_sq
    resid_var = sigma_x_sq * sigma_b_sq / sxb + sigma_a_sq / rho**2
    resid = sigma_x_sq * b / sxb - a / rho
    out = (-np.log(abs(rho))
           + log_gauss_pdf(b, 0.0, sxb)
           + log_gauss_pdf(resid, 0.0, resid_var))
    out = np.asarray(out)
    return out if out.ndim else float(out)


def joint_cond_mean(a, b, rho, sigma_x_sq, sigma_a_sq, sigma_b_sq):
    """E[X | A=a, B=b] for the jointly Gaussian triple of joint_density_log."""
    _check_joint_params(rho, sigma_x_sq, sigma_a_sq, sigma_b_sq)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    num = rho * sigma_x_sq * sigma_b_sq * a + sigma_x_sq * sigma_a_sq * b
    den = sigma_x_sq * (sigma_a_sq + rho**2 * sigma_b_sq) + sigma_a_sq * sigma_b_sq
    out = np.asarray(num / den)
    return out if out.ndim else float(out)


def matched_filter_mu(a, b, lambda_sq, sigma_hat_sq):
    """Scalar combination of pseudo-data a and SI b with the least noise.

    The filter output mu = (a*sigma_hat_sq + b*lambda_sq) / (sigma_hat_sq +
    lambda_sq) observes X through AWGN of variance matched_filter_var(...).
    """
    if lambda_sq < 0 or sigma_hat_sq < 0:
        raise ValueError("noise variances must be nonnegative")
    tot = lambda_sq + sigma_hat_sq
    if tot == 0:
        # both observations exact; they agree, return a
        return np.asarray(a, dtype=float) + 0.0 * np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.asarray((a * sigma_hat_sq + b * lambda_sq) / tot)
    return out if out.ndim else float(out)


def matched_filter_var(lambda_sq, sigma_hat_sq):
    """Effective AWGN variance of the matched-filter combination.

    Harmonic-style composition lambda_sq*sigma_hat_sq/(lambda_sq+sigma_hat_sq);
    never exceeds either input variance.
    """
    if lambda_sq < 0 or sigma_hat_sq < 0:
        raise ValueError("noise variances must be nonnegative")
    tot = lambda_sq + sigma_hat_sq
    if tot == 0:
        return 0.0
    return lambda_sq * sigma_hat_sq / tot

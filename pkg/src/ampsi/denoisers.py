"""Conditional-mean denoisers for pseudo-data with side information.

Every denoiser evaluates E[X | X + lam*Z1 = a, SI = b] for its prior, where
``a`` is the AMP pseudo-data with effective noise variance ``lambda_sq`` and
``b`` observes the relevant reference signal through AWGN of variance
``sigma_hat_sq``.  Mixture posteriors are assembled in the log domain and the
case weights come out of logsumexp/expit, so the formulas stay finite for
arguments far in the tails.

Derivatives (``*_prime``) are with respect to the first argument ``a``; they
are analytic score-weighted expressions, not finite differences.

Degenerate channels are routed explicitly: ``lambda_sq`` below ``TINY_VAR``
means the pseudo-data is exact, so eta(a, b) = a; ``sigma_hat_sq`` below
``TINY_VAR`` means the SI is exact and the posterior collapses onto what the
SI reveals.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .gaussian import log_gauss_pdf
from .models import BddPrior, BgPrior, GgPrior

TINY_VAR = 1e-14


@dataclass(frozen=True)
class DenoiserContext:
    """Prior plus the two channel variances a denoiser evaluation needs."""

    prior: object
    lambda_sq: float
    sigma_hat_sq: float

    def __post_init__(self):
        if self.lambda_sq < 0:
            raise ValueError("lambda_sq must be nonnegative")
        if self.sigma_hat_sq < 0:
            raise ValueError("sigma_hat_sq must be nonnegative")
        if not isinstance(self.prior, (BgPrior, BddPrior, GgPrior)):
            raise TypeError(f"unsupported prior {type(self.prior).__name__}")


def _as_arrays(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scalar = a.ndim == 0 and b.ndim == 0
    a, b = np.broadcast_arrays(a, b)
    return a, b, scalar


def _ret(x, scalar):
    return float(x) if scalar else x


def _log_or_neginf(p):
    return np.log(p) if p > 0 else -np.inf


# ---------------------------------------------------------------------------
# Bernoulli-Gauss with side information


def _bg_eval(prior: BgPrior, lam2, sh2, a, b):
    """Return (eta, eta_prime) for the BG conditional denoiser."""
    eps = prior.epsilon
    s2 = sh2 / (1.0 + sh2) + lam2
    u = b / (1.0 + sh2) - a
    log_w0 = _log_or_neginf(1.0 - eps) + log_gauss_pdf(a, 0.0, lam2) \
        + log_gauss_pdf(b, 0.0, sh2)
    log_w1 = _log_or_neginf(eps) + log_gauss_pdf(b, 0.0, 1.0 + sh2) \
        + log_gauss_pdf(u, 0.0, s2)
    w = expit(log_w1 - log_w0)          # posterior P(X != 0 | a, b)
    den = sh2 + lam2 + sh2 * lam2
    e_nz = (sh2 * a + lam2 * b) / den   # E[X | X != 0, a, b]
    g0 = -a / lam2
    g1 = u / s2
    eta_val = w * e_nz
    eta_der = w * (1.0 - w) * (g1 - g0) * e_nz + w * sh2 / den
    return eta_val, eta_der


def _bg_exact_si(a, b):
    # SI noiseless: b reveals X itself (zero stays zero).
    eta_val = np.where(b == 0.0, 0.0, b)
    return eta_val, np.zeros_like(a)


def eta_bg(ctx: DenoiserContext, a, b):
    """Conditional-mean denoiser for the Bernoulli-Gauss prior."""
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(a + 0.0, scalar)
    if ctx.sigma_hat_sq < TINY_VAR:
        return _ret(_bg_exact_si(a, b)[0], scalar)
    val = _bg_eval(ctx.prior, ctx.lambda_sq, ctx.sigma_hat_sq, a, b)[0]
    return _ret(val, scalar)


def eta_bg_prime(ctx: DenoiserContext, a, b):
    """d/da of eta_bg."""
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(np.ones_like(a), scalar)
    if ctx.sigma_hat_sq < TINY_VAR:
        return _ret(_bg_exact_si(a, b)[1], scalar)
    der = _bg_eval(ctx.prior, ctx.lambda_sq, ctx.sigma_hat_sq, a, b)[1]
    return _ret(der, scalar)


# ---------------------------------------------------------------------------
# Gauss-Gauss (Gaussian prior, Gaussian SI)


def eta_gg(ctx: DenoiserContext, a, b):
    """Linear conditional mean for a Gaussian prior with Gaussian SI.

    Equals the Wiener filter applied to the matched-filter combination of
    (a, b); collapses to b when the SI is exact and to a/(1 + lambda_sq/sx)
    scaling when the SI is useless.
    """
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(a + 0.0, scalar)
    sx = ctx.prior.sigma_x_sq
    lam2, sh2 = ctx.lambda_sq, ctx.sigma_hat_sq
    den = sx * (sh2 + lam2) + lam2 * sh2
    return _ret(sx * (sh2 * a + lam2 * b) / den, scalar)


def eta_gg_prime(ctx: DenoiserContext, a, b):
    """d/da of eta_gg (constant in (a, b))."""
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(np.ones_like(a), scalar)
    sx = ctx.prior.sigma_x_sq
    lam2, sh2 = ctx.lambda_sq, ctx.sigma_hat_sq
    den = sx * (sh2 + lam2) + lam2 * sh2
    return _ret(np.full_like(a, sx * sh2 / den), scalar)


# ---------------------------------------------------------------------------
# Birth/death/drift with side information


def _bdd_eval(prior: BddPrior, lam2, sh2, a, b):
    """Return (eta, eta_prime) for the four-case BDD conditional denoiser."""
    ss = prior.sigma_s_sq
    s2 = prior.sigma_sq
    rho = prior.rho

    v3 = ss * (sh2 + s2) / (sh2 + ss) + lam2
    m3 = rho * ss * b / (sh2 + ss)
    d3 = ss * (s2 + lam2 + sh2) + lam2 * sh2
    e3 = (ss * (s2 + sh2) * a + rho * ss * lam2 * b) / d3
    e3p = ss * (s2 + sh2) / d3
    e4 = ss * a / (ss + lam2)
    e4p = ss / (ss + lam2)

    log_t = np.stack([
        _log_or_neginf(prior.eps1) + log_gauss_pdf(a, 0.0, lam2)
        + log_gauss_pdf(b, 0.0, sh2),
        _log_or_neginf(prior.eps2) + log_gauss_pdf(a, 0.0, lam2)
        + log_gauss_pdf(b, 0.0, sh2 + ss),
        _log_or_neginf(prior.eps3) + log_gauss_pdf(m3 - a, 0.0, v3)
        + log_gauss_pdf(b, 0.0, sh2 + ss),
        _log_or_neginf(prior.eps4) + log_gauss_pdf(a, 0.0, ss + lam2)
        + log_gauss_pdf(b, 0.0, sh2),
    ])
    log_s = logsumexp(log_t, axis=0)
    w = np.exp(log_t - log_s)

    g = np.stack([
        -a / lam2,
        -a / lam2,
        (m3 - a) / v3,
        -a / (ss + lam2),
    ])
    g_bar = np.sum(w * g, axis=0)

    eta_val = w[2] * e3 + w[3] * e4
    eta_der = (w[2] * ((g[2] - g_bar) * e3 + e3p)
               + w[3] * ((g[3] - g_bar) * e4 + e4p))
    return eta_val, eta_der


def _two_case_weight(log_other, log_this):
    """exp(log_this) / (exp(log_other) + exp(log_this)), 0 if both vanish."""
    tot = np.logaddexp(log_other, log_this)
    with np.errstate(invalid="ignore"):
        w = np.where(np.isneginf(tot), 0.0, expit(log_this - log_other))
    return w


def _bdd_exact_si(prior: BddPrior, lam2, a, b):
    """Limit of the BDD denoiser when the SI observes x_prev exactly."""
    ss = prior.sigma_s_sq
    s2 = prior.sigma_sq
    rho = prior.rho

    # b == 0: x_prev was zero, so only stay-zero (1) and birth (4) compete.
    lt1 = _log_or_neginf(prior.eps1) + log_gauss_pdf(a, 0.0, lam2)
    lt4 = _log_or_neginf(prior.eps4) + log_gauss_pdf(a, 0.0, ss + lam2)
    w4 = _two_case_weight(lt1, lt4)
    e4 = ss * a / (ss + lam2)
    g1 = -a / lam2
    g4 = -a / (ss + lam2)
    eta_zero = w4 * e4
    der_zero = w4 * (1.0 - w4) * (g4 - g1) * e4 + w4 * ss / (ss + lam2)

    # b != 0: x_prev = b, so only death (2) and drift (3) compete.
    lt2 = _log_or_neginf(prior.eps2) + log_gauss_pdf(a, 0.0, lam2)
    lt3 = _log_or_neginf(prior.eps3) + log_gauss_pdf(a - rho * b, 0.0, s2 + lam2)
    w3 = _two_case_weight(lt2, lt3)
    e3 = rho * b + s2 * (a - rho * b) / (s2 + lam2)
    g2 = -a / lam2
    g3 = -(a - rho * b) / (s2 + lam2)
    eta_nz = w3 * e3
    der_nz = w3 * (1.0 - w3) * (g3 - g2) * e3 + w3 * s2 / (s2 + lam2)

    mask = b == 0.0
    return np.where(mask, eta_zero, eta_nz), np.where(mask, der_zero, der_nz)


def eta_bdd(ctx: DenoiserContext, a, b):
    """Conditional-mean denoiser for the birth/death/drift pair model."""
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(a + 0.0, scalar)
    if ctx.sigma_hat_sq < TINY_VAR:
        return _ret(_bdd_exact_si(ctx.prior, ctx.lambda_sq, a, b)[0], scalar)
    val = _bdd_eval(ctx.prior, ctx.lambda_sq, ctx.sigma_hat_sq, a, b)[0]
    return _ret(val, scalar)


def eta_bdd_prime(ctx: DenoiserContext, a, b):
    """d/da of eta_bdd."""
    a, b, scalar = _as_arrays(a, b)
    if ctx.lambda_sq < TINY_VAR:
        return _ret(np.ones_like(a), scalar)
    if ctx.sigma_hat_sq < TINY_VAR:
        return _ret(_bdd_exact_si(ctx.prior, ctx.lambda_sq, a, b)[1], scalar)
    der = _bdd_eval(ctx.prior, ctx.lambda_sq, ctx.sigma_hat_sq, a, b)[1]
    return _ret(der, scalar)


# ---------------------------------------------------------------------------
# no-SI denoisers (plain AMP)


def _sparse_gauss_no_si(eps, var, lam2, a):
    """(eta, eta_prime) for a zero w.p. 1-eps / N(0, var) prior, no SI."""
    a = np.asarray(a, dtype=float)
    if lam2 < TINY_VAR:
        return a + 0.0, np.ones_like(a)
    log_w0 = _log_or_neginf(1.0 - eps) + log_gauss_pdf(a, 0.0, lam2)
    log_w1 = _log_or_neginf(eps) + log_gauss_pdf(a, 0.0, var + lam2)
    w = expit(log_w1 - log_w0)
    e_nz = a * var / (var + lam2)
    g0 = -a / lam2
    g1 = -a / (var + lam2)
    eta_val = w * e_nz
    eta_der = w * (1.0 - w) * (g1 - g0) * e_nz + w * var / (var + lam2)
    return eta_val, eta_der


def eta_bg_no_si(prior: BgPrior, lambda_sq, a):
    """Bernoulli-Gauss conditional mean without side information."""
    a_arr = np.asarray(a, dtype=float)
    scalar = a_arr.ndim == 0
    val = _sparse_gauss_no_si(prior.epsilon, 1.0, lambda_sq, a_arr)[0]
    return _ret(val, scalar)


def eta_bg_no_si_prime(prior: BgPrior, lambda_sq, a):
    """d/da of eta_bg_no_si."""
    a_arr = np.asarray(a, dtype=float)
    scalar = a_arr.ndim == 0
    der = _sparse_gauss_no_si(prior.epsilon, 1.0, lambda_sq, a_arr)[1]
    return _ret(der, scalar)


def _no_si_eval(prior, lambda_sq, a):
    if isinstance(prior, BgPrior):
        return _sparse_gauss_no_si(prior.epsilon, 1.0, lambda_sq, a)
    if isinstance(prior, BddPrior):
        # stationary marginal of a batch: sparse Gaussian with the BDD stats
        return _sparse_gauss_no_si(prior.gamma, prior.sigma_s_sq, lambda_sq, a)
    if isinstance(prior, GgPrior):
        a = np.asarray(a, dtype=float)
        if lambda_sq < TINY_VAR:
            return a + 0.0, np.ones_like(a)
        sx = prior.sigma_x_sq
        return a * sx / (sx + lambda_sq), np.full_like(a, sx / (sx + lambda_sq))
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def eta_no_si(prior, lambda_sq, a):
    """Conditional mean E[X | X + lam*Z = a] under the prior's signal marginal."""
    a_arr = np.asarray(a, dtype=float)
    scalar = a_arr.ndim == 0
    return _ret(_no_si_eval(prior, lambda_sq, a_arr)[0], scalar)


def eta_no_si_prime(prior, lambda_sq, a):
    """d/da of eta_no_si."""
    a_arr = np.asarray(a, dtype=float)
    scalar = a_arr.ndim == 0
    return _ret(_no_si_eval(prior, lambda_sq, a_arr)[1], scalar)


# ---------------------------------------------------------------------------
# dispatch


_ETA = {BgPrior: eta_bg, BddPrior: eta_bdd, GgPrior: eta_gg}
_ETA_PRIME = {BgPrior: eta_bg_prime, BddPrior: eta_bdd_prime, GgPrior: eta_gg_prime}


def eta(ctx: DenoiserContext, a, b):
    """Model-dispatching conditional-mean denoiser."""
    return _ETA[type(ctx.prior)](ctx, a, b)


def eta_prime(ctx: DenoiserContext, a, b):
    """Model-dispatching derivative of eta with respect to a."""
    return _ETA_PRIME[type(ctx.prior)](ctx, a, b)

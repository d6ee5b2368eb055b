"""Independent MMSE oracles for validating the closed-form denoisers.

Nothing in here reuses the denoiser algebra: posterior means are computed by
adaptive quadrature against the raw likelihood-times-prior integrand, or by
self-normalized importance sampling from the prior.  The golden values frozen
into the test suite are produced by this module (see ``golden_cases`` and the
``oracle-check`` CLI subcommand).
"""

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .gaussian import log_gauss_pdf
from .models import (BddPrior, BgPrior, GgPrior, sample_bdd_pair,
                     sample_bg, sample_gg)

GOLDEN_PATH = Path(__file__).parent / "data" / "denoiser_golden.csv"


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge to the requested tolerance."""


class UnreliableEstimateError(RuntimeError):
    """Importance-sampling effective sample size too small to trust."""


def _gauss_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _quad_window(centers, widths, spread=12.0):
    lo = min(c - spread * w for c, w in zip(centers, widths))
    hi = max(c + spread * w for c, w in zip(centers, widths))
    pts = sorted(c for c in centers if lo < c < hi)
    return lo, hi, pts


def _quad(f, lo, hi, pts):
    val, err = integrate.quad(f, lo, hi, points=pts or None,
                              epsabs=1e-14, epsrel=1e-11, limit=300)
    if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureError(
            f"quadrature error estimate {err:.2e} too large over [{lo:.2f}, {hi:.2f}]")
    return val


def _quad_scaled_moments(log_cont, lo, hi, pts):
    """Zeroth and first moments of exp(log_cont) over [lo, hi], rescaled.

    A dense scan locates the integrand's peak; adaptive quadrature then runs
    on exp(log_cont - peak) so far-tail cases, where the raw density
    underflows, keep full relative accuracy.  Returns (i0, i1, log_scale)
    with the true moments equal to i0, i1 times exp(log_scale).
    """
    xs = np.linspace(lo, hi, 8001)
    logs = log_cont(xs)
    j = int(np.argmax(logs))
    k = float(logs[j])
    mode = float(xs[j])
    if lo < mode < hi:
        pts = sorted(set(list(pts) + [mode]))
    i0 = _quad(lambda x: np.exp(log_cont(x) - k), lo, hi, pts)
    i1 = _quad(lambda x: x * np.exp(log_cont(x) - k), lo, hi, pts)
    return i0, i1, k


def oracle_posterior_mean_quadrature(prior, lambda_sq, sigma_hat_sq, a, b):
    """E[X | X + lam*Z1 = a, X + hat*Z2 = b] by adaptive quadrature.

    Supports BgPrior (point mass at zero handled exactly, continuous part
    integrated) and GgPrior.  Scalar a, b only.
    """
    if lambda_sq <= 0 or sigma_hat_sq <= 0:
        raise ValueError("oracle requires strictly positive noise variances")
    a = float(a)
    b = float(b)

    def log_likelihood(x):
        return (log_gauss_pdf(a, x, lambda_sq)
                + log_gauss_pdf(b, x, sigma_hat_sq))

    if isinstance(prior, BgPrior):
        eps = prior.epsilon

        def log_cont(x):
            return log_likelihood(x) + log_gauss_pdf(x, 0.0, 1.0)

        lo, hi, pts = _quad_window(
            [0.0, a, b], [1.0, np.sqrt(lambda_sq), np.sqrt(sigma_hat_sq)])
        i0, i1, k = _quad_scaled_moments(log_cont, lo, hi, pts)
        # same scale for the atom at zero; log_likelihood(0) - k is bounded
        # above by -log N(0; 0, 1), so the exp never overflows
        spike = (1.0 - eps) * np.exp(float(log_likelihood(0.0)) - k)
        return eps * i1 / (spike + eps * i0)

    if isinstance(prior, GgPrior):
        sx = np.sqrt(prior.sigma_x_sq)

        def log_cont(x):
            return log_likelihood(x) + log_gauss_pdf(x, 0.0, prior.sigma_x_sq)

        lo, hi, pts = _quad_window(
            [0.0, a, b], [sx, np.sqrt(lambda_sq), np.sqrt(sigma_hat_sq)])
        i0, i1, _ = _quad_scaled_moments(log_cont, lo, hi, pts)
        return i1 / i0

    raise TypeError(f"quadrature oracle does not support {type(prior).__name__}")


def oracle_posterior_mean_no_si(prior, lambda_sq, a):
    """E[X | X + lam*Z = a] by adaptive quadrature (no side information)."""
    if lambda_sq <= 0:
        raise ValueError("oracle requires a strictly positive noise variance")
    a = float(a)

    spike_slab = None
    if isinstance(prior, BgPrior):
        spike_slab = (prior.epsilon, 1.0)
    elif isinstance(prior, BddPrior):
        # the stationary marginal of the chain is sparse Gauss
        spike_slab = (prior.gamma, prior.sigma_s_sq)
    if spike_slab is not None:
        eps, var = spike_slab

        def log_cont(x):
            return log_gauss_pdf(a, x, lambda_sq) + log_gauss_pdf(x, 0.0, var)

        lo, hi, pts = _quad_window([0.0, a], [np.sqrt(var), np.sqrt(lambda_sq)])
        i0, i1, k = _quad_scaled_moments(log_cont, lo, hi, pts)
        spike = (1.0 - eps) * np.exp(float(log_gauss_pdf(a, 0.0, lambda_sq)) - k)
        return eps * i1 / (spike + eps * i0)

    if isinstance(prior, GgPrior):

        def log_cont(x):
            return (log_gauss_pdf(a, x, lambda_sq)
                    + log_gauss_pdf(x, 0.0, prior.sigma_x_sq))

        lo, hi, pts = _quad_window(
            [0.0, a], [np.sqrt(prior.sigma_x_sq), np.sqrt(lambda_sq)])
        i0, i1, _ = _quad_scaled_moments(log_cont, lo, hi, pts)
        return i1 / i0

    raise TypeError(f"quadrature oracle does not support {type(prior).__name__}")


@dataclass
class McEstimate:
    """Self-normalized importance-sampling estimate with its diagnostics."""

    value: float
    stderr: float
    ess: float
    samples: int


def _draw_signal_and_reference(prior, m, seed):
    """Sample (signal, SI reference) pairs from the prior's joint law.

    For the chained model the reference is the previous-batch signal; for the
    one-shot priors the side information observes the signal itself.
    """
    if isinstance(prior, BddPrior):
        pair = sample_bdd_pair(prior, m, seed=seed)
        return pair.x, pair.x_prev
    if isinstance(prior, BgPrior):
        x = sample_bg(prior, m, seed=seed)
    elif isinstance(prior, GgPrior):
        x = sample_gg(prior, m, seed=seed)
    else:
        raise TypeError(f"MC oracle does not support {type(prior).__name__}")
    return x, x


def oracle_posterior_mean_mc(prior, lambda_sq, sigma_hat_sq, a, b,
                             samples=10**6, seed=0, chunk=2 * 10**6,
                             min_ess=100.0):
    """E[X | pseudo=a, si=b] by self-normalized importance sampling.

    Draws (signal, reference) pairs from the prior and weights by the two
    observation likelihoods.  Accumulation is streamed in chunks with a
    running log-scale so the weights never overflow.  Raises
    UnreliableEstimateError when the effective sample size drops below
    ``min_ess``.
    """
    if lambda_sq <= 0 or sigma_hat_sq <= 0:
        raise ValueError("oracle requires strictly positive noise variances")
    a = float(a)
    b = float(b)
    ss = np.random.SeedSequence(seed)
    remaining = int(samples)
    # running accumulators, all relative to exp(offset)
    offset = -np.inf
    s_w = s_wx = s_w2 = s_w2x = s_w2x2 = 0.0

    while remaining > 0:
        m = min(remaining, int(chunk))
        remaining -= m
        child = ss.spawn(1)[0]
        x, ref = _draw_signal_and_reference(prior, m, seed=child)
        logw = (log_gauss_pdf(a, x, lambda_sq)
                + log_gauss_pdf(b, ref, sigma_hat_sq))
        cmax = float(np.max(logw))
        if cmax > offset:
            scale = np.exp(offset - cmax) if np.isfinite(offset) else 0.0
            s_w, s_wx = s_w * scale, s_wx * scale
            s_w2, s_w2x, s_w2x2 = (s_w2 * scale**2, s_w2x * scale**2,
                                   s_w2x2 * scale**2)
            offset = cmax
        w = np.exp(logw - offset)
        s_w += float(np.sum(w))
        s_wx += float(np.sum(w * x))
        w2 = w * w
        s_w2 += float(np.sum(w2))
        s_w2x += float(np.sum(w2 * x))
        s_w2x2 += float(np.sum(w2 * x**2))

    if s_w <= 0:
        raise UnreliableEstimateError("all importance weights underflowed")
    ess = s_w**2 / s_w2
    if ess < min_ess:
        raise UnreliableEstimateError(
            f"effective sample size {ess:.1f} below {min_ess}")
    mu = s_wx / s_w
    var = (s_w2x2 - 2.0 * mu * s_w2x + mu**2 * s_w2) / s_w**2
    return McEstimate(value=mu, stderr=float(np.sqrt(max(var, 0.0))),
                      ess=float(ess), samples=int(samples))


def oracle_joint_density(a, b, rho, sigma_x_sq, sigma_a_sq, sigma_b_sq):
    """Joint density of (A, B) = (rho*X + W_a, X + W_b) by quadrature over X."""
    if rho == 0:
        raise ValueError("rho must be nonzero")
    a = float(a)
    b = float(b)

    def integrand(x):
        return (_gauss_pdf(x, 0.0, sigma_x_sq)
                * _gauss_pdf(b, x, sigma_b_sq)
                * _gauss_pdf(a, rho * x, sigma_a_sq))

    lo, hi, pts = _quad_window(
        [0.0, b, a / rho],
        [np.sqrt(sigma_x_sq), np.sqrt(sigma_b_sq), np.sqrt(sigma_a_sq) / abs(rho)])
    return _quad(integrand, lo, hi, pts)


# ---------------------------------------------------------------------------
# golden file: oracle values frozen for the closed-form denoiser examples


def params_hash(params: dict) -> str:
    """Stable short hash of a parameter dictionary."""
    blob = json.dumps(params, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def golden_cases():
    """The denoiser spot-check configurations whose oracle values are frozen.

    Each entry: (name, params, a, b, method, samples).
    """
    bdd_params = dict(eps1=0.80, eps2=0.01, eps3=0.18, eps4=0.01,
                      sigma_s_sq=1.0, rho=0.95)
    return [
        ("bg", dict(epsilon=0.3, lambda_sq=0.25, sigma_hat_sq=0.01),
         1.0, 0.9, "quadrature", 0),
        ("gg", dict(sigma_x_sq=1.0, lambda_sq=1.0, sigma_hat_sq=1.0),
         1.0, 1.0, "quadrature", 0),
        ("bdd", dict(lambda_sq=0.5, sigma_hat_sq=0.2, **bdd_params),
         1.2, 0.8, "importance", 10**7),
        ("bg_no_si", dict(epsilon=0.3, lambda_sq=1.0),
         2.0, float("nan"), "quadrature", 0),
    ]


def _evaluate_golden_case(name, params, a, b, method, samples, seed=20240):
    if name == "bg":
        prior = BgPrior(params["epsilon"])
        val = oracle_posterior_mean_quadrature(
            prior, params["lambda_sq"], params["sigma_hat_sq"], a, b)
        return val, 0.0
    if name == "gg":
        prior = GgPrior(params["sigma_x_sq"])
        val = oracle_posterior_mean_quadrature(
            prior, params["lambda_sq"], params["sigma_hat_sq"], a, b)
        return val, 0.0
    if name == "bg_no_si":
        prior = BgPrior(params["epsilon"])
        return oracle_posterior_mean_no_si(prior, params["lambda_sq"], a), 0.0
    if name == "bdd":
        prior = BddPrior(params["eps1"], params["eps2"], params["eps3"],
                         params["eps4"], params["sigma_s_sq"], params["rho"])
        est = oracle_posterior_mean_mc(
            prior, params["lambda_sq"], params["sigma_hat_sq"], a, b,
            samples=samples, seed=seed)
        return est.value, est.stderr
    raise ValueError(f"unknown golden case {name}")


def write_golden(path=GOLDEN_PATH, seed=20240):
    """Recompute all golden oracle values and write the CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, params, a, b, method, samples in golden_cases():
        val, stderr = _evaluate_golden_case(name, params, a, b, method,
                                            samples, seed=seed)
        rows.append([name, params_hash(params), f"{float(a)!r}",
                     f"{float(b)!r}", f"{float(val)!r}", f"{float(stderr)!r}",
                     method, samples])
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "params_hash", "a", "b", "oracle_value",
                         "stderr", "method", "samples"])
        writer.writerows(rows)
    tmp.replace(path)
    return path


def read_golden(path=GOLDEN_PATH):
    """Load the golden CSV into a list of dict rows."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def verify_golden(path=GOLDEN_PATH, seed=20240):
    """Recompute each golden row and check it matches the stored value.

    Quadrature rows must agree to 1e-10 absolute / 1e-9 relative; importance
    rows to 3 recomputed standard errors.  Returns a list of (name, ok,
    detail) triples.
    """
    stored = {r["model"]: r for r in read_golden(path)}
    results = []
    for name, params, a, b, method, samples in golden_cases():
        row = stored.get(name)
        if row is None:
            results.append((name, False, "missing from golden file"))
            continue
        if row["params_hash"] != params_hash(params):
            results.append((name, False, "parameter hash mismatch"))
            continue
        val, stderr = _evaluate_golden_case(name, params, a, b, method,
                                            samples, seed=seed)
        val = float(val)
        ref = float(row["oracle_value"])
        if method == "quadrature":
            ok = abs(val - ref) <= 1e-10 + 1e-9 * abs(ref)
            detail = f"recomputed {val!r} vs stored {ref!r}"
        else:
            tol = 3.0 * max(stderr, float(row["stderr"]))
            ok = abs(val - ref) <= tol
            detail = f"recomputed {val!r} vs stored {ref!r} (tol {tol:.2e})"
        results.append((name, bool(ok), detail))
    return results

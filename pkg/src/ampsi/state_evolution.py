"""State evolution: the scalar recursion tracking AMP's effective noise.

The recursion is

    lambda_0^2     = sigma_z^2 + E[X^2] / delta
    lambda_{t+1}^2 = sigma_z^2 + (1/delta) * E[(eta_t(X + lambda_t*Z1, B) - X)^2]

with B the side information (for the pair model: the previous-batch value
observed through AWGN), Z1 independent of everything else.  Expectations are
Monte-Carlo estimates; each step reports its standard error.  The per-entry
MSE predicted for the iterate entering step t is delta*(lambda_t^2 -
sigma_z^2).

Per-step RNG streams are derived from the seed and the step index only, so
two calls that share a seed see common random numbers step for step (useful
for smooth phase diagrams and tight arm-to-arm comparisons).
"""

from dataclasses import dataclass

import numpy as np

from .denoisers import DenoiserContext, eta, eta_no_si
from .gaussian import matched_filter_var
from .models import (BddPrior, BgPrior, GgPrior, SiChannel, sample_bdd_pair,
                     signal_second_moment)

_DECAY_FLOOR = 1e-14


@dataclass
class SeTrace:
    """State-evolution trajectory.

    lambda_sq_seq[t] is lambda_t^2 (index 0 is the analytic initialization);
    stderr_seq[t] is the Monte-Carlo standard error of that entry (0 at t=0).
    fixed_point is the final value when the iteration converged, else None.
    """

    lambda_sq_seq: np.ndarray
    stderr_seq: np.ndarray
    converged: bool
    fixed_point: float | None
    mc_samples: int

    def mse_seq(self, delta, sigma_z_sq):
        """Predicted per-entry MSE sequence delta*(lambda_t^2 - sigma_z^2)."""
        return delta * (self.lambda_sq_seq - sigma_z_sq)


@dataclass(frozen=True)
class EffectiveChannel:
    """No-SI channel whose state evolution replicates an AMP-SI fixed point."""

    delta_eff: float
    sigma_eff_sq: float
    mu: float


def lambda_init_sq(prior, delta, sigma_z_sq):
    """Analytic initialization sigma_z^2 + E[X^2]/delta."""
    return sigma_z_sq + signal_second_moment(prior) / delta


def _draw_signal_and_base(prior, mc, rng):
    """Sample the target X and the SI reference it is paired with."""
    if isinstance(prior, BgPrior):
        u = rng.random(mc)
        g = rng.standard_normal(mc)
        x = np.where(u < prior.epsilon, g, 0.0)
        return x, x
    if isinstance(prior, BddPrior):
        pair = sample_bdd_pair(prior, mc, seed=rng)
        return pair.x, pair.x_prev
    if isinstance(prior, GgPrior):
        x = np.sqrt(prior.sigma_x_sq) * rng.standard_normal(mc)
        return x, x
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def se_step(prior, si: SiChannel | None, lambda_sq_prev, delta, sigma_z_sq,
            mc=10**5, seed=None):
    """One state-evolution update; returns (lambda_sq_next, stderr)."""
    if lambda_sq_prev < 0:
        raise ValueError("lambda_sq_prev must be nonnegative")
    rng = np.random.default_rng(seed)
    x, base = _draw_signal_and_base(prior, mc, rng)
    if si is not None:
        z2 = rng.standard_normal(mc)
        b = base + np.sqrt(si.sigma_hat_sq) * z2
    z1 = rng.standard_normal(mc)
    a = x + np.sqrt(lambda_sq_prev) * z1

    if si is None:
        est = eta_no_si(prior, lambda_sq_prev, a)
    else:
        ctx = DenoiserContext(prior, lambda_sq_prev, si.sigma_hat_sq)
        est = eta(ctx, a, b)
    sq_err = (est - x) ** 2
    mean = float(np.mean(sq_err))
    stderr = float(np.std(sq_err, ddof=1)) / np.sqrt(mc)
    return sigma_z_sq + mean / delta, stderr / delta


def se_gaussian_si_step(prior, si: SiChannel, lambda_sq_prev, delta,
                        sigma_z_sq, mc=10**5, seed=None):
    """State-evolution step through the matched-filter reduction.

    Valid only when the SI observes the signal itself plus AWGN (BG or GG
    priors): the pair (pseudo, si) is then equivalent to one observation of X
    at noise level matched_filter_var(lambda^2, sigma_hat^2), and the update
    runs the no-SI denoiser at that reduced variance.
    """
    if isinstance(prior, BddPrior):
        raise TypeError(
            "matched-filter reduction needs SI of the form X + noise; "
            "the pair model's SI references the previous batch")
    if not isinstance(prior, (BgPrior, GgPrior)):
        raise TypeError(f"unsupported prior {type(prior).__name__}")
    rng = np.random.default_rng(seed)
    x, _ = _draw_signal_and_base(prior, mc, rng)
    reduced = matched_filter_var(lambda_sq_prev, si.sigma_hat_sq)
    z = rng.standard_normal(mc)
    u = x + np.sqrt(reduced) * z
    est = eta_no_si(prior, reduced, u)
    sq_err = (est - x) ** 2
    mean = float(np.mean(sq_err))
    stderr = float(np.std(sq_err, ddof=1)) / np.sqrt(mc)
    return sigma_z_sq + mean / delta, stderr / delta


def se_run(prior, si: SiChannel | None, delta, sigma_z_sq, t_max=30,
           mc=10**5, tol=0.0, seed=0, step=se_step):
    """Iterate state evolution from the analytic initialization.

    tol > 0 stops once |lambda_{t+1}^2 - lambda_t^2| falls below tol*lambda_t^2
    plus three Monte Carlo standard errors (the step difference can never
    resolve below the sampling noise of the expectation), or once the sequence
    decays to numerical zero, and marks the trace converged; tol = 0 runs
    exactly t_max steps.  ``step`` may be se_gaussian_si_step to run the
    matched-filter-reduced recursion instead.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if sigma_z_sq < 0:
        raise ValueError("sigma_z_sq must be nonnegative")
    ss = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    children = ss.spawn(t_max)
    lam = lambda_init_sq(prior, delta, sigma_z_sq)
    seq = [lam]
    errs = [0.0]
    converged = False
    for t in range(t_max):
        lam_next, stderr = step(prior, si, lam, delta, sigma_z_sq, mc=mc,
                                seed=children[t])
        seq.append(lam_next)
        errs.append(stderr)
        if tol > 0:
            gate = tol * max(lam, _DECAY_FLOOR) + 3.0 * stderr
            if abs(lam_next - lam) < gate or lam_next < _DECAY_FLOOR:
                lam = lam_next
                converged = True
                break
        lam = lam_next
    return SeTrace(
        lambda_sq_seq=np.array(seq),
        stderr_seq=np.array(errs),
        converged=converged,
        fixed_point=lam if converged else None,
        mc_samples=mc,
    )


def se_fixed_point(prior, si, delta, sigma_z_sq, mc=10**5, tol=1e-6,
                   t_max=200, seed=0):
    """Convenience wrapper: run to convergence, return (lambda_sq, stderr).

    Falls back to the last iterate (with a warning flag via converged) only
    through se_run; callers that must distinguish can inspect the trace.
    """
    trace = se_run(prior, si, delta, sigma_z_sq, t_max=t_max, mc=mc, tol=tol,
                   seed=seed)
    return float(trace.lambda_sq_seq[-1]), float(trace.stderr_seq[-1]), trace.converged


def gg_posterior_var(sigma_x_sq, lambda_sq, sigma_hat_sq=None):
    """Exact posterior variance of a Gaussian prior given its observations.

    One observation at noise lambda_sq, optionally a second at sigma_hat_sq.
    Used as the closed-form cross-check for the Monte-Carlo SE step.
    """
    prec = 1.0 / sigma_x_sq
    if lambda_sq > 0:
        prec += 1.0 / lambda_sq
    else:
        return 0.0
    if sigma_hat_sq is not None:
        if sigma_hat_sq > 0:
            prec += 1.0 / sigma_hat_sq
        else:
            return 0.0
    return 1.0 / prec


def effective_channel(delta, sigma_z_sq, sigma_hat_sq, lambda_fixed_sq):
    """Map an AMP-SI fixed point to the equivalent no-SI channel.

    With mu = sigma_hat^2 / (sigma_hat^2 + lambda^2), a no-SI problem at
    sampling ratio delta/mu and noise mu*sigma_z^2 has its state-evolution
    fixed point at matched_filter_var(lambda^2, sigma_hat^2).
    """
    tot = sigma_hat_sq + lambda_fixed_sq
    if tot <= 0:
        raise ValueError("sigma_hat_sq + lambda_fixed_sq must be positive")
    mu = sigma_hat_sq / tot
    if mu == 0:
        raise ValueError("exact SI (sigma_hat_sq = 0) has no effective channel")
    return EffectiveChannel(delta_eff=delta / mu, sigma_eff_sq=mu * sigma_z_sq,
                            mu=mu)


@dataclass
class PhaseGrid:
    """Fixed-point MSE surfaces over (delta, gamma) for a batch schedule."""

    deltas: np.ndarray
    gammas: np.ndarray
    batches: tuple
    mse: np.ndarray          # shape (len(batches), len(deltas), len(gammas))
    stderr: np.ndarray       # matching MC standard errors of the MSE entries
    lambda_fp: np.ndarray    # fixed-point lambda^2 per cell and batch


def _bdd_for_gamma(gamma, eps2, eps4, sigma_s_sq, rho):
    eps3 = gamma - eps4
    eps1 = 1.0 - eps2 - eps3 - eps4
    if eps3 < 0 or eps1 < 0:
        raise ValueError(f"gamma={gamma} infeasible with eps2={eps2}, eps4={eps4}")
    return BddPrior(eps1, eps2, eps3, eps4, sigma_s_sq, rho)


def phase_grid(delta_grid, gamma_grid, batches=(1, 3, 10), sigma_z=0.01,
               mc=2 * 10**4, seed=0, eps2=0.01, eps4=0.01, sigma_s_sq=1.0,
               rho=0.95, tol=1e-5, t_max=200):
    """Chain SE fixed points across batches over a (delta, gamma) grid.

    gamma = eps3 + eps4 is the stationary nonzero fraction; batch 1 runs the
    no-SI recursion and every later batch receives SI at the previous batch's
    fixed-point variance.  Seeds depend on (seed, batch, step) but not on the
    cell, giving common random numbers across the grid.
    """
    deltas = np.asarray(delta_grid, dtype=float)
    gammas = np.asarray(gamma_grid, dtype=float)
    batches = tuple(batches)
    max_batch = max(batches)
    sigma_z_sq = sigma_z**2
    mse = np.empty((len(batches), len(deltas), len(gammas)))
    stderr = np.empty_like(mse)
    lambda_fp = np.empty_like(mse)

    for gi, gamma in enumerate(gammas):
        prior = _bdd_for_gamma(gamma, eps2, eps4, sigma_s_sq, rho)
        for di, delta in enumerate(deltas):
            sigma_hat_sq = None
            for b in range(1, max_batch + 1):
                si = None if b == 1 else SiChannel(sigma_hat_sq)
                batch_seed = np.random.SeedSequence(entropy=seed,
                                                    spawn_key=(b,))
                trace = se_run(prior, si, delta, sigma_z_sq, t_max=t_max,
                               mc=mc, tol=tol, seed=batch_seed)
                lam = float(trace.lambda_sq_seq[-1])
                sigma_hat_sq = lam
                if b in batches:
                    k = batches.index(b)
                    mse[k, di, gi] = delta * (lam - sigma_z_sq)
                    stderr[k, di, gi] = delta * float(trace.stderr_seq[-1])
                    lambda_fp[k, di, gi] = lam
    return PhaseGrid(deltas=deltas, gammas=gammas, batches=batches, mse=mse,
                     stderr=stderr, lambda_fp=lambda_fp)

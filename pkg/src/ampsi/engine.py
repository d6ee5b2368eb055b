"""The AMP iteration, with and without side information.

Per iteration t (starting from x^0 = 0):

    r^t      = y - A x^t + (r^{t-1}/delta) * mean(eta'_{t-1}(pseudo^{t-1}, si))
    pseudo^t = x^t + A^T r^t
    x^{t+1}  = eta_t(pseudo^t, si)            (optionally damped, see below)

The correction term is omitted at t = 0.  The effective noise variance
lambda_t^2 handed to the denoiser is either the empirical residual energy
||r^t||^2 / m (default) or a precomputed state-evolution schedule.

Damping blends the previous iterate into the update,
x^{t+1} = beta*x^t + (1-beta)*eta_t(...), which stabilizes AMP on structured
(e.g. pilot-convolution) operators at the cost of slower convergence; the
fixed point is unchanged.  beta = 0 reproduces the undamped update exactly,
bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .denoisers import DenoiserContext, eta, eta_no_si, eta_no_si_prime, eta_prime
from .measurement import MeasurementOperator, Measurements


class AmpDivergenceError(RuntimeError):
    """AMP produced a non-finite iterate or a runaway residual."""

    def __init__(self, iteration, detail):
        super().__init__(f"AMP diverged at iteration {iteration}: {detail}")
        self.iteration = iteration


@dataclass
class AmpConfig:
    """Knobs for one AMP run."""

    max_iters: int = 30
    beta: float = 0.0                   # weight kept on the previous iterate
    lambda_mode: str = "empirical"      # "empirical" or "se"
    se_schedule: np.ndarray | None = None
    convergence_tol: float = 1e-6       # 0 disables early stopping
    divergence_factor: float = 1e6      # error if lambda^2 exceeds this * lambda_0^2

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.lambda_mode not in ("empirical", "se"):
            raise ValueError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.lambda_mode == "se" and self.se_schedule is None:
            raise ValueError("lambda_mode='se' requires se_schedule")


@dataclass
class AmpResult:
    """Outcome of an AMP run, including the per-iteration trace.

    Trace arrays are indexed by iteration t: lambda_sq[t] is the effective
    noise variance used at iteration t, pseudo_mse[t] = ||pseudo^t - x||^2/n,
    and mse[t] = ||x^{t+1} - x||^2/n (the error of the iterate produced at t).
    The MSE entries are NaN when no ground truth was supplied.
    """

    x_hat: np.ndarray
    final_pseudo: np.ndarray
    final_lambda_sq: float
    iterations: int
    converged: bool
    lambda_sq: np.ndarray = field(repr=False)
    mse: np.ndarray = field(repr=False)
    pseudo_mse: np.ndarray = field(repr=False)


def onsager_coeff(eta_prime_vals, delta):
    """Residual-correction coefficient: the empirical mean of eta' over delta."""
    return float(np.mean(eta_prime_vals)) / delta


def _run(op: MeasurementOperator, y, prior, cfg: AmpConfig, si, sigma_hat_sq,
         truth):
    y = y.y if isinstance(y, Measurements) else np.asarray(y, dtype=float)
    if y.shape != (op.m,):
        raise ValueError(f"y has shape {y.shape}, expected ({op.m},)")
    if si is not None:
        si = np.asarray(si, dtype=float)
        if si.shape != (op.n,):
            raise ValueError(f"si has shape {si.shape}, expected ({op.n},)")
        if sigma_hat_sq is None:
            raise ValueError("side information requires its channel variance")
    if truth is not None:
        truth = np.asarray(truth, dtype=float)

    n, m, delta = op.n, op.m, op.delta
    x = np.zeros(n)
    r_prev = None
    ons_mean_prev = 0.0
    lambda_ceiling = None

    lam_hist, mse_hist, pmse_hist = [], [], []
    converged = False
    pseudo = None
    lam2 = None

    for t in range(cfg.max_iters):
        r = y - op.apply(x)
        if t > 0:
            r = r + (r_prev / delta) * ons_mean_prev
        if not np.all(np.isfinite(r)):
            raise AmpDivergenceError(t, "non-finite residual")
        pseudo = x + op.apply_adjoint(r)
        if not np.all(np.isfinite(pseudo)):
            raise AmpDivergenceError(t, "non-finite pseudo-data")

        if cfg.lambda_mode == "se":
            sched = cfg.se_schedule
            lam2 = float(sched[min(t, len(sched) - 1)])
        else:
            lam2 = float(r @ r) / m
        if lambda_ceiling is None:
            lambda_ceiling = cfg.divergence_factor * max(lam2, 1e-300)
        elif lam2 > lambda_ceiling:
            raise AmpDivergenceError(
                t, f"effective noise variance {lam2:.3e} exceeded "
                f"{cfg.divergence_factor:.0e} times its starting value")

        if si is None:
            eta_vals = eta_no_si(prior, lam2, pseudo)
            eta_der = eta_no_si_prime(prior, lam2, pseudo)
        else:
            ctx = DenoiserContext(prior, lam2, sigma_hat_sq)
            eta_vals = eta(ctx, pseudo, si)
            eta_der = eta_prime(ctx, pseudo, si)

        if cfg.beta:
            x_new = cfg.beta * x + (1.0 - cfg.beta) * eta_vals
        else:
            x_new = eta_vals
        if not np.all(np.isfinite(x_new)):
            raise AmpDivergenceError(t, "non-finite iterate")

        lam_hist.append(lam2)
        if truth is not None:
            pmse_hist.append(float(np.sum((pseudo - truth) ** 2)) / n)
            mse_hist.append(float(np.sum((x_new - truth) ** 2)) / n)
        else:
            pmse_hist.append(np.nan)
            mse_hist.append(np.nan)

        ons_mean_prev = float(np.mean(eta_der))
        step = float(np.linalg.norm(x_new - x))
        ref = max(float(np.linalg.norm(x)), 1e-12)
        r_prev = r
        x = x_new
        if cfg.convergence_tol > 0 and step / ref < cfg.convergence_tol:
            converged = True
            break

    return AmpResult(
        x_hat=x,
        final_pseudo=pseudo,
        final_lambda_sq=lam2,
        iterations=len(lam_hist),
        converged=converged,
        lambda_sq=np.array(lam_hist),
        mse=np.array(mse_hist),
        pseudo_mse=np.array(pmse_hist),
    )


def amp_run(op: MeasurementOperator, y, prior, si, sigma_hat_sq,
            cfg: AmpConfig | None = None, truth=None):
    """Run AMP with side information.

    ``si`` is the SI vector (length n) and ``sigma_hat_sq`` its channel
    variance.  ``truth`` enables the MSE columns of the trace.
    """
    cfg = cfg or AmpConfig()
    if si is None:
        raise ValueError("amp_run requires side information; use run_no_si")
    return _run(op, y, prior, cfg, si, sigma_hat_sq, truth)


def run_no_si(op: MeasurementOperator, y, prior, cfg: AmpConfig | None = None,
              truth=None):
    """Run plain AMP (no side information) with the prior's marginal denoiser."""
    cfg = cfg or AmpConfig()
    return _run(op, y, prior, cfg, None, None, truth)

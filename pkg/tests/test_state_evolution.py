import numpy as np
import pytest

from ampsi.models import BddPrior, BgPrior, GgPrior, SiChannel
from ampsi.state_evolution import (effective_channel, gg_posterior_var,
                                   lambda_init_sq, phase_grid, se_fixed_point,
                                   se_gaussian_si_step, se_run, se_step)

BG = BgPrior(0.3)
GG = GgPrior(1.0)
BDD = BddPrior(0.80, 0.01, 0.18, 0.01, sigma_s_sq=1.0, rho=0.95)


def test_lambda_init():
    assert lambda_init_sq(BG, 0.3, 0.01) == pytest.approx(0.01 + 0.3 / 0.3)
    assert lambda_init_sq(GG, 0.5, 0.0) == pytest.approx(2.0)
    assert lambda_init_sq(BDD, 0.25, 0.04) == pytest.approx(
        0.04 + 0.19 / 0.25)


def test_se_step_reproducible_and_noisy():
    lam, err = se_step(BG, SiChannel(0.01), 1.0, 0.3, 0.01, mc=20_000,
                       seed=np.random.SeedSequence(1))
    lam2, err2 = se_step(BG, SiChannel(0.01), 1.0, 0.3, 0.01, mc=20_000,
                         seed=np.random.SeedSequence(1))
    assert lam == lam2 and err == err2
    assert err > 0
    lam3, _ = se_step(BG, SiChannel(0.01), 1.0, 0.3, 0.01, mc=20_000,
                      seed=np.random.SeedSequence(2))
    assert lam3 != lam
    assert abs(lam3 - lam) < 6 * err


def test_gg_recursion_matches_analytic():
    # for a Gaussian signal the next-noise map has a closed form via the
    # posterior variance, so the Monte Carlo step must agree with it
    delta, sz, sh = 0.5, 0.01, 0.09
    lam = lambda_init_sq(GG, delta, sz)
    for _ in range(4):
        want = sz + gg_posterior_var(1.0, lam, sh) / delta
        got, err = se_step(GG, SiChannel(sh), lam, delta, sz, mc=200_000,
                           seed=np.random.SeedSequence(7))
        assert got == pytest.approx(want, abs=5 * err)
        lam = want
    assert gg_posterior_var(1.0, 0.5) == pytest.approx(1 / (1 + 2))


def test_matched_filter_step_agrees_for_gaussian_si():
    lam, err = se_step(GG, SiChannel(0.2), 0.8, 0.4, 0.01, mc=150_000,
                       seed=np.random.SeedSequence(3))
    lam_mf, err_mf = se_gaussian_si_step(GG, SiChannel(0.2), 0.8, 0.4, 0.01,
                                         mc=150_000,
                                         seed=np.random.SeedSequence(4))
    assert lam == pytest.approx(lam_mf, abs=5 * (err + err_mf))
    with pytest.raises(TypeError):
        se_gaussian_si_step(BDD, SiChannel(0.2), 0.8, 0.4, 0.01)


def test_se_run_trace_and_convergence():
    trace = se_run(BG, SiChannel(0.01), 0.3, 0.01, t_max=50, mc=30_000,
                   tol=1e-6, seed=5)
    assert trace.converged
    assert trace.fixed_point is not None
    assert len(trace.lambda_sq_seq) == len(trace.stderr_seq)
    assert trace.lambda_sq_seq[0] == pytest.approx(1.01)
    # noise variances decrease toward the fixed point from above
    assert trace.lambda_sq_seq[1] < trace.lambda_sq_seq[0]
    mse = trace.mse_seq(0.3, 0.01)
    np.testing.assert_allclose(mse, 0.3 * (trace.lambda_sq_seq - 0.01))


def test_se_run_fixed_length_when_tol_zero():
    trace = se_run(BG, None, 0.3, 0.01, t_max=7, mc=10_000, tol=0.0, seed=6)
    assert len(trace.lambda_sq_seq) == 8
    assert not trace.converged


def test_se_fixed_point_wrapper():
    lam, err, converged = se_fixed_point(BG, SiChannel(0.01), 0.3, 0.01,
                                         mc=30_000, tol=1e-5, seed=8)
    assert converged
    assert lam > 0.01  # can never beat the measurement-noise floor
    assert err >= 0


def test_effective_channel_fields():
    eff = effective_channel(0.3, 0.01, 0.04, 0.36)
    mu = 0.04 / (0.04 + 0.36)
    assert eff.mu == pytest.approx(mu)
    assert eff.delta_eff == pytest.approx(0.3 / mu)
    assert eff.sigma_eff_sq == pytest.approx(mu * 0.01)


def test_no_si_run_matches_si_with_infinite_noise():
    # enormous side-information noise must reduce to the no-SI recursion
    t1 = se_run(BG, None, 0.4, 0.01, t_max=6, mc=150_000, tol=0.0, seed=9)
    t2 = se_run(BG, SiChannel(1e12), 0.4, 0.01, t_max=6, mc=150_000, tol=0.0,
                seed=9)
    np.testing.assert_allclose(t1.lambda_sq_seq, t2.lambda_sq_seq, rtol=0.03)


def test_phase_grid_shapes_and_monotonicity():
    grid = phase_grid((0.4, 0.8), (0.2, 0.4), batches=(1, 2), sigma_z=0.05,
                      mc=8_000, seed=10, tol=1e-4, t_max=80)
    assert grid.mse.shape == (2, 2, 2)
    assert np.all(np.isfinite(grid.mse))
    # more batches of side information never hurt the fixed point
    slack = 4 * np.max(grid.stderr)
    assert np.all(grid.mse[1] <= grid.mse[0] + slack)
    # easier sampling ratios recover better at fixed sparsity
    assert np.all(grid.mse[:, 1, :] <= grid.mse[:, 0, :] + slack)


def test_validation():
    with pytest.raises(ValueError):
        se_run(BG, None, 0.0, 0.01)
    with pytest.raises(ValueError):
        se_run(BG, None, 0.3, -0.1)

"""Experiment drivers: multi-trial recovery runs, batch chains, and tables.

Each driver takes an ExperimentConfig (usually from a preset plus overrides),
runs its trials, and returns an in-memory result object.  When ``out_dir`` is
given it also writes a CSV of the headline numbers plus a JSON manifest
recording the exact config, its hash, the seed scheme, library versions, and
wall-clock timings.  Identical config and seed give byte-identical CSVs.

Seed scheme: every random object is drawn from a generator seeded by
SeedSequence(entropy=cfg.seed, spawn_key=(trial, stream, batch)) where stream
is 0 = signal chain, 1 = measurement operator, 2 = measurement noise,
3 = side-information channel.  Trials are therefore independent of worker
count and schedule.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy

from .engine import AmpConfig, AmpDivergenceError, amp_run, run_no_si
from .measurement import make_dense, make_toeplitz, measure
from .models import (BddPrior, BgPrior, GgPrior, SiChannel, make_si,
                     sample_bdd_stationary, sample_bdd_step, sample_bg,
                     signal_second_moment)
from .oracle import params_hash
from .state_evolution import SeTrace, phase_grid, se_fixed_point, se_run


class ExperimentError(RuntimeError):
    """An experiment could not produce trustworthy aggregates."""


@dataclass
class ExperimentConfig:
    """Flat bag of experiment settings; presets fill in per-experiment values."""

    experiment: str = "fig4"
    seed: int = 1234
    trials: int = 20
    workers: int = 1
    out_dir: str = "results"
    # problem geometry
    n: int = 10000
    m: int = 3000
    pilot_len: int = 1001
    # priors
    prior: str = "bg"            # for the se subcommand
    epsilon: float = 0.3
    sigma_x_sq: float = 1.0
    eps1: float = 0.80
    eps2: float = 0.01
    eps3: float = 0.18
    eps4: float = 0.01
    sigma_s_sq: float = 1.0
    rho: float = 0.95
    # channels
    sigma_z: float = 0.1
    sigma_hat: float = 0.1
    snr_sigmas: tuple = (0.01, 0.1, 1.0)
    # engine
    max_iters: int = 30
    beta: float = 0.0
    convergence_tol: float = 0.0
    # batches
    batches: int = 15
    # iid arm of the batch-5 comparison table
    iid_m: int = 5000
    iid_max_iters: int = 100
    iid_tol: float = 1e-8
    # state evolution
    se_mc: int = 2 * 10**5
    se_tol: float = 1e-7
    se_t_max: int = 200
    # phase grid
    deltas: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    gammas: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    phase_batches: tuple = (1, 3, 10)
    phase_mc: int = 2 * 10**4
    # reporting
    mse_normalization: str = "per_n"   # dB tables: "per_n" or "per_energy"

    def __post_init__(self):
        if self.mse_normalization not in ("per_n", "per_energy"):
            raise ValueError(
                f"unknown mse_normalization {self.mse_normalization!r}")


PRESETS = {
    "fig4": dict(n=10000, m=3000, trials=20, epsilon=0.3, sigma_z=0.1,
                 sigma_hat=0.1, max_iters=30, beta=0.0, convergence_tol=0.0),
    "fig5": dict(n=10000, m=3000, trials=20, batches=15, sigma_z=0.077,
                 eps1=0.80, eps2=0.01, eps3=0.18, eps4=0.01, sigma_s_sq=1.0,
                 rho=0.95, max_iters=30, beta=0.0, convergence_tol=0.0),
    "channel": dict(n=4000, pilot_len=1001, trials=50, batches=5,
                    eps1=0.78, eps2=0.01, eps3=0.20, eps4=0.01,
                    sigma_s_sq=1.0, rho=0.95, beta=0.9, max_iters=300,
                    convergence_tol=1e-10, snr_sigmas=(0.01, 0.1, 1.0)),
    "table2": dict(n=4000, pilot_len=1001, trials=50, batches=5,
                   eps1=0.78, eps2=0.01, eps3=0.20, eps4=0.01,
                   sigma_s_sq=1.0, rho=0.95, beta=0.9, max_iters=300,
                   convergence_tol=1e-10, snr_sigmas=(0.01, 0.1, 1.0),
                   iid_m=5000, iid_max_iters=100, iid_tol=1e-8),
    "phase": dict(sigma_z=0.01, eps2=0.01, eps4=0.01, rho=0.95,
                  sigma_s_sq=1.0, deltas=(0.1, 0.3, 0.5, 0.7, 0.9),
                  gammas=(0.1, 0.3, 0.5, 0.7, 0.9),
                  phase_batches=(1, 3, 10)),
    "se": dict(prior="bg", epsilon=0.3, sigma_z=0.1, sigma_hat=0.1,
               max_iters=30),
    "oracle-check": dict(),
}


def preset_config(experiment):
    """Default configuration for one of the named experiments."""
    if experiment not in PRESETS:
        raise ValueError(f"unknown experiment {experiment!r}")
    return ExperimentConfig(experiment=experiment, **PRESETS[experiment])


def _coerce(raw: str, default):
    """Parse a config-file/flag string into the type of the field default."""
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        elem = default[0] if default else 1.0
        return tuple(int(p) if isinstance(elem, int) else float(p)
                     for p in parts)
    return raw


def load_config_file(path):
    """Read a flat ``key = value`` file (# comments allowed) into a dict."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            out[key] = raw
    return out


def apply_overrides(cfg: ExperimentConfig, overrides: dict):
    """Apply string-valued config overrides, coercing to each field's type."""
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    parsed = {}
    for key, raw in overrides.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        parsed[key] = _coerce(raw, known[key]) if isinstance(raw, str) else raw
    return replace(cfg, **parsed)


# ---------------------------------------------------------------------------
# output helpers


def _stream_seed(base_seed, trial, stream, batch=0):
    return np.random.SeedSequence(entropy=base_seed,
                                  spawn_key=(trial, stream, batch))


def config_hash(cfg: ExperimentConfig):
    return params_hash(asdict(cfg))


def _atomic_write(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows):
    """Write rows of numbers/strings as CSV, atomically and reproducibly."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            repr(v) if isinstance(v, float) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path, cfg: ExperimentConfig, timings, outputs, extra=None):
    doc = {
        "experiment": cfg.experiment,
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "seed_scheme": "SeedSequence(entropy=seed, spawn_key=(trial, stream, "
                       "batch)); streams: 0=signal 1=operator 2=noise 3=si",
        "versions": {
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timings_sec": timings,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _map_trials(fn, cfg, n_trials):
    """Run fn(cfg, t) per trial, catching divergence; fail if >10% diverge."""
    results = [None] * n_trials
    failures = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            futs = {ex.submit(fn, cfg, t): t for t in range(n_trials)}
            for fut in futs:
                t = futs[fut]
                try:
                    results[t] = fut.result()
                except AmpDivergenceError as err:
                    failures.append((t, str(err)))
    else:
        for t in range(n_trials):
            try:
                results[t] = fn(cfg, t)
            except AmpDivergenceError as err:
                failures.append((t, str(err)))
    if len(failures) > 0.1 * n_trials:
        raise ExperimentError(
            f"{len(failures)}/{n_trials} trials diverged; first: {failures[0][1]}")
    return [r for r in results if r is not None], failures


def _bdd_prior(cfg: ExperimentConfig):
    return BddPrior(cfg.eps1, cfg.eps2, cfg.eps3, cfg.eps4, cfg.sigma_s_sq,
                    cfg.rho)


def _prior_from_name(cfg: ExperimentConfig):
    if cfg.prior == "bg":
        return BgPrior(cfg.epsilon)
    if cfg.prior == "bdd":
        return _bdd_prior(cfg)
    if cfg.prior == "gg":
        return GgPrior(cfg.sigma_x_sq)
    raise ValueError(f"unknown prior {cfg.prior!r}")


@dataclass
class BatchRecord:
    """Bookkeeping for one batch in a chained side-information pipeline."""

    batch: int
    sigma_hat_sq_used: float | None
    final_lambda_sq: float
    final_pseudo: np.ndarray = field(repr=False)
    mse_per_iter: np.ndarray = field(repr=False)
    signal_energy: float = 0.0


# ---------------------------------------------------------------------------
# single-batch recovery vs state evolution (fig4)


def _fig4_trial(cfg: ExperimentConfig, trial):
    prior = BgPrior(cfg.epsilon)
    x = sample_bg(prior, cfg.n, _stream_seed(cfg.seed, trial, 0))
    channel = SiChannel(cfg.sigma_hat**2)
    si = make_si(x, channel, _stream_seed(cfg.seed, trial, 3))
    op = make_dense(cfg.m, cfg.n, _stream_seed(cfg.seed, trial, 1))
    meas = measure(op, x, cfg.sigma_z, _stream_seed(cfg.seed, trial, 2))
    engine = AmpConfig(max_iters=cfg.max_iters, beta=cfg.beta,
                       convergence_tol=cfg.convergence_tol)
    res = amp_run(op, meas, prior, si, channel.sigma_hat_sq, engine, truth=x)
    energy = max(float(np.sum(x**2)) / cfg.n, 1e-300)
    return res.mse / energy, res.pseudo_mse


@dataclass
class Fig4Result:
    iters: np.ndarray
    empirical_mean: np.ndarray
    empirical_ci: np.ndarray
    se_mse: np.ndarray
    se_trace: SeTrace
    per_trial: np.ndarray
    pseudo_mse_mean: np.ndarray


def run_fig4(cfg: ExperimentConfig, out_dir=None):
    """Recovery MSE per iteration, averaged over trials, with the SE overlay."""
    t0 = time.monotonic()
    per_trial, failures = _map_trials(_fig4_trial, cfg, cfg.trials)
    mse = np.array([p[0] for p in per_trial])
    pseudo = np.array([p[1] for p in per_trial])
    t_run = time.monotonic() - t0

    prior = BgPrior(cfg.epsilon)
    delta = cfg.m / cfg.n
    sz2 = cfg.sigma_z**2
    trace = se_run(prior, SiChannel(cfg.sigma_hat**2), delta, sz2,
                   t_max=cfg.max_iters, mc=cfg.se_mc, tol=0.0,
                   seed=np.random.SeedSequence(entropy=cfg.seed,
                                               spawn_key=(10**6,)))
    t_se = time.monotonic() - t0 - t_run

    second_moment = signal_second_moment(prior)
    iters = np.arange(1, mse.shape[1] + 1)
    mean = mse.mean(axis=0)
    if mse.shape[0] > 1:
        ci = 1.96 * mse.std(axis=0, ddof=1) / np.sqrt(mse.shape[0])
    else:
        ci = np.zeros(mse.shape[1])
    # iterate x^t corresponds to lambda_t^2: mse row t-1 <-> trace entry t
    se_mse = delta * (trace.lambda_sq_seq[1:len(iters) + 1] - sz2) / second_moment
    result = Fig4Result(iters=iters, empirical_mean=mean, empirical_ci=ci,
                        se_mse=se_mse, se_trace=trace, per_trial=mse,
                        pseudo_mse_mean=pseudo.mean(axis=0))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "fig4.csv")
        write_csv(csv_path,
                  ["iter", "empirical_mse_mean", "empirical_mse_ci", "se_mse"],
                  [(int(t), float(a), float(b), float(c))
                   for t, a, b, c in zip(iters, mean, ci, se_mse)])
        write_manifest(os.path.join(out_dir, "fig4_manifest.json"), cfg,
                       {"trials": t_run, "state_evolution": t_se},
                       {"csv": csv_path},
                       extra={"diverged_trials": len(failures)})
    return result


# ---------------------------------------------------------------------------
# chained batches, dense operators: SI arm vs no-SI arm (fig5)


def _fig5_trial(cfg: ExperimentConfig, trial):
    prior = _bdd_prior(cfg)
    engine = AmpConfig(max_iters=cfg.max_iters, beta=cfg.beta,
                       convergence_tol=cfg.convergence_tol)
    mse_si = np.empty((cfg.batches, cfg.max_iters))
    mse_plain = np.empty_like(mse_si)
    x = None
    si_vec = None
    sigma_hat_sq = None
    prev_record = None
    for b in range(1, cfg.batches + 1):
        if b == 1:
            x = sample_bdd_stationary(prior, cfg.n,
                                      _stream_seed(cfg.seed, trial, 0, b))
        else:
            x, _ = sample_bdd_step(prior, x,
                                   _stream_seed(cfg.seed, trial, 0, b))
        op = make_dense(cfg.m, cfg.n, _stream_seed(cfg.seed, trial, 1, b))
        meas = measure(op, x, cfg.sigma_z, _stream_seed(cfg.seed, trial, 2, b))
        energy = max(float(np.sum(x**2)) / cfg.n, 1e-300)

        if b == 1:
            res_si = run_no_si(op, meas, prior, engine, truth=x)
        else:
            # the chain hands over the previous final pseudo-data and its
            # effective noise variance, nothing else
            assert si_vec is prev_record.final_pseudo
            assert sigma_hat_sq == prev_record.final_lambda_sq
            res_si = amp_run(op, meas, prior, si_vec, sigma_hat_sq, engine,
                             truth=x)
        res_plain = run_no_si(op, meas, prior, engine, truth=x)

        mse_si[b - 1] = res_si.mse / energy
        mse_plain[b - 1] = res_plain.mse / energy
        prev_record = BatchRecord(batch=b, sigma_hat_sq_used=sigma_hat_sq,
                                  final_lambda_sq=res_si.final_lambda_sq,
                                  final_pseudo=res_si.final_pseudo,
                                  mse_per_iter=res_si.mse,
                                  signal_energy=energy)
        si_vec = prev_record.final_pseudo
        sigma_hat_sq = prev_record.final_lambda_sq
    return mse_si, mse_plain


@dataclass
class Fig5Result:
    batches: np.ndarray
    iters: np.ndarray
    mse_ampsi: np.ndarray        # (batches, iters) mean over trials
    mse_amp: np.ndarray
    final_ampsi_per_trial: np.ndarray   # (trials, batches)
    final_amp_per_trial: np.ndarray


def run_fig5(cfg: ExperimentConfig, out_dir=None):
    """Chained-batch recovery: AMP with chained SI against plain AMP."""
    t0 = time.monotonic()
    per_trial, failures = _map_trials(_fig5_trial, cfg, cfg.trials)
    si = np.array([p[0] for p in per_trial])      # (trials, batches, iters)
    plain = np.array([p[1] for p in per_trial])
    t_run = time.monotonic() - t0
    result = Fig5Result(
        batches=np.arange(1, cfg.batches + 1),
        iters=np.arange(1, cfg.max_iters + 1),
        mse_ampsi=si.mean(axis=0),
        mse_amp=plain.mean(axis=0),
        final_ampsi_per_trial=si[:, :, -1],
        final_amp_per_trial=plain[:, :, -1],
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "fig5.csv")
        rows = []
        for bi, b in enumerate(result.batches):
            for ti, t in enumerate(result.iters):
                rows.append((int(b), int(t), float(result.mse_amp[bi, ti]),
                             float(result.mse_ampsi[bi, ti])))
        write_csv(csv_path, ["batch", "iter", "mse_amp", "mse_ampsi"], rows)
        write_manifest(os.path.join(out_dir, "fig5_manifest.json"), cfg,
                       {"trials": t_run}, {"csv": csv_path},
                       extra={"diverged_trials": len(failures)})
    return result


# ---------------------------------------------------------------------------
# pilot-convolution channel estimation over SNRs (table1 / table2 arms)


def _channel_realization(cfg: ExperimentConfig, trial):
    """One realization: a pilot, a chain of batches, all SNR levels.

    Returns (per_entry_mse, per_energy_mse) of shape (snr, batches).
    """
    prior = _bdd_prior(cfg)
    engine = AmpConfig(max_iters=cfg.max_iters, beta=cfg.beta,
                       convergence_tol=cfg.convergence_tol)
    op = make_toeplitz(cfg.pilot_len, cfg.n, _stream_seed(cfg.seed, trial, 1))

    xs = []
    x = None
    for b in range(1, cfg.batches + 1):
        if b == 1:
            x = sample_bdd_stationary(prior, cfg.n,
                                      _stream_seed(cfg.seed, trial, 0, b))
        else:
            x, _ = sample_bdd_step(prior, x,
                                   _stream_seed(cfg.seed, trial, 0, b))
        xs.append(x)

    out_n = np.empty((len(cfg.snr_sigmas), cfg.batches))
    out_e = np.empty_like(out_n)
    for si_idx, sigma_z in enumerate(cfg.snr_sigmas):
        si_vec = None
        sigma_hat_sq = None
        for b, x in enumerate(xs, start=1):
            meas = measure(op, x, sigma_z,
                           _stream_seed(cfg.seed, trial, 2, b))
            if b == 1:
                res = run_no_si(op, meas, prior, engine, truth=x)
            else:
                res = amp_run(op, meas, prior, si_vec, sigma_hat_sq, engine,
                              truth=x)
            err = float(np.sum((res.x_hat - x) ** 2))
            out_n[si_idx, b - 1] = err / cfg.n
            out_e[si_idx, b - 1] = err / max(float(np.sum(x**2)), 1e-300)
            si_vec = res.final_pseudo
            sigma_hat_sq = res.final_lambda_sq
    return out_n, out_e


def _snr_db(cfg: ExperimentConfig, sigma_z):
    """Nominal per-tap SNR label, 10*log10(sigma_s^2 / sigma_z^2)."""
    return 10.0 * np.log10(cfg.sigma_s_sq / sigma_z**2)


def _mse_db(cfg, per_n, per_energy):
    chosen = per_n if cfg.mse_normalization == "per_n" else per_energy
    return 10.0 * np.log10(chosen)


@dataclass
class ChannelResult:
    snr_db: np.ndarray
    batches: np.ndarray
    mse_db: np.ndarray           # (snr, batches) in the configured convention
    mean_mse_per_n: np.ndarray
    mean_mse_per_energy: np.ndarray
    per_trial_per_n: np.ndarray  # (trials, snr, batches)


def run_channel_estimation(cfg: ExperimentConfig, out_dir=None):
    """Chained channel estimation with a pilot-convolution operator."""
    t0 = time.monotonic()
    per_trial, failures = _map_trials(_channel_realization, cfg, cfg.trials)
    per_n = np.array([p[0] for p in per_trial])
    per_e = np.array([p[1] for p in per_trial])
    t_run = time.monotonic() - t0

    mean_n = per_n.mean(axis=0)
    mean_e = per_e.mean(axis=0)
    snr_db = np.array([_snr_db(cfg, s) for s in cfg.snr_sigmas])
    mse_db = _mse_db(cfg, mean_n, mean_e)
    result = ChannelResult(snr_db=snr_db,
                           batches=np.arange(1, cfg.batches + 1),
                           mse_db=mse_db, mean_mse_per_n=mean_n,
                           mean_mse_per_energy=mean_e,
                           per_trial_per_n=per_n)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "channel.csv")
        rows = []
        for i, s in enumerate(snr_db):
            for bi, b in enumerate(result.batches):
                rows.append((float(s), int(b), float(mse_db[i, bi])))
        write_csv(csv_path, ["snr", "batch", "mse_db"], rows)
        write_manifest(os.path.join(out_dir, "channel_manifest.json"), cfg,
                       {"trials": t_run}, {"csv": csv_path},
                       extra={"diverged_trials": len(failures)})
    return result


def _iid_realization(cfg: ExperimentConfig, trial):
    """Dense-Gaussian counterpart of one channel realization (same chains)."""
    prior = _bdd_prior(cfg)
    engine = AmpConfig(max_iters=cfg.iid_max_iters, beta=0.0,
                       convergence_tol=cfg.iid_tol)
    xs = []
    x = None
    for b in range(1, cfg.batches + 1):
        if b == 1:
            x = sample_bdd_stationary(prior, cfg.n,
                                      _stream_seed(cfg.seed, trial, 0, b))
        else:
            x, _ = sample_bdd_step(prior, x,
                                   _stream_seed(cfg.seed, trial, 0, b))
        xs.append(x)

    out_n = np.empty((len(cfg.snr_sigmas), cfg.batches))
    out_e = np.empty_like(out_n)
    for si_idx, sigma_z in enumerate(cfg.snr_sigmas):
        si_vec = None
        sigma_hat_sq = None
        for b, x in enumerate(xs, start=1):
            op = make_dense(cfg.iid_m, cfg.n,
                            _stream_seed(cfg.seed, trial, 1, b))
            meas = measure(op, x, sigma_z, _stream_seed(cfg.seed, trial, 2, b))
            if b == 1:
                res = run_no_si(op, meas, prior, engine, truth=x)
            else:
                res = amp_run(op, meas, prior, si_vec, sigma_hat_sq, engine,
                              truth=x)
            err = float(np.sum((res.x_hat - x) ** 2))
            out_n[si_idx, b - 1] = err / cfg.n
            out_e[si_idx, b - 1] = err / max(float(np.sum(x**2)), 1e-300)
            si_vec = res.final_pseudo
            sigma_hat_sq = res.final_lambda_sq
    return out_n, out_e


def se_chain_fixed_points(prior, delta, sigma_z, batches, mc, tol, t_max,
                          seed):
    """Chain SE fixed points across batches; SI variance follows the chain."""
    sigma_hat_sq = None
    out = []
    for b in range(1, batches + 1):
        si = None if b == 1 else SiChannel(sigma_hat_sq)
        lam, stderr, converged = se_fixed_point(
            prior, si, delta, sigma_z**2, mc=mc, tol=tol, t_max=t_max,
            seed=np.random.SeedSequence(entropy=seed, spawn_key=(b,)))
        out.append((lam, stderr, converged))
        sigma_hat_sq = lam
    return out


@dataclass
class Table2Result:
    snr_db: np.ndarray
    iid_mse_db: np.ndarray
    se_mse_db: np.ndarray
    toeplitz_mse_db: np.ndarray
    batch: int


def run_table2(cfg: ExperimentConfig, out_dir=None, channel_result=None):
    """Batch-5 snapshot: dense-Gaussian empirical vs SE vs pilot Toeplitz.

    ``channel_result`` lets callers reuse an existing run_channel_estimation
    output for the Toeplitz column instead of rerunning it.
    """
    t0 = time.monotonic()
    per_trial, failures = _map_trials(_iid_realization, cfg, cfg.trials)
    iid_n = np.array([p[0] for p in per_trial]).mean(axis=0)
    iid_e = np.array([p[1] for p in per_trial]).mean(axis=0)
    t_iid = time.monotonic() - t0

    if channel_result is None:
        channel_result = run_channel_estimation(cfg)
    t_toep = time.monotonic() - t0 - t_iid

    prior = _bdd_prior(cfg)
    delta = cfg.iid_m / cfg.n
    energy = signal_second_moment(prior)
    se_db = []
    for sigma_z in cfg.snr_sigmas:
        chain = se_chain_fixed_points(
            prior, delta, sigma_z, cfg.batches, cfg.se_mc, cfg.se_tol,
            cfg.se_t_max, cfg.seed)
        lam, _, _ = chain[-1]
        mse = delta * (lam - sigma_z**2)
        if cfg.mse_normalization == "per_energy":
            mse = mse / energy
        se_db.append(10.0 * np.log10(max(mse, 1e-300)))
    t_se = time.monotonic() - t0 - t_iid - t_toep

    last = cfg.batches - 1
    result = Table2Result(
        snr_db=np.array([_snr_db(cfg, s) for s in cfg.snr_sigmas]),
        iid_mse_db=_mse_db(cfg, iid_n, iid_e)[:, last],
        se_mse_db=np.array(se_db),
        toeplitz_mse_db=channel_result.mse_db[:, last],
        batch=cfg.batches,
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "table2.csv")
        rows = [(float(s), float(a), float(b), float(c))
                for s, a, b, c in zip(result.snr_db, result.iid_mse_db,
                                      result.se_mse_db, result.toeplitz_mse_db)]
        write_csv(csv_path,
                  ["snr", "iid_mse_db", "se_mse_db", "toeplitz_mse_db"], rows)
        write_manifest(os.path.join(out_dir, "table2_manifest.json"), cfg,
                       {"iid": t_iid, "toeplitz": t_toep,
                        "state_evolution": t_se},
                       {"csv": csv_path},
                       extra={"diverged_trials": len(failures)})
    return result


def run_phase_grid(cfg: ExperimentConfig, out_dir=None):
    """Fixed-point MSE over (delta, gamma) for a schedule of batches."""
    t0 = time.monotonic()
    grid = phase_grid(cfg.deltas, cfg.gammas, batches=cfg.phase_batches,
                      sigma_z=cfg.sigma_z, mc=cfg.phase_mc, seed=cfg.seed,
                      eps2=cfg.eps2, eps4=cfg.eps4,
                      sigma_s_sq=cfg.sigma_s_sq, rho=cfg.rho,
                      tol=cfg.se_tol, t_max=cfg.se_t_max)
    t_run = time.monotonic() - t0
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "phase.csv")
        rows = []
        for k, b in enumerate(grid.batches):
            for di, d in enumerate(grid.deltas):
                for gi, g in enumerate(grid.gammas):
                    rows.append((float(d), float(g), int(b),
                                 float(grid.mse[k, di, gi])))
        write_csv(csv_path, ["delta", "gamma", "batch", "mse"], rows)
        write_manifest(os.path.join(out_dir, "phase_manifest.json"), cfg,
                       {"grid": t_run}, {"csv": csv_path})
    return grid


def run_se_trace(cfg: ExperimentConfig, out_dir=None):
    """Run state evolution for the configured prior and write its trace."""
    prior = _prior_from_name(cfg)
    si = None if cfg.sigma_hat < 0 else SiChannel(cfg.sigma_hat**2)
    delta = cfg.m / cfg.n
    trace = se_run(prior, si, delta, cfg.sigma_z**2, t_max=cfg.max_iters,
                   mc=cfg.se_mc, tol=0.0, seed=cfg.seed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "se_trace.csv")
        mse = trace.mse_seq(delta, cfg.sigma_z**2)
        rows = [(t, float(lam), float(err), float(m))
                for t, (lam, err, m) in enumerate(zip(
                    trace.lambda_sq_seq, trace.stderr_seq, mse))]
        write_csv(csv_path, ["iter", "lambda_sq", "stderr", "mse"], rows)
        write_manifest(os.path.join(out_dir, "se_manifest.json"), cfg,
                       {}, {"csv": csv_path})
    return trace

"""Command-line entry point for the experiment drivers.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when an
experiment ran but could not produce trustworthy aggregates (for example,
too many diverged trials).
"""

import argparse
import sys

from . import experiments, oracle
from .experiments import (ExperimentConfig, ExperimentError, apply_overrides,
                          load_config_file, preset_config)


def _add_common(sub):
    sub.add_argument("--config", help="flat 'key = value' config file")
    sub.add_argument("--seed", type=int, help="base seed for all streams")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--n", type=int, help="signal length")
    sub.add_argument("--m", type=int, help="number of measurements")
    sub.add_argument("--workers", type=int, help="parallel trial workers")
    sub.add_argument("--out-dir", dest="out_dir",
                     help="directory for CSV + manifest output")
    sub.add_argument("--max-iters", dest="max_iters", type=int)
    sub.add_argument("--sigma-z", dest="sigma_z", type=float,
                     help="measurement noise standard deviation")
    sub.add_argument("--sigma-hat", dest="sigma_hat", type=float,
                     help="side-information noise standard deviation")
    sub.add_argument("--batches", type=int)
    sub.add_argument("--mse-norm", dest="mse_normalization",
                     choices=("per_n", "per_energy"),
                     help="dB tables divide squared error by N or by signal "
                          "energy")
    sub.add_argument("--set", dest="assignments", action="append", default=[],
                     metavar="KEY=VALUE",
                     help="override any config field (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ampsi",
        description="AMP with side information: recovery experiments, state "
                    "evolution, and oracle checks.")
    subs = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("fig4", "single-batch recovery MSE per iteration vs state evolution"),
        ("fig5", "chained batches: AMP with side information vs plain AMP"),
        ("channel", "pilot-convolution channel estimation across SNRs"),
        ("table2", "batch-5 comparison: dense empirical vs SE vs pilot"),
        ("phase", "fixed-point MSE over (delta, gamma) grids"),
        ("se", "state-evolution trace for a configured prior"),
        ("oracle-check", "regenerate oracle values and verify the frozen CSV"),
    ]
    for name, help_text in specs:
        sub = subs.add_parser(name, help=help_text)
        if name != "oracle-check":
            _add_common(sub)
        else:
            sub.add_argument("--write", metavar="PATH",
                             help="write a fresh golden CSV to PATH")
            sub.add_argument("--oracle-seed", dest="oracle_seed", type=int,
                             default=20240,
                             help="seed for the MC-backed oracle rows")
    return parser


def _config_from_args(args):
    cfg = preset_config(args.command)
    overrides = {}
    if args.config:
        overrides.update(load_config_file(args.config))
    for field in ("seed", "trials", "n", "m", "workers", "out_dir",
                  "max_iters", "sigma_z", "sigma_hat", "batches",
                  "mse_normalization"):
        val = getattr(args, field, None)
        if val is not None:
            overrides[field] = val
    for assignment in args.assignments:
        if "=" not in assignment:
            raise ValueError(f"--set expects KEY=VALUE, got {assignment!r}")
        key, raw = assignment.split("=", 1)
        overrides[key.strip()] = raw.strip()
    return apply_overrides(cfg, overrides)


def _print_table(header, rows):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows))
              for i, h in enumerate(header)]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))


def _run_oracle_check(args):
    if args.write:
        path = oracle.write_golden(args.write, seed=args.oracle_seed)
        print(f"wrote golden oracle values to {path}")
        return 0
    report = oracle.verify_golden(seed=args.oracle_seed)
    for name, ok, detail in report:
        print(f"{name:>10s}  {'ok' if ok else 'FAIL':4s}  {detail}")
    if all(ok for _, ok, _ in report):
        print("oracle check: all rows verified")
        return 0
    print("oracle check: FAILED", file=sys.stderr)
    return 3


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "oracle-check":
            return _run_oracle_check(args)
        cfg = _config_from_args(args)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "fig4":
            res = experiments.run_fig4(cfg, out_dir=cfg.out_dir)
            _print_table(
                ["iter", "empirical", "ci95", "state_evolution"],
                [(int(t), f"{a:.6e}", f"{c:.2e}", f"{s:.6e}")
                 for t, a, c, s in zip(res.iters, res.empirical_mean,
                                       res.empirical_ci, res.se_mse)])
        elif args.command == "fig5":
            res = experiments.run_fig5(cfg, out_dir=cfg.out_dir)
            _print_table(
                ["batch", "final_amp", "final_ampsi"],
                [(int(b), f"{a:.6e}", f"{s:.6e}")
                 for b, a, s in zip(res.batches, res.mse_amp[:, -1],
                                    res.mse_ampsi[:, -1])])
        elif args.command == "channel":
            res = experiments.run_channel_estimation(cfg, out_dir=cfg.out_dir)
            rows = []
            for i, s in enumerate(res.snr_db):
                for bi, b in enumerate(res.batches):
                    rows.append((f"{s:.0f}", int(b),
                                 f"{res.mse_db[i, bi]:+.2f}"))
            _print_table(["snr_db", "batch", "mse_db"], rows)
        elif args.command == "table2":
            res = experiments.run_table2(cfg, out_dir=cfg.out_dir)
            _print_table(
                ["snr_db", "iid", "se", "toeplitz"],
                [(f"{s:.0f}", f"{a:+.2f}", f"{b:+.2f}", f"{c:+.2f}")
                 for s, a, b, c in zip(res.snr_db, res.iid_mse_db,
                                       res.se_mse_db, res.toeplitz_mse_db)])
        elif args.command == "phase":
            grid = experiments.run_phase_grid(cfg, out_dir=cfg.out_dir)
            rows = []
            for k, b in enumerate(grid.batches):
                for di, d in enumerate(grid.deltas):
                    for gi, g in enumerate(grid.gammas):
                        rows.append((f"{d:.2f}", f"{g:.2f}", int(b),
                                     f"{grid.mse[k, di, gi]:.6e}"))
            _print_table(["delta", "gamma", "batch", "mse"], rows)
        elif args.command == "se":
            trace = experiments.run_se_trace(cfg, out_dir=cfg.out_dir)
            mse = trace.mse_seq(cfg.m / cfg.n, cfg.sigma_z**2)
            _print_table(
                ["iter", "lambda_sq", "stderr", "mse"],
                [(t, f"{lam:.8e}", f"{se:.2e}", f"{m:.8e}")
                 for t, (lam, se, m) in enumerate(zip(
                     trace.lambda_sq_seq, trace.stderr_seq, mse))])
    except ExperimentError as err:
        print(f"experiment failed: {err}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

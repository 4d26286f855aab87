"""Command-line interface: one subcommand per experiment task.

Every subcommand accepts --config (flat "key: value" overrides), --seed,
--out (run directory), and --profile {desk,paper}.  Exit codes: 0 on
success, 2 for configuration or I/O problems, 3 for diverged training.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datasets import save_csv
from .errors import ConfigError, TrainingDivergedError
from .experiments import (
    load_config,
    make_series,
    resolve_spec,
    run_d2,
    run_forecast,
    run_group_ablation,
    run_init_sensitivity,
    run_readout_ablation,
    run_scaling_probe,
    write_run_dir,
)

_COMMANDS = {
    "forecast": "train the forecaster on one series and score the test split",
    "init-sensitivity": "input-init schemes at single vs grouped reservoirs",
    "group-ablation": "sweep the number of reservoir members",
    "readout-ablation": "compare group readout modes",
    "scaling": "streaming time/memory probes vs series length and size",
    "d2": "correlation dimension and entropy of a generated series",
    "gen-data": "generate a series and write it as CSV with metadata",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reservoircast",
        description="group-reservoir transformer forecasting experiments")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in _COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, description=help_text)
        cmd.add_argument("--config", type=Path, default=None,
                         help="file of flat 'key: value' overrides")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the base seed")
        cmd.add_argument("--out", type=Path, default=None,
                         help="run directory (default: runs/<command>)")
        cmd.add_argument("--profile", choices=("desk", "paper"), default="desk",
                         help="sizing profile (default: desk)")
    return parser


def _gen_data(spec, out: Path) -> None:
    series = make_series(spec)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["x", "y", "z"] if series.shape[1] == 3 else ["x"]
    metadata = {
        "dataset": spec.dataset, "rows": int(series.shape[0]),
        "transient": spec.transient, "config_sha256": spec.config_hash(),
    }
    if spec.dataset == "mackey_glass":
        metadata.update(dt=spec.mg_dt, tau=spec.mg_tau, history=spec.mg_history)
    elif spec.dataset == "lorenz":
        metadata.update(dt=spec.lorenz_dt)
    elif spec.dataset == "sine":
        metadata.update(dt=spec.sine_dt, period=spec.sine_period)
    path = out / f"{spec.dataset}.csv"
    save_csv(path, series, columns=columns, metadata=metadata)
    write_run_dir(out, spec, [], [])
    print(f"wrote {path} ({series.shape[0]} rows, {series.shape[1]} columns)")


def _report(command: str, result: dict) -> None:
    if command == "forecast":
        row = result["summary"][0]
        print(f"test_mse {row['test_mse']:.6g}  test_mae {row['test_mae']:.6g}  "
              f"kappa {row['kappa']:.4g}")
    elif command == "group-ablation":
        for row in result["summary"]:
            print(f"l={row['l']}  median_mse {row['median_mse']:.6g}  "
                  f"mean_mse {row['mean_mse']:.6g}")
    elif command == "init-sensitivity":
        for row in result["summary"]:
            if row["row_kind"] == "arm":
                print(f"l={row['l']}  var_scheme_means {row['var_scheme_means']:.6g}  "
                      f"var_pooled {row['var_pooled']:.6g}  p {row['p_value']:.4g}")
    elif command == "readout-ablation":
        for row in result["summary"]:
            print(f"{row['readout_mode']}  median_mse {row['median_mse']:.6g}")
    elif command == "scaling":
        bytes_by_t = result["bytes_by_t"]
        print(f"t_slope {result['t_slope']:.3f}  n_r_slope {result['n_r_slope']:.3f}  "
              f"retained_bytes {bytes_by_t[min(bytes_by_t)]}..{bytes_by_t[max(bytes_by_t)]}")
    elif command == "d2":
        print(f"d2 {result['d2']:.4f}  r2 {result['r2']:.4f}  "
              f"entropy {result['entropy']:.4f}")


_RUNNERS = {
    "forecast": run_forecast,
    "init-sensitivity": run_init_sensitivity,
    "group-ablation": run_group_ablation,
    "readout-ablation": run_readout_ablation,
    "scaling": run_scaling_probe,
    "d2": run_d2,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = load_config(args.config) if args.config else {}
        spec = resolve_spec(args.command.replace("-", "_"), args.profile,
                            overrides, seed=args.seed)
        out = args.out if args.out is not None else Path("runs") / args.command
        if args.command == "gen-data":
            _gen_data(spec, out)
            return 0
        result = _RUNNERS[args.command](spec, out)
        _report(args.command, result)
        print(f"artifacts: {out}")
        return 0
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: render, tgsi, train-perceptual, validate-metric,
demo-forecast.  Every run is seeded and deterministic: repeating a
command with identical flags produces byte-identical output files.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .csvio import read_csv, write_predictions_csv, write_rows_csv
from .forecast import (evaluate, make_benchmark_series, make_windows,
                       predict, train_forecaster)
from .imaging import RenderConfig, export_image, normalize_single, render, render_pair
from .losses import LossWeights
from .metric import TgsiConfig, tgsi
from .perceptual import load_bundle, save_bundle, train_perceptual_bundle
from .validation import mse_blindness_demo, similarity_sweep


class UsageError(Exception):
    """Bad flags or config keys; reported as exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        return [int(part) for part in str(value).split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {value!r}")


# per-subcommand flag spec: dest -> (cast, default, help); a None default
# with required=True below means the flag must be given
_SPECS = {
    "render": {
        "input": (str, None, "input series CSV"),
        "height": (int, 200, "image height in pixels"),
        "expand": (int, 100, "stripe half-width d in pixels"),
        "out_dir": (str, "runs", "parent directory for run output"),
        "format": (str, "pgm", "image format: pgm or png"),
    },
    "tgsi": {
        "pred": (str, None, "prediction series CSV"),
        "truth": (str, None, "ground-truth series CSV"),
        "height": (int, 200, "image height in pixels"),
        "expand": (int, 100, "stripe half-width d in pixels"),
        "downscale": (int, 10, "covariance pooling window"),
    },
    "train-perceptual": {
        "data": (str, None, "training series CSV"),
        "t_out": (int, 96, "window length the extractor is trained for"),
        "epochs_ae": (int, 30, "autoencoder epochs"),
        "epochs_ex": (int, 10, "extractor epochs"),
        "lr": (float, 0.001, "learning rate"),
        "batch": (int, 16, "batch size"),
        "dz": (int, 128, "latent feature size"),
        "out": (str, None, "bundle output path"),
        "seed": (int, 0, "random seed"),
        "max_windows": (int, 64, "cap on training windows cut from the data"),
    },
    "validate-metric": {
        "seed": (int, 0, "random seed"),
        "length": (int, 512, "base sequence length"),
        "d": (_int_list, [0, 10, 100], "stripe half-widths, comma separated"),
        "p_steps": (int, 21, "number of deformation strengths in [0,1]"),
        "seeds_per_point": (int, 20, "repetitions per strength"),
        "out_dir": (str, "runs", "parent directory for run output"),
    },
    "demo-forecast": {
        "t_in": (int, 96, "input window length"),
        "t_out": (int, 96, "forecast horizon"),
        "loss": (str, "satl", "training loss: mse or satl"),
        "alpha": (float, 0.2, "difference-loss weight"),
        "beta": (float, 0.2, "frequency-loss weight"),
        "gamma": (float, 0.1, "perceptual-loss weight"),
        "delta": (float, 0.5, "MSE weight"),
        "k_ratio": (float, 0.1, "dominant-bin fraction for the frequency loss"),
        "bundle": (str, "", "trained perceptual bundle path (needed when "
                            "loss=satl and gamma>0)"),
        "epochs": (int, 10, "training epochs"),
        "seed": (int, 0, "random seed"),
        "out_dir": (str, "runs", "parent directory for run output"),
        "length": (int, 1920, "synthetic benchmark length"),
    },
}

_REQUIRED = {"render": ("input",), "tgsi": ("pred", "truth"),
             "train-perceptual": ("data", "out"), "validate-metric": (),
             "demo-forecast": ()}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsgeo",
                     description="Geometric similarity metric and "
                                 "shape-aware training tools for time series.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, spec in _SPECS.items():
        p = sub.add_parser(
            name, description=f"tsgeo {name}",
            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.error = parser.error
        for dest, (cast, default, help_text) in spec.items():
            flag = "--" + dest.replace("_", "-")
            shown = default if default is not None else "required"
            p.add_argument(flag, dest=dest, type=cast, default=None,
                           required=dest in _REQUIRED[name] and default is None,
                           help=f"{help_text} (default: {shown})")
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults (flags override it)")
        p.add_argument("--threads", type=int, default=1,
                       help="upper bound on internal parallelism "
                            "(default: 1; current modules are sequential)")
    return parser


def _resolve(args, command) -> dict:
    """Defaults, then config file, then explicit flags."""
    spec = _SPECS[command]
    cfg = {dest: default for dest, (_, default, _) in spec.items()}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError(f"config {args.config} must be a JSON object")
        unknown = sorted(set(loaded) - set(spec))
        if unknown:
            raise UsageError(
                f"unknown config keys for {command}: {', '.join(unknown)}")
        for key, value in loaded.items():
            cast = spec[key][0]
            cfg[key] = cast(value) if value is not None else None
    for dest in spec:
        given = getattr(args, dest)
        if given is not None:
            cfg[dest] = given
    cfg["threads"] = max(1, args.threads)
    missing = [d for d in _REQUIRED[command] if not cfg.get(d)]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise UsageError(f"tsgeo {command}: missing required {flags}")
    return cfg


def _run_dir(cfg, command) -> Path:
    tag = f"{command}-seed{cfg['seed']}" if "seed" in cfg else command
    path = Path(cfg["out_dir"]) / tag
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(cfg: dict, directory: Path):
    text = json.dumps(cfg, sort_keys=True, indent=2) + "\n"
    (directory / "config.json").write_text(text)


def _cmd_render(cfg) -> int:
    series = read_csv(cfg["input"])
    run = _run_dir(cfg, "render")
    _echo_config(cfg, run)
    render_cfg = RenderConfig(height=cfg["height"], expand=cfg["expand"],
                              downscale_window=1)
    normalized, _ = normalize_single(series.values)
    image = render(normalized, render_cfg)
    written = export_image(image, run / f"series.{cfg['format']}",
                           fmt=cfg["format"])
    for path in written:
        print(path)
    return 0


def _cmd_tgsi(cfg) -> int:
    pred = read_csv(cfg["pred"])
    truth = read_csv(cfg["truth"])
    metric_cfg = TgsiConfig(render=RenderConfig(
        height=cfg["height"], expand=cfg["expand"],
        downscale_window=cfg["downscale"]))
    report = tgsi(pred.values, truth.values, metric_cfg)
    values = [repr(float(v)) for v in report.tgsi] + [repr(report.aggregate)]
    print(",".join(values))
    return 0


def _cut_windows(values: np.ndarray, t_out: int, cap: int) -> list:
    """Non-overlapping length-t_out windows from the train split of
    every channel, evenly subsampled to at most cap."""
    train = values[:int(values.shape[0] * 0.7)]
    windows = []
    for c in range(train.shape[1]):
        for start in range(0, train.shape[0] - t_out + 1, t_out):
            windows.append(train[start:start + t_out, c].copy())
    if not windows:
        raise ValueError(
            f"train split too short to cut any length-{t_out} window")
    if len(windows) > cap:
        keep = np.unique(np.linspace(0, len(windows) - 1, cap).astype(int))
        windows = [windows[i] for i in keep]
    return windows


def _cmd_train_perceptual(cfg) -> int:
    series = read_csv(cfg["data"])
    windows = _cut_windows(series.values, cfg["t_out"], cfg["max_windows"])
    bundle = train_perceptual_bundle(
        windows, d_z=cfg["dz"], epochs_ae=cfg["epochs_ae"],
        epochs_ex=cfg["epochs_ex"], lr=cfg["lr"], batch=cfg["batch"],
        seed=cfg["seed"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, out)
    echo = out.with_name(out.name + ".config.json")
    echo.write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    print(f"bundle: {out}")
    print(f"windows: {len(windows)}")
    print(f"stage1 final loss: {bundle.ae_report.final_loss!r}")
    print(f"stage2 final loss: {bundle.ex_report.final_loss!r}")
    return 0


def _cmd_validate_metric(cfg) -> int:
    run = _run_dir(cfg, "validate-metric")
    _echo_config(cfg, run)
    sweep = similarity_sweep(seed=cfg["seed"], t_len=cfg["length"],
                             p_steps=cfg["p_steps"], d_list=cfg["d"],
                             seeds_per_point=cfg["seeds_per_point"])
    write_rows_csv(run / "sweep.csv", sweep.rows,
                   ["d", "p", "operator", "rep", "tgsi"])
    blindness = mse_blindness_demo(seed=cfg["seed"], t_len=cfg["length"])
    summary = {"pearson_r_by_d": {str(d): r for d, r in sweep.r_by_d.items()},
               "mse_blindness": blindness, "sweep_config": sweep.config}
    (run / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for d in cfg["d"]:
        print(f"pearson r (d={d}): {sweep.r_by_d[d]!r}")
    print(f"mse gap: {blindness['mse_gap']!r}")
    print(f"tgsi pair1 vs pair2: {blindness['tgsi_pair1']!r} "
          f"vs {blindness['tgsi_pair2']!r}")
    return 0


def _cmd_demo_forecast(cfg) -> int:
    if cfg["loss"] not in ("mse", "satl"):
        raise UsageError(f"--loss must be mse or satl, got {cfg['loss']!r}")
    weights = LossWeights(alpha=cfg["alpha"], beta=cfg["beta"],
                          gamma=cfg["gamma"], delta=cfg["delta"],
                          k_ratio=cfg["k_ratio"])
    bundle = None
    if cfg["loss"] == "satl" and weights.gamma > 0:
        if not cfg["bundle"]:
            raise ValueError(
                "loss=satl with gamma>0 needs --bundle (run train-perceptual "
                "first, or pass --gamma 0)")
        bundle = load_bundle(cfg["bundle"])
    run = _run_dir(cfg, "demo-forecast")
    _echo_config(cfg, run)

    series = make_benchmark_series(seed=cfg["seed"], t_len=cfg["length"],
                                   window=cfg["t_out"])
    dataset = make_windows(series, cfg["t_in"], cfg["t_out"])
    model, history = train_forecaster(
        dataset, loss_mode=cfg["loss"], weights=weights, bundle=bundle,
        epochs=cfg["epochs"], seed=cfg["seed"])
    test = evaluate(model, dataset, "test")

    write_rows_csv(run / "metrics.csv",
                   [{"seed": cfg["seed"], "mode": cfg["loss"],
                     "mse": test["mse"], "mae": test["mae"],
                     "tgsi": test["tgsi"]}],
                   ["seed", "mode", "mse", "mae", "tgsi"])
    write_rows_csv(run / "history.csv",
                   [{"epoch": i + 1, **row}
                    for i, row in enumerate(history.epochs)],
                   ["epoch", "train_loss", "val_mse", "val_tgsi"])
    (run / "digest.txt").write_text(history.digest + "\n")

    first = dataset.test_starts[0]
    x_win, y_win = dataset.window(first)
    pred_arr = predict(model, x_win)
    write_predictions_csv(run / "predictions.csv", pred_arr, y_win)
    img_pred, img_truth = render_pair(pred_arr, y_win,
                                      RenderConfig(height=200, expand=100,
                                                   downscale_window=1))
    # truth at half intensity under the full-intensity prediction stripe
    img_pred.channels = np.maximum(img_pred.channels,
                                   0.5 * img_truth.channels)
    export_image(img_pred, run / "overlay.pgm", fmt="pgm")

    print(f"digest: {history.digest}")
    print(f"test mse: {test['mse']!r}")
    print(f"test mae: {test['mae']!r}")
    print(f"test tgsi: {test['tgsi']!r}")
    return 0


_DISPATCH = {
    "render": _cmd_render,
    "tgsi": _cmd_tgsi,
    "train-perceptual": _cmd_train_perceptual,
    "validate-metric": _cmd_validate_metric,
    "demo-forecast": _cmd_demo_forecast,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required "
                             "(render, tgsi, train-perceptual, "
                             "validate-metric, demo-forecast)")
        cfg = _resolve(args, args.command)
    except UsageError as exc:
        print(f"tsgeo: error: {exc}", file=sys.stderr)
        return 1
    try:
        return _DISPATCH[args.command](cfg)
    except UsageError as exc:
        print(f"tsgeo: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"tsgeo {args.command}: {exc}", file=sys.stderr)
        return 2


def run(argv) -> int:
    """Programmatic entry point; returns the exit code."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())

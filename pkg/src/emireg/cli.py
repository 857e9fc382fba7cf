"""Command-line interface.

Commands: ``synth``, ``train``, ``eval``, ``predict``, ``gradcheck``.
Configuration is a flat key=value schema; every key has a documented
default, may be set in a config file (``--config``), and may be
overridden on the command line (``--set key=value`` or a named flag).
Precedence: named flag > --set > config file > default.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure, 4 gradient-check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .constants import EMOTIONS, FEATURE_DIM
from .data import (
    SIGNAL_MODES,
    SynthConfig,
    load_manifest,
    load_split,
    synth_generate,
)
from .errors import (
    ConfigError,
    DataError,
    EmiregError,
    GradientCheckError,
    NumericError,
)
from .gradcheck import run_gradcheck
from .model import FusionModelConfig, load_params, param_count, save_params
from .training import (
    TrainConfig,
    evaluate_dataset,
    history_table,
    predict_dataset,
    train,
)

METRICS_HEADER = ("epoch", "lr", "train_mse", "val_rho") + EMOTIONS

# key -> (type tag, default). Types: int, float, bool, str, optional-int,
# optional-str.
CONFIG_SCHEMA: dict[str, tuple[str, object]] = {
    # model
    "input_dim": ("int", FEATURE_DIM),
    "hidden_dim": ("int", FEATURE_DIM),
    "mlp_hidden_dim": ("int", 256),
    "use_global_vector": ("bool", True),
    "dropout_rate": ("float", 0.1),
    # training
    "base_lr": ("float", 1e-4),
    "epochs": ("int", 30),
    "batch_size": ("int", 32),
    "patience": ("int", 5),
    "seed": ("int", 0),
    "adam_beta1": ("float", 0.9),
    "adam_beta2": ("float", 0.999),
    "adam_eps": ("float", 1e-8),
    "fixed_epochs": ("opt-int", None),
    # synthetic data
    "n_samples": ("int", 100),
    "seq_len_min": ("int", 5),
    "seq_len_max": ("int", 20),
    "feature_dim": ("int", FEATURE_DIM),
    "noise_std": ("float", 0.1),
    "signal_mode": ("str", "both"),
    "high_prob": ("float", 0.15),
    "beta_low_a": ("float", 0.4),
    "beta_low_b": ("float", 3.0),
    "beta_high_a": ("float", 4.0),
    "beta_high_b": ("float", 1.5),
    "val_fraction": ("float", 0.2),
    # paths and selection
    "manifest": ("opt-str", None),
    "checkpoint": ("opt-str", None),
    "out_dir": ("str", "."),
    "split": ("str", "val"),
    "predictions": ("opt-str", None),
}

_MODEL_KEYS = ("input_dim", "hidden_dim", "mlp_hidden_dim", "use_global_vector", "dropout_rate")


def _parse_value(key: str, raw: str):
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    kind, _ = CONFIG_SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "opt-int":
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "opt-str":
            return None if raw.lower() in ("", "none") else raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


class RunConfig:
    """Merged view of defaults, config file, and command-line overrides."""

    def __init__(self):
        self.values = {k: default for k, (_, default) in CONFIG_SCHEMA.items()}
        self.provided: set[str] = set()

    def set(self, key: str, value, raw: bool = False) -> None:
        self.values[key] = _parse_value(key, value) if raw else value
        self.provided.add(key)

    def load_file(self, path) -> None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            self.set(key, raw, raw=True)

    def __getitem__(self, key: str):
        return self.values[key]

    def model_config(self, input_dim: int | None = None) -> FusionModelConfig:
        return FusionModelConfig(
            input_dim=input_dim if input_dim is not None else self["input_dim"],
            hidden_dim=self["hidden_dim"],
            mlp_hidden_dim=self["mlp_hidden_dim"],
            use_global_vector=self["use_global_vector"],
            dropout_rate=self["dropout_rate"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            base_lr=self["base_lr"], epochs=self["epochs"],
            batch_size=self["batch_size"], patience=self["patience"],
            seed=self["seed"], adam_beta1=self["adam_beta1"],
            adam_beta2=self["adam_beta2"], adam_eps=self["adam_eps"],
            fixed_epochs=self["fixed_epochs"],
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_samples=self["n_samples"],
            seq_len_range=(self["seq_len_min"], self["seq_len_max"]),
            feature_dim=self["feature_dim"],
            high_prob=self["high_prob"],
            beta_low=(self["beta_low_a"], self["beta_low_b"]),
            beta_high=(self["beta_high_a"], self["beta_high_b"]),
            signal_mode=self["signal_mode"],
            noise_std=self["noise_std"],
            seed=self["seed"],
            val_fraction=self["val_fraction"],
        )


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _float_repr(x) -> str:
    return repr(float(x))


def _metrics_row(epoch, lr, train_mse, val_rho, rho_per_emotion) -> str:
    cells = [
        "" if epoch is None else str(epoch),
        "" if lr is None else _float_repr(lr),
        "" if train_mse is None else _float_repr(train_mse),
        _float_repr(val_rho),
    ]
    cells += [_float_repr(v) for v in rho_per_emotion]
    return ",".join(cells)


def _require(cfg: RunConfig, key: str, flag: str) -> str:
    value = cfg[key]
    if value is None:
        raise ConfigError(f"missing required setting {key!r} (use {flag} or a config file)")
    return value


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.load_file(args.config)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        cfg.set(key.strip(), raw, raw=True)
    # named flags win last
    for key in CONFIG_SCHEMA:
        flag_attr = f"opt_{key}"
        if getattr(args, flag_attr, None) is not None:
            cfg.set(key, getattr(args, flag_attr))
    if getattr(args, "no_global_vector", False):
        cfg.set("use_global_vector", False)
    if getattr(args, "no_dropout", False):
        cfg.set("dropout_rate", 0.0)
    return cfg


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    sub.add_argument("--seed", dest="opt_seed", type=int, help="random seed")
    sub.add_argument("--out", dest="opt_out_dir", metavar="DIR",
                     help="output directory")


def _add_flag(sub, name, key, type_=None, **kw):
    sub.add_argument(name, dest=f"opt_{key}", type=type_, **kw)


def cmd_synth(cfg: RunConfig) -> int:
    out_dir = Path(cfg["out_dir"])
    synth_cfg = cfg.synth_config()
    try:
        manifest = synth_generate(synth_cfg, out_dir)
    except OSError as exc:
        raise DataError(f"cannot write dataset under {out_dir}: {exc}") from exc
    targets = np.stack([r.targets for r in manifest.records])
    q = np.quantile(targets.reshape(-1), [0.0, 0.25, 0.5, 0.75, 1.0])
    print(f"wrote {len(manifest.records)} samples to {out_dir}")
    print(f"splits: train={len(manifest.split('train'))} val={len(manifest.split('val'))}")
    print(
        "target quantiles: "
        + " ".join(f"p{int(p * 100)}={v:.4f}" for p, v in zip([0, 0.25, 0.5, 0.75, 1.0], q))
    )
    print(f"manifest: {out_dir / 'manifest.csv'}")
    return 0


def _load_model_inputs(cfg: RunConfig, split: str):
    manifest = load_manifest(_require(cfg, "manifest", "--manifest"))
    return manifest, load_split(manifest, split)


def cmd_train(cfg: RunConfig) -> int:
    manifest = load_manifest(_require(cfg, "manifest", "--manifest"))
    train_set = load_split(manifest, "train")
    val_set = load_split(manifest, "val")

    width = train_set.width
    if "input_dim" in cfg.provided and cfg["input_dim"] != width:
        raise DataError(
            f"configured input_dim {cfg['input_dim']} != data width {width}"
        )
    model_config = cfg.model_config(input_dim=width)
    train_config = cfg.train_config()
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    history_path = out_dir / "history.csv"

    print(f"training on {len(train_set)} samples, validating on {len(val_set)}")
    print(f"model parameters: {param_count(model_config)}")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        fh.flush()

        def write_row(stats):
            fh.write(
                _metrics_row(stats.epoch, stats.lr, stats.train_mse,
                             stats.val_rho, stats.rho_per_emotion) + "\n"
            )
            fh.flush()

        params, history = train(
            train_set, val_set, model_config, train_config,
            epoch_callback=write_row,
        )

    ckpt = cfg["checkpoint"] or str(out_dir / "model.ckpt")
    save_params(ckpt, params, model_config)
    print(history_table(history))
    print(f"history: {history_path}")
    print(f"checkpoint: {ckpt}")
    if train_config.fixed_epochs is not None:
        print(f"fixed-epoch run: kept epoch {history.epochs[-1].epoch} weights")
    print(f"best val_rho {history.best_metric:.6f} at epoch {history.best_epoch}")
    return 0


def _load_checkpoint_for(cfg: RunConfig):
    """Load a checkpoint; explicitly set model keys must match its header."""
    path = _require(cfg, "checkpoint", "--checkpoint")
    params, config = load_params(path)
    mismatches = []
    for key in _MODEL_KEYS:
        if key not in cfg.provided:
            continue
        have = getattr(config, key)
        want = cfg[key]
        bad = abs(have - want) > 1e-9 if key == "dropout_rate" else have != want
        if bad:
            mismatches.append(f"{key}: checkpoint has {have}, requested {want}")
    if mismatches:
        raise DataError("checkpoint/config mismatch: " + "; ".join(mismatches))
    return params, config


def cmd_eval(cfg: RunConfig) -> int:
    params, config = _load_checkpoint_for(cfg)
    split = cfg["split"]
    manifest, dataset = _load_model_inputs(cfg, split)
    if dataset.width != config.input_dim:
        raise DataError(
            f"checkpoint expects width {config.input_dim}, split {split!r} has {dataset.width}"
        )
    report = evaluate_dataset(params, config, dataset, cfg["batch_size"])
    for line in report.lines():
        print(line)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"eval_{split}.csv"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        fh.write(_metrics_row(None, None, None, report.rho_val, report.rho_per_emotion) + "\n")
    print(f"metrics: {out_path}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    params, config = _load_checkpoint_for(cfg)
    split = cfg["split"]
    manifest, dataset = _load_model_inputs(cfg, split)
    if dataset.width != config.input_dim:
        raise DataError(
            f"checkpoint expects width {config.input_dim}, split {split!r} has {dataset.width}"
        )
    preds = predict_dataset(params, config, dataset, cfg["batch_size"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(cfg["predictions"] or out_dir / f"predictions_{split}.csv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(("sample_id",) + EMOTIONS) + "\n")
        for sid, row in zip(dataset.sample_ids, preds):
            fh.write(sid + "," + ",".join(_float_repr(v) for v in row) + "\n")
    print(f"wrote {len(preds)} predictions to {out_path}")
    return 0


def cmd_gradcheck(cfg: RunConfig, corrupt: str | None, tolerance: float) -> int:
    passed, worst, lines = run_gradcheck(
        seed=cfg["seed"], tolerance=tolerance, corrupt_array=corrupt
    )
    for line in lines:
        print(line)
    print(f"worst relative error: {worst:.6e} (tolerance {tolerance:g})")
    if not passed:
        raise GradientCheckError(
            f"gradient check failed: worst relative error {worst:.6e} >= {tolerance:g}"
        )
    print("gradient check passed")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="emireg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    _add_flag(p, "--n-samples", "n_samples", int)
    _add_flag(p, "--noise-std", "noise_std", float)
    _add_flag(p, "--signal-mode", "signal_mode", str, choices=SIGNAL_MODES)
    _add_flag(p, "--seq-len-min", "seq_len_min", int)
    _add_flag(p, "--seq-len-max", "seq_len_max", int)
    _add_flag(p, "--feature-dim", "feature_dim", int)

    p = subs.add_parser("train", help="train a model from a manifest")
    _add_common(p)
    _add_flag(p, "--manifest", "manifest", str)
    _add_flag(p, "--checkpoint", "checkpoint", str)
    _add_flag(p, "--epochs", "epochs", int)
    _add_flag(p, "--batch-size", "batch_size", int)
    _add_flag(p, "--lr", "base_lr", float)
    _add_flag(p, "--hidden-dim", "hidden_dim", int)
    _add_flag(p, "--mlp-hidden-dim", "mlp_hidden_dim", int)
    _add_flag(p, "--dropout-rate", "dropout_rate", float)
    _add_flag(p, "--patience", "patience", int)
    _add_flag(p, "--fixed-epochs", "fixed_epochs", int,
              help="train exactly N epochs, no early stopping, keep final weights")
    p.add_argument("--no-global-vector", action="store_true",
                   help="disable the pooled context vector")
    p.add_argument("--no-dropout", action="store_true", help="set dropout_rate to 0")

    p = subs.add_parser("eval", help="score a checkpoint on a labeled split")
    _add_common(p)
    _add_flag(p, "--manifest", "manifest", str)
    _add_flag(p, "--checkpoint", "checkpoint", str)
    _add_flag(p, "--split", "split", str, choices=("train", "val", "test"))
    _add_flag(p, "--batch-size", "batch_size", int)

    p = subs.add_parser("predict", help="export clamped predictions as CSV")
    _add_common(p)
    _add_flag(p, "--manifest", "manifest", str)
    _add_flag(p, "--checkpoint", "checkpoint", str)
    _add_flag(p, "--split", "split", str, choices=("train", "val", "test"))
    _add_flag(p, "--batch-size", "batch_size", int)
    _add_flag(p, "--predictions", "predictions", str, help="output CSV path")

    p = subs.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--inject-gradient-error", metavar="ARRAY", default=None,
                   help="testing hook: corrupt one analytic gradient array")

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _build_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "predict":
            return cmd_predict(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.inject_gradient_error, args.tolerance)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except GradientCheckError as exc:
        print(f"gradient check failure: {exc}", file=sys.stderr)
        return 4
    except EmiregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

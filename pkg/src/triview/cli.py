"""Config-driven command line entry points.

Every run directory receives the resolved configuration, the seed list, the
per-step and per-epoch logs, checkpoints, and metrics, which is enough to
reproduce the run bit for bit. Exit codes: 0 success, 1 validation error,
2 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, training, verification
from . import views as views_mod
from .model import Model, load_checkpoint, load_for_transfer, save_checkpoint
from .numerics import NumericsError
from .objectives import LossReport
from .training import TrainConfig, TrainingError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

DESK_PROFILE = {
    "length": 64,
    "hidden": 32,
    "num_layers": 2,
    "num_heads": 2,
    "max_epochs": 30,
    "learning_rate": 3e-3,
    "batch_size": 32,
    "early_stop_patience": 8,
    "plateau_patience": 6,
}


class CliError(ValueError):
    pass


def _parse_set(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out[key.strip()] = value
    return out


def _load_config_file(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"config file {path}: {e}") from e


def _views_tuple(text):
    keys = tuple(v.strip() for v in text.split(",") if v.strip())
    if not keys:
        raise CliError("--views needs at least one of t,d,f")
    return keys


def resolve_train_config(args, stage):
    """Defaults -> profile -> config file -> dotted --set -> explicit flags."""
    file_cfg = _load_config_file(args.config)
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    values = {"stage": stage}
    if stage == "pretrain":
        values.update(batch_size=128, max_epochs=200)
    if getattr(args, "profile", "full") == "desk":
        values.update(DESK_PROFILE)
    for key, val in file_cfg.get("train", {}).items():
        if key not in fields:
            raise CliError(f"config train.{key}: unknown field")
        values[key] = val
    for key, val in _parse_set(args.set).items():
        if not key.startswith("train."):
            raise CliError(f"--set key must start with 'train.', got {key!r}")
        name = key[len("train."):]
        if name not in fields:
            raise CliError(f"--set train.{name}: unknown field")
        values[name] = val
    if args.seed is not None:
        values["seed"] = args.seed
    for flag in ("lam", "batch_size", "max_epochs", "learning_rate", "step_budget"):
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    if getattr(args, "views", None):
        values["views"] = _views_tuple(args.views)
    if getattr(args, "no_fusion", False):
        values["fusion"] = False
    if getattr(args, "freeze_encoders", False):
        values["freeze_encoders"] = True
    if "views" in values:
        values["views"] = tuple(values["views"])
    try:
        return TrainConfig(**values), file_cfg
    except (TypeError, TrainingError) as e:
        raise CliError(str(e)) from e


def _out_dir(args, default_name):
    out = Path(args.out) if args.out else Path(default_name)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_artifacts(out, config, seeds, result=None, metrics=None, extra=None):
    record = {
        "train": dataclasses.asdict(config),
        "seeds": list(seeds),
    }
    record["train"]["views"] = list(config.views)
    if extra:
        record.update(extra)
    (out / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    if result is not None:
        with open(out / "steps.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", *LossReport.CSV_FIELDS, "lr"])
            for row in result.steps:
                writer.writerow([row["step"], *[f"{row[k]:.8g}" for k in LossReport.CSV_FIELDS],
                                 f"{row['lr']:.8g}"])
        with open(out / "epochs.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for h in result.history:
                writer.writerow([h.epoch, f"{h.train_loss:.8g}",
                                 "" if h.val_loss is None else f"{h.val_loss:.8g}", f"{h.lr:.8g}"])
    if metrics is not None:
        (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_pretrain(args):
    config, file_cfg = resolve_train_config(args, "pretrain")
    data_path = args.data or file_cfg.get("data")
    if not data_path:
        raise CliError("pretrain needs --data (source dataset directory)")
    source = dataio.load_dataset(data_path)
    out = _out_dir(args, "pretrain_run")
    model = Model.build(config.model_config(source.channel_count, source.num_classes or 2),
                        seed=config.seed)
    result = training.pretrain(model, source, config)
    ckpt = save_checkpoint(result.model, out / "model.ckpt")
    _write_run_artifacts(out, config, [config.seed], result=result,
                         extra={"data": str(data_path), "checkpoint": str(ckpt)})
    best = min(h.train_loss for h in result.history)
    print(f"pretrain: {len(result.history)} epochs, best contrastive loss {best:.6f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_finetune(args):
    config, file_cfg = resolve_train_config(args, "finetune")
    data_path = args.data or file_cfg.get("data")
    if not data_path:
        raise CliError("finetune needs --data (target dataset directory)")
    target = dataio.load_dataset(data_path)
    if target.num_classes is None:
        raise CliError("finetune target must declare classes in meta.json")
    out = _out_dir(args, "finetune_run")
    ckpt_arg = args.checkpoint or file_cfg.get("checkpoint") or "none"
    reinit = []
    if ckpt_arg != "none":
        model, reinit = load_for_transfer(
            ckpt_arg,
            in_channels=target.channel_count,
            num_classes=target.num_classes,
            views=config.views,
            fusion=config.fusion,
            seed=config.seed,
        )
        if model.config.length != config.length or model.config.hidden != config.hidden:
            raise CliError(
                f"checkpoint geometry (L={model.config.length}, D={model.config.hidden}) "
                f"does not match config (L={config.length}, D={config.hidden})"
            )
    else:
        model = Model.build(config.model_config(target.channel_count, target.num_classes),
                            seed=config.seed)
    result, metrics = training.finetune(model, target, config)
    ckpt = save_checkpoint(result.model, out / "model.ckpt")
    _write_run_artifacts(out, config, [config.seed], result=result, metrics=metrics,
                         extra={"data": str(data_path), "checkpoint_in": ckpt_arg,
                                "checkpoint": str(ckpt), "reinitialized": reinit})
    print(f"finetune: accuracy {metrics.accuracy:.4f}  macro-F1 {metrics.macro_f1:.4f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args):
    config, file_cfg = resolve_train_config(args, "finetune")
    data_path = args.data or file_cfg.get("data")
    if not data_path or not args.checkpoint:
        raise CliError("eval needs --data and --checkpoint")
    target = dataio.load_dataset(data_path)
    model = load_checkpoint(args.checkpoint)
    run_cfg = dataclasses.replace(
        config,
        length=model.config.length,
        hidden=model.config.hidden,
        num_layers=model.config.num_layers,
        num_heads=model.config.num_heads,
    )
    prepared = training.prepare_dataset(target, run_cfg)
    if args.split not in prepared:
        raise CliError(f"dataset has no {args.split!r} split")
    metrics = training.evaluate(model, prepared[args.split])
    out = _out_dir(args, "eval_run")
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"eval[{args.split}]: accuracy {metrics.accuracy:.4f}  macro-F1 {metrics.macro_f1:.4f}")
    return EXIT_OK


def cmd_gradcheck(args):
    dtype = np.float64
    results = verification.run_battery(dtype, seeds=tuple(range(args.seeds)))
    results.append(verification.model_check_32bit())
    failures = [r for r in results if not r.passed]
    for r in results:
        print(r.line())
    if failures:
        print(f"{len(failures)} op(s) exceeded threshold")
        return EXIT_RUNTIME
    print(f"all {len(results)} gradient checks passed")
    return EXIT_OK


def cmd_ablate(args):
    config, file_cfg = resolve_train_config(args, "finetune")
    data_path = args.data or file_cfg.get("data")
    if not data_path:
        raise CliError("ablate needs --data (target dataset directory)")
    grid_raw = args.grid or file_cfg.get("grid")
    if not grid_raw:
        raise CliError("ablate needs --grid (JSON object of axis -> values)")
    grid = json.loads(grid_raw) if isinstance(grid_raw, str) else grid_raw
    grid = {k: [tuple(v) if isinstance(v, list) else v for v in vals] for k, vals in grid.items()}
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [0, 1, 2, 3, 4]
    target = dataio.load_dataset(data_path)
    out = _out_dir(args, "ablation_run")
    rows, aggs = training.run_ablation_grid(
        config, grid, target, seeds, checkpoint=args.checkpoint, workers=args.workers
    )
    (out / "runs.csv").write_text(training.results_to_csv(rows))
    (out / "aggregates.csv").write_text(training.results_to_csv(aggs))
    (out / "aggregates.md").write_text(training.results_to_markdown(aggs))
    record = {"train": dataclasses.asdict(config), "grid": {k: [list(v) if isinstance(v, tuple) else v for v in vals] for k, vals in grid.items()}, "seeds": seeds}
    record["train"]["views"] = list(config.views)
    (out / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(training.results_to_markdown(aggs))
    print(f"{len(rows)} runs -> {out}")
    return EXIT_OK


def cmd_gen_synth(args):
    spec = dataio.xor_preset(
        n_train=args.n_train,
        n_val=args.n_val,
        n_test=args.n_test,
        length=args.length,
        channels=args.channels,
        slope=args.slope,
        f_lo=args.f_lo,
        f_hi=args.f_hi,
        amplitude=args.amplitude,
        noise_std=args.noise_std,
        slope_offset=args.slope_offset,
        freq_offset=args.freq_offset,
        seed=args.seed if args.seed is not None else 0,
    )
    source, target = dataio.generate_synthetic(spec)
    out = _out_dir(args, "synth")
    dataio.save_dataset(source, out / "source")
    dataio.save_dataset(target, out / "target")
    (out / "spec.json").write_text(json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(source)} source and {len(target)} target samples to {out}")
    return EXIT_OK


def cmd_extract_views(args):
    ds = dataio.load_dataset(args.data)
    indices = [int(i) for i in args.indices.split(",")] if args.indices else [0]
    out = _out_dir(args, "views_dump")
    dt = 1.0 / ds.freq_hz if ds.freq_hz else 1.0
    names = ("temporal", "derivative", "frequency")
    columns = {n: [] for n in names}
    header = []
    for i in indices:
        if not 0 <= i < len(ds):
            raise CliError(f"sample index {i} outside dataset of {len(ds)}")
        sample = dataio.normalize(ds.samples[i])
        vs = views_mod.extract_views(sample.values, dt=dt)
        for name, arr in zip(names, vs.as_tuple()):
            columns[name].append(arr)
        header.extend(f"sample{i}_ch{c}" for c in range(ds.channel_count))
    for name in names:
        data = np.hstack(columns[name])
        with open(out / f"{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([f"{v:.9g}" for v in row] for row in data)
    print(f"wrote {', '.join(n + '.csv' for n in names)} to {out}")
    return EXIT_OK


def cmd_convert_csv(args):
    inputs = []
    for item in args.input:
        p = Path(item)
        if p.is_dir():
            inputs.extend(sorted(p.glob("*.csv")))
        else:
            inputs.append(p)
    if not inputs:
        raise CliError("no CSV inputs found")
    labels = None
    if args.labels:
        labels = {}
        with open(args.labels) as fh:
            for row in csv.reader(fh):
                if row:
                    labels[Path(row[0]).stem] = int(row[1])
    splits = None
    if args.splits:
        n1, n2, n3 = (int(x) for x in args.splits.split(","))
        splits = {"train": n1, "val": n2, "test": n3}
    out = dataio.convert_csv(
        inputs,
        args.out or "converted",
        channels=args.channels,
        labels=labels,
        num_classes=args.classes,
        splits=splits,
        freq_hz=args.freq_hz,
    )
    print(f"wrote dataset to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="triview",
        description="Multi-view contrastive time-series domain adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="training seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--profile", choices=["desk", "full"], default="full")
        p.add_argument("--set", action="append", metavar="train.KEY=VALUE",
                       help="dotted config override (repeatable)")

    def train_flags(p):
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--views", help="comma-separated view subset, e.g. d,f")
        p.add_argument("--no-fusion", action="store_true", help="disable cross-view fusion")
        p.add_argument("--lam", type=float, help="contrastive loss weight")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--step-budget", dest="step_budget", type=int)

    p = sub.add_parser("pretrain", help="contrastive pre-training on a source dataset")
    common(p)
    train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning on a target dataset")
    common(p)
    train_flags(p)
    p.add_argument("--checkpoint", help="pretrained checkpoint, or 'none' for random init")
    p.add_argument("--freeze-encoders", action="store_true",
                   help="train only the classifier")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient battery")
    common(p)
    p.add_argument("--seeds", type=int, default=1, help="random draws per op case")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="seeded grid sweep over config axes")
    common(p)
    train_flags(p)
    p.add_argument("--grid", help='JSON, e.g. {"views": [["t"],["t","d","f"]], "lam": [0,0.1]}')
    p.add_argument("--seeds", help="comma-separated seed list (default 0-4)")
    p.add_argument("--checkpoint", help="optional pretrained checkpoint")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synth", help="write the synthetic source/target datasets")
    common(p)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-val", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--slope", type=float, default=0.04)
    p.add_argument("--f-lo", type=float, default=12.0)
    p.add_argument("--f-hi", type=float, default=15.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--noise-std", type=float, default=0.8)
    p.add_argument("--slope-offset", type=float, default=0.01)
    p.add_argument("--freq-offset", type=float, default=2.0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("extract-views", help="dump the three views of samples as CSV")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--indices", help="comma-separated sample indices (default 0)")
    p.set_defaults(func=cmd_extract_views)

    p = sub.add_parser("convert-csv", help="ingest plain CSV samples into the dataset format")
    common(p)
    p.add_argument("--input", nargs="+", required=True, help="CSV files or directories")
    p.add_argument("--channels", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--labels", help="CSV of filename,label pairs")
    p.add_argument("--splits", help="train,val,test sizes, e.g. 60,20,20")
    p.add_argument("--freq-hz", type=float)
    p.set_defaults(func=cmd_convert_csv)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (CliError, dataio.DataError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingError, NumericsError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

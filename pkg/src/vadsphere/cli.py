"""Command-line interface.

Subcommands: transform, partition-stats, synth, train, eval, gradcheck.
Settings resolve as built-in defaults < ``--config`` file < explicit flags,
and every run echoes the resolved settings. Exit codes: 0 success, 1 a check
or metric failed, 2 usage or input error.
"""

import argparse
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import checkpoint, geometry
from .data import Dataset, filter_x_labels, load_manifest
from .errors import VadSphereError
from .losses import ScheduleConfig, inverse_frequency_weights
from .metrics import format_vad_table, make_report
from .model import ModelConfig, Pooling, init_model
from .train import AuxMode, TaskData, TrainConfig, WceMode, fit, format_history, predict

log = logging.getLogger("vadsphere")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


DEFAULTS = {
    "transform": {"vad": None, "angle": 90.0},
    "partition-stats": {"manifest": None, "angle": 90.0, "keep_x": False},
    "synth": {"out": None, "n": 512, "feat_dim": 16, "frames": 10, "noise": 0.05,
              "seed": 0, "angle": 90.0},
    "train": {"train": None, "val": None, "out": None, "angle": 90.0, "keep_x": False,
              "feat_dim": 0, "hidden_dim": 32, "n_heads": 2, "kernel_size": 5,
              "pooling": "style", "epochs": 30, "batch_size": 32, "lr": 1e-3,
              "weight_decay": 0.01, "aux_mode": "spherical", "wce_mode": "weighted",
              "dynamic_weighting": True, "cutoff_epoch": 5, "seed": 0},
    "eval": {"checkpoint": None, "manifest": None, "angle": 0.0, "out": None, "keep_x": False},
    "gradcheck": {"seeds": 20, "feat_dim": 16, "hidden_dim": 32, "n_heads": 2,
                  "kernel_size": 5, "n_regions": 8},
}

CASTS = {
    "angle": float, "noise": float, "lr": float, "weight_decay": float,
    "n": int, "feat_dim": int, "frames": int, "seed": int, "hidden_dim": int, "n_heads": int,
    "kernel_size": int, "epochs": int, "batch_size": int, "cutoff_epoch": int, "seeds": int,
    "n_regions": int, "keep_x": _bool, "dynamic_weighting": _bool,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} for {command}")
            cfg[key] = value
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key, value in cfg.items():
        if value is not None and key in CASTS:
            try:
                cfg[key] = CASTS[key](value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
    return cfg


def echo_config(command: str, cfg: dict) -> None:
    print(f"# {command} " + " ".join(f"{k}={cfg[k]}" for k in sorted(cfg)))


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _parse_triple(text):
    try:
        parts = [float(p) for p in str(text).split(",")]
    except ValueError as exc:
        raise UsageError(f"--vad expects three comma-separated numbers, got {text!r}") from exc
    if len(parts) != 3:
        raise UsageError(f"--vad expects three comma-separated numbers, got {text!r}")
    return parts


# -- subcommands ---------------------------------------------------------------


def cmd_transform(cfg) -> int:
    _require(cfg, "vad")
    v, a, d = _parse_triple(cfg["vad"])
    part = geometry.make_partition(cfg["angle"])
    norm = geometry.normalize_vad(geometry.VadPoint(v, a, d, geometry.Scale.RAW17))
    sph = geometry.to_spherical(norm)
    label = geometry.assign_region(part, sph)
    a_idx, e_idx = divmod(label, part.n_theta)
    print(f"normalized: v={norm.v:.6f} a={norm.a:.6f} d={norm.d:.6f}")
    note = " (degenerate origin: angles set to 0)" if sph.r < geometry.DEGENERATE_RADIUS else ""
    print(f"spherical: r={sph.r:.6f} azimuth={sph.azimuth_deg:.4f}deg "
          f"elevation={sph.elevation_deg:.4f}deg{note}")
    print(f"region: index={label} of N={part.n_regions} (azimuth cell {a_idx}, elevation cell {e_idx})")
    return EXIT_OK


def _load_records(path, keep_x):
    records = load_manifest(path)
    return records if keep_x else filter_x_labels(records)


def cmd_partition_stats(cfg) -> int:
    _require(cfg, "manifest")
    part = geometry.make_partition(cfg["angle"])
    records = _load_records(cfg["manifest"], cfg["keep_x"])
    ds = Dataset(records, part)
    counts = ds.region_counts
    total = int(counts.sum())
    print(f"partition angle={cfg['angle']:g} n_phi={part.n_phi} n_theta={part.n_theta} N={part.n_regions}")
    if total == 0:
        log.warning("manifest has no records; weights undefined")
        weights = None
    else:
        weights = inverse_frequency_weights(counts).w
    print(f"{'region':>6} {'azimuth':>15} {'elevation':>15} {'count':>7} {'percent':>8} {'weight':>10}")
    for label in range(part.n_regions):
        a_idx, e_idx = divmod(label, part.n_theta)
        az = f"[{a_idx * part.azimuth_width:g},{(a_idx + 1) * part.azimuth_width:g})"
        el = f"[{e_idx * part.elevation_width:g},{(e_idx + 1) * part.elevation_width:g})"
        pct = 100.0 * counts[label] / total if total else 0.0
        w = f"{weights[label]:.6f}" if weights is not None else "-"
        print(f"{label:>6} {az:>15} {el:>15} {counts[label]:>7} {pct:>7.2f}% {w:>10}")
    occupied = int((counts > 0).sum())
    print(f"total records={total} occupied_regions={occupied}/{part.n_regions}")
    return EXIT_OK


def cmd_synth(cfg) -> int:
    from .data import synthesize_dataset

    _require(cfg, "out")
    ds, _, _ = synthesize_dataset(
        cfg["n"], cfg["feat_dim"], cfg["frames"], cfg["noise"], cfg["seed"],
        cfg["angle"], out_dir=cfg["out"],
    )
    splits = {}
    for r in ds.records:
        splits[r.split.value] = splits.get(r.split.value, 0) + 1
    print(f"wrote {len(ds)} utterances to {cfg['out']} "
          + " ".join(f"{k}={splits.get(k, 0)}" for k in ("train", "val", "test")))
    return EXIT_OK


def _dataset(path, part, keep_x, feat_dim):
    records = _load_records(path, keep_x)
    ds = Dataset(records, part)
    return ds.load_all_features(feat_dim, root=Path(path).parent)


def _first_feature_dim(path):
    from .data import read_features

    records = load_manifest(path)
    if not records:
        raise UsageError(f"manifest {path} is empty")
    feat = Path(records[0].feature_path)
    if not feat.is_absolute():
        feat = Path(path).parent / feat
    return read_features(feat).shape[1]


def cmd_train(cfg) -> int:
    _require(cfg, "train", "val", "out")
    part = geometry.make_partition(cfg["angle"])
    feat_dim = cfg["feat_dim"] or _first_feature_dim(cfg["train"])
    train_set = _dataset(cfg["train"], part, cfg["keep_x"], feat_dim)
    val_set = _dataset(cfg["val"], part, cfg["keep_x"], feat_dim)
    tcfg = TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
        weight_decay=cfg["weight_decay"],
        schedule=ScheduleConfig(cutoff_epoch=cfg["cutoff_epoch"], enabled=cfg["dynamic_weighting"]),
        aux_mode=AuxMode(cfg["aux_mode"]), wce_mode=WceMode(cfg["wce_mode"]), seed=cfg["seed"],
    )
    n_classes = part.n_regions
    class_names = []
    if tcfg.aux_mode is AuxMode.CATEGORICAL:
        class_names = sorted({r.category for r in train_set.records})
        n_classes = len(class_names)
    mcfg = ModelConfig(
        feat_dim=feat_dim, hidden_dim=cfg["hidden_dim"], n_heads=cfg["n_heads"],
        kernel_size=cfg["kernel_size"], n_regions=n_classes, pooling=Pooling(cfg["pooling"]),
        seed=cfg["seed"],
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    meta = {"angle_deg": cfg["angle"], "aux_mode": tcfg.aux_mode.value,
            "class_names": class_names}
    result = fit(init_model(mcfg), train_set, val_set, tcfg,
                 checkpoint_path=out / "checkpoint.bin", meta=meta)
    (out / "history.tsv").write_text(format_history(result.history), encoding="utf-8")
    best = result.history[result.best_epoch]
    (out / "val_report.json").write_text(best.report.to_json(), encoding="utf-8")
    print(f"best epoch={result.best_epoch} val_loss={result.best_val_loss:.6f}")
    print(format_vad_table(best.report))
    print(f"macro_f1={best.report.macro_f1:.4f} accuracy={best.report.accuracy:.4f}")
    return EXIT_OK


def cmd_eval(cfg) -> int:
    _require(cfg, "checkpoint", "manifest", "out")
    try:
        model, meta = checkpoint.load(cfg["checkpoint"])
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from exc
    angle = cfg["angle"] or meta.get("angle_deg", 90.0)
    part = geometry.make_partition(angle)
    categorical = meta.get("aux_mode") == AuxMode.CATEGORICAL.value
    if not categorical and model.cfg.n_regions != part.n_regions:
        raise UsageError(
            f"checkpoint has N={model.cfg.n_regions} regions but --angle {angle:g} gives N={part.n_regions}"
        )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    manifests = cfg["manifest"] if isinstance(cfg["manifest"], list) else [cfg["manifest"]]
    for path in manifests:
        ds = _dataset(path, part, cfg["keep_x"], model.cfg.feat_dim)
        if len(ds) < 2:
            raise UsageError(f"{path}: need at least 2 utterances to evaluate")
        if categorical:
            index = {c: i for i, c in enumerate(meta["class_names"])}
            try:
                targets = np.array([index[r.category] for r in ds.records])
            except KeyError as exc:
                raise UsageError(f"{path}: category {exc} unknown to the checkpoint") from exc
        else:
            targets = ds.regions()
        data = TaskData(ds.features, ds.vad_norm(), targets, ds.regions())
        vad, logits = predict(model, data)
        report = make_report(vad, data.vad, logits, targets, model.cfg.n_regions)
        stem = Path(path).stem
        (out / f"{stem}.report.txt").write_text(report.to_text(), encoding="utf-8")
        (out / f"{stem}.report.json").write_text(report.to_json(), encoding="utf-8")
        print(f"[{stem}] n={len(ds)}")
        print(format_vad_table(report))
        print(f"macro_f1={report.macro_f1:.4f} accuracy={report.accuracy:.4f}")
    return EXIT_OK


def cmd_gradcheck(cfg) -> int:
    from . import gradcheck

    mcfg = ModelConfig(
        feat_dim=cfg["feat_dim"], hidden_dim=cfg["hidden_dim"], n_heads=cfg["n_heads"],
        kernel_size=cfg["kernel_size"], n_regions=cfg["n_regions"],
    )
    results = gradcheck.run_suite(cfg["seeds"], cfg=mcfg)
    failed = False
    for name, worst in gradcheck.summarize(results).items():
        status = "ok" if worst.ok else "FAIL"
        failed |= not worst.ok
        print(f"{name:<24} max_rel_err={worst.max_rel_err:.3e} tol={worst.tol:.0e} "
              f"(seed {worst.seed}) {status}")
    overall = max(r.max_rel_err for r in results)
    print(f"checks={len(results)} max_rel_err={overall:.3e}")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "transform": cmd_transform,
    "partition-stats": cmd_partition_stats,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vadsphere", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value settings file")
        return p

    p = add("transform", "normalize a raw VAD triple and locate its region")
    p.add_argument("--vad", help="raw valence,arousal,dominance on the 1..7 scale")
    p.add_argument("--angle", type=float)

    p = add("partition-stats", "region occupancy and inverse-frequency weights")
    p.add_argument("--manifest")
    p.add_argument("--angle", type=float)
    p.add_argument("--keep-x", action="store_const", const=True)

    p = add("synth", "write a synthetic feature dataset")
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    p.add_argument("--feat-dim", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--angle", type=float)

    p = add("train", "train and keep the best-validation checkpoint")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--out")
    p.add_argument("--angle", type=float)
    p.add_argument("--keep-x", action="store_const", const=True)
    p.add_argument("--feat-dim", type=int, help="0 infers it from the first feature file")
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--kernel-size", type=int)
    p.add_argument("--pooling", choices=[m.value for m in Pooling])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--aux-mode", choices=[m.value for m in AuxMode])
    p.add_argument("--wce-mode", choices=[m.value for m in WceMode])
    p.add_argument("--no-dynamic-weighting", dest="dynamic_weighting",
                   action="store_const", const=False)
    p.add_argument("--cutoff-epoch", type=int)
    p.add_argument("--seed", type=int)

    p = add("eval", "evaluate a checkpoint on one or more manifests")
    p.add_argument("--checkpoint")
    p.add_argument("--manifest", action="append")
    p.add_argument("--angle", type=float, help="defaults to the checkpoint's angle")
    p.add_argument("--out")
    p.add_argument("--keep-x", action="store_const", const=True)

    p = add("gradcheck", "finite-difference gradient suite")
    p.add_argument("--seeds", type=int)
    p.add_argument("--feat-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--kernel-size", type=int)
    p.add_argument("--n-regions", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve(args.command, args)
        echo_config(args.command, cfg)
        return COMMANDS[args.command](cfg)
    except (UsageError, VadSphereError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

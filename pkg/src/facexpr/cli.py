"""``facexpr`` command line.

Subcommands: ``edges``, ``prep``, ``train``, ``grid``, ``classify``,
``eval`` and ``synth``.  Usage errors exit with status 2, failures while
working exit with status 1 and leave no partial output behind.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .canny import CannyConfig, canny, edges_to_image
from .imgio import Rect, read_pgm, write_pgm
from .mlp import Expression
from .pipeline import (
    DEFAULT_HIDDEN,
    DEFAULT_RATES,
    ModelFormatError,
    PipelineError,
    build_features,
    grid_search,
    load_model,
    model_to_json,
    preprocess,
    read_manifest,
    region_set,
    train_expression_model,
    report_from_predictions,
    resolve_split,
    write_history_csv,
)
from .regions import REGION_NAMES, RegionLayout, default_layout

DEFAULT_SEED = 0


class CommandError(Exception):
    """Failure inside a stage; reported with exit status 1."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")


@contextlib.contextmanager
def _atomic(path):
    """Yield a temporary sibling path that replaces ``path`` only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_text(path, text: str) -> None:
    with _atomic(path) as tmp:
        tmp.write_text(text)


# ---------------------------------------------------------------------------
# argument helpers


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _non_negative_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _non_negative_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _list_of(convert):
    def parse(text):
        items = [t for t in text.replace(" ", "").split(",") if t]
        if not items:
            raise argparse.ArgumentTypeError("list must not be empty")
        return [convert(t) for t in items]

    return parse


def _rect(text):
    try:
        parts = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,w,h, got {text!r}") from None
    if len(parts) != 4 or parts[0] < 0 or parts[1] < 0 or parts[2] < 1 or parts[3] < 1:
        raise argparse.ArgumentTypeError(f"expected x,y,w,h with w,h >= 1, got {text!r}")
    return Rect(*parts)


def _settings(args, parser):
    """Layout and Canny settings from ``--config`` plus flag overrides."""
    layout, canny_doc = default_layout(), {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
            if "layout" in doc:
                layout = RegionLayout.from_dict(doc["layout"])
            canny_doc = dict(doc.get("canny", {}))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            parser.error(f"cannot use config {args.config}: {exc}")
    if args.low is not None or args.high is not None:
        if args.low is None or args.high is None:
            parser.error("--low and --high must be given together")
        canny_doc["low"], canny_doc["high"] = args.low, args.high
    try:
        cfg = CannyConfig.from_dict(canny_doc)
    except (TypeError, ValueError) as exc:
        parser.error(str(exc))
    return layout, cfg


def _add_image_options(p):
    p.add_argument("--low", type=_positive_float, help="absolute low hysteresis threshold")
    p.add_argument("--high", type=_positive_float, help="absolute high hysteresis threshold")
    p.add_argument("--crop", type=_rect, help="face crop window x,y,w,h (default: centred 85x85)")
    p.add_argument("--config", help="JSON file with optional 'layout' and 'canny' sections")


def _add_training_options(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"seed for every random choice (default {DEFAULT_SEED})")
    p.add_argument("--per-class-test", type=_non_negative_int, default=10, help="test images per class when the manifest is untagged")
    p.add_argument("--components", type=_positive_int, default=40, help="PCA components per region")
    p.add_argument("--max-epochs", type=_positive_int, default=200000)
    p.add_argument("--target-error", type=_non_negative_float, default=1e-7, help="stop once epoch MSE falls to this value")


# ---------------------------------------------------------------------------
# commands


def _load_image(path):
    try:
        return read_pgm(path)
    except OSError as exc:
        raise CommandError("load", f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise CommandError("load", f"{path}: {exc}") from exc


def cmd_edges(args, parser):
    layout, cfg = _settings(args, parser)
    img = _load_image(args.image)
    try:
        face = preprocess(img, layout.face_size[0], args.crop)
    except ValueError as exc:
        raise CommandError("preprocess", str(exc)) from exc
    try:
        edges = canny(face, cfg)
    except ValueError as exc:
        raise CommandError("canny", str(exc)) from exc
    with _atomic(args.output) as tmp:
        write_pgm(tmp, edges_to_image(edges))
    print(f"edge pixels: {int(edges.sum())}")


def cmd_prep(args, parser):
    layout, cfg = _settings(args, parser)
    img = _load_image(args.image)
    try:
        face = preprocess(img, layout.face_size[0], args.crop)
        rs = region_set(img, layout, cfg, args.crop)
    except ValueError as exc:
        raise CommandError("preprocess", str(exc)) from exc
    with _atomic(args.output) as tmp:
        write_pgm(tmp, face)
    if args.patches:
        out = Path(args.patches)
        out.mkdir(parents=True, exist_ok=True)
        for name, patch in zip(REGION_NAMES, rs.patches):
            tw, th = layout[name].target
            pix = np.clip(np.floor(patch.values + 0.5), 0, 255).astype(np.uint8).reshape(th, tw)
            with _atomic(out / f"{name}.pgm") as tmp:
                write_pgm(tmp, pix)
    for name in REGION_NAMES:
        r = rs.rects[name]
        print(f"{name:<14} x={r.x} y={r.y} w={r.w} h={r.h}")


def _records(path):
    try:
        return read_manifest(path)
    except OSError as exc:
        raise CommandError("manifest", f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise CommandError("manifest", str(exc)) from exc


def cmd_train(args, parser):
    layout, cfg = _settings(args, parser)
    records = _records(args.manifest)
    try:
        model, history, _ = train_expression_model(
            records,
            hidden=args.hidden,
            rate=args.rate,
            max_epochs=args.max_epochs,
            target_error=args.target_error,
            seed=args.seed,
            per_class_test=args.per_class_test,
            layout=layout,
            canny_cfg=cfg,
            n_components=args.components,
            crop_rect=args.crop,
        )
    except PipelineError as exc:
        raise CommandError(exc.stage, str(exc).split(": ", 1)[1]) from exc
    history_path = args.history or str(Path(args.output).with_suffix(".history.csv"))
    with _atomic(args.output) as model_tmp, _atomic(history_path) as hist_tmp:
        model_tmp.write_text(model_to_json(model))
        write_history_csv(hist_tmp, history)
    print(f"epochs run: {history.size}")
    print(f"final mse: {float(history[-1])!r}")
    print(f"train/test images: {model.metadata['n_train']}/{model.metadata['n_test']}")


def cmd_grid(args, parser):
    layout, cfg = _settings(args, parser)
    records = _records(args.manifest)
    try:
        train_recs, test_recs = resolve_split(records, args.seed, args.per_class_test)
    except ValueError as exc:
        raise CommandError("split", str(exc)) from exc
    if not test_recs:
        raise CommandError("split", "grid search needs held-out test images")
    try:
        feats = build_features(train_recs, test_recs, layout, cfg, args.components, args.crop)
    except PipelineError as exc:
        raise CommandError(exc.stage, str(exc).split(": ", 1)[1]) from exc
    result = grid_search(
        feats.train_x,
        feats.train_y,
        feats.test_x,
        feats.test_y,
        rates=args.rates,
        hidden=args.hidden,
        max_epochs=args.max_epochs,
        target_error=args.target_error,
        seed=args.seed,
        jobs=args.jobs,
    )
    _write_text(args.output, result.to_csv())
    h, r, acc = result.best
    print(f"cells: {result.accuracy.size}")
    print(f"best: hidden={h} rate={r} accuracy={acc:.2f}%")


def _model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise CommandError("load model", f"{path}: {exc.strerror or exc}") from exc
    except ModelFormatError as exc:
        raise CommandError("load model", f"{path}: {exc}") from exc


def cmd_classify(args, parser):
    model = _model(args.model)
    img = _load_image(args.image)
    try:
        label, out = model.classify_image(img)
    except ValueError as exc:
        raise CommandError("features", str(exc)) from exc
    print(f"label: {label.label}")
    for e, v in zip(Expression, out):
        print(f"Y{int(e)} {e.label:<10} {v:.6f}")


def cmd_eval(args, parser):
    model = _model(args.model)
    records = _records(args.manifest)
    if args.subset != "all":
        seed = int(model.metadata.get("seed", DEFAULT_SEED))
        per_class = int(model.metadata.get("per_class_test", 10))
        try:
            train_recs, test_recs = resolve_split(records, seed, per_class)
        except ValueError as exc:
            raise CommandError("split", str(exc)) from exc
        records = test_recs if args.subset == "test" else train_recs
    if not records:
        raise CommandError("eval", "no images to evaluate")
    preds = []
    for r in records:
        img = _load_image(r.path)
        try:
            preds.append(int(model.classify_image(img)[0]))
        except ValueError as exc:
            raise CommandError("features", f"{r.path}: {exc}") from exc
    report = report_from_predictions([int(r.label) for r in records], preds)
    if args.csv:
        _write_text(args.csv, report.to_csv())
    print(report.table())


def cmd_synth(args, parser):
    from .synth import synth_dataset

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}."))
    try:
        synth_dataset(staging, args.per_class, args.seed)
        out.mkdir(exist_ok=True)
        for f in sorted(staging.iterdir()):
            os.replace(f, out / f.name)
    except OSError as exc:
        raise CommandError("synth", str(exc)) from exc
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(f"wrote {args.per_class * len(Expression)} images and {out / 'manifest.csv'}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facexpr", description="Facial expression classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edges", help="write the Canny edge map of a preprocessed face")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    _add_image_options(p)
    p.set_defaults(func=cmd_edges, subparser=p)

    p = sub.add_parser("prep", help="write the cropped, equalized face and optional region patches")
    p.add_argument("image")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--patches", help="directory for per-region patch PGMs")
    _add_image_options(p)
    p.set_defaults(func=cmd_prep, subparser=p)

    p = sub.add_parser("train", help="extract features and train a classifier")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="model file (JSON)")
    p.add_argument("--history", help="epoch history CSV (default: <model>.history.csv)")
    p.add_argument("--hidden", type=_positive_int, default=10)
    p.add_argument("--rate", type=_positive_float, default=0.3)
    _add_training_options(p)
    _add_image_options(p)
    p.set_defaults(func=cmd_train, subparser=p)

    p = sub.add_parser("grid", help="learning-rate x hidden-node grid search")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="grid CSV")
    p.add_argument("--rates", type=_list_of(_positive_float), default=list(DEFAULT_RATES))
    p.add_argument("--hidden", type=_list_of(_positive_int), default=list(DEFAULT_HIDDEN))
    p.add_argument("--jobs", type=_positive_int, default=1, help="parallel cells")
    _add_training_options(p)
    _add_image_options(p)
    p.set_defaults(func=cmd_grid, subparser=p)

    p = sub.add_parser("classify", help="classify one image")
    p.add_argument("model")
    p.add_argument("image")
    p.set_defaults(func=cmd_classify, subparser=p)

    p = sub.add_parser("eval", help="evaluate a model on a manifest")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--csv", help="write confusion matrix and accuracies as CSV")
    p.add_argument(
        "--subset",
        choices=("test", "train", "all"),
        default="test",
        help="which side of the split to score (untagged manifests are re-split with the model's seed)",
    )
    p.set_defaults(func=cmd_eval, subparser=p)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_synth, subparser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = args.subparser
    if args.command == "synth" and args.per_class < 2:
        sub.error("--per-class must be at least 2")
    try:
        args.func(args, sub)
    except CommandError as exc:
        print(f"facexpr {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

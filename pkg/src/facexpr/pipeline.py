"""End-to-end orchestration: manifests, stratified splits, feature
assembly, z-score normalisation, training, grid search, evaluation and the
persisted :class:`ExpressionModel`.

Feature vectors are the concatenation of the per-region PCA coefficients in
:data:`facexpr.regions.REGION_NAMES` order (40 per region by default, 200 in
total).
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .canny import CannyConfig, canny
from .imgio import Rect, as_gray, center_rect, crop, histogram_equalize, read_pgm
from .mlp import Expression, MlpModel, TrainConfig, XorShift64Star, _splitmix64, forward, init_weights, train
from .pca import PcaModel, pca_fit, pca_project
from .regions import REGION_NAMES, RegionLayout, RegionSet, default_layout, extract_all

__all__ = [
    "FORMAT_VERSION",
    "DEFAULT_RATES",
    "DEFAULT_HIDDEN",
    "PipelineError",
    "ModelFormatError",
    "ModelVersionError",
    "ManifestRecord",
    "read_manifest",
    "write_manifest",
    "jaffe_label",
    "manifest_from_directory",
    "split",
    "resolve_split",
    "preprocess",
    "region_set",
    "Normalizer",
    "FeatureSet",
    "build_features",
    "one_hot",
    "cell_seed",
    "fit_classifier",
    "ExpressionModel",
    "train_expression_model",
    "EvalReport",
    "report_from_predictions",
    "evaluate",
    "GridResult",
    "grid_search",
    "save_model",
    "load_model",
    "model_to_json",
    "model_from_json",
    "write_history_csv",
]

FORMAT_VERSION = 1
DEFAULT_RATES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_HIDDEN = (5, 10, 15, 20, 25)


class PipelineError(RuntimeError):
    """A stage failed; the message names the stage and, where relevant, the image."""

    def __init__(self, stage: str, message: str, path=None):
        self.stage = stage
        self.path = path
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{stage}: {where}{message}")


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestRecord:
    path: Path
    label: Expression
    split: Optional[str] = None  # "train", "test" or None


def read_manifest(path) -> list[ManifestRecord]:
    """Read a ``path,label,split`` CSV; relative image paths resolve against
    the manifest's directory."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: manifest needs a header with at least 'path,label'")
        records = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            p = Path(row["path"].strip())
            if not p.is_absolute():
                p = base / p
            if p in seen:
                raise ValueError(f"{path}:{lineno}: duplicate image path {row['path']!r}")
            seen.add(p)
            try:
                label = Expression.parse(row["label"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            tag = (row.get("split") or "").strip().lower() or None
            if tag not in (None, "train", "test"):
                raise ValueError(f"{path}:{lineno}: split must be train, test or empty, got {tag!r}")
            records.append(ManifestRecord(p, label, tag))
    return records


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        for r in records:
            writer.writerow([Path(r.path).as_posix(), r.label.label, r.split or ""])


_JAFFE_CODES = {
    "AN": Expression.ANGER,
    "DI": Expression.DISGUST,
    "FE": Expression.FEAR,
    "HA": Expression.HAPPINESS,
    "NE": Expression.NEUTRAL,
    "SA": Expression.SADNESS,
    "SU": Expression.SURPRISE,
}
_JAFFE_NAME = re.compile(r"^[A-Z]{2}\.([A-Z]{2})\d*\.\d+\.", re.IGNORECASE)


def jaffe_label(filename) -> Expression:
    """Label from a JAFFE-style file name such as ``KA.AN1.39.pgm``."""
    m = _JAFFE_NAME.match(Path(filename).name)
    if m is None or m.group(1).upper() not in _JAFFE_CODES:
        raise ValueError(f"{filename}: not a JAFFE-style file name")
    return _JAFFE_CODES[m.group(1).upper()]


def manifest_from_directory(directory, pattern: str = "*.pgm") -> list[ManifestRecord]:
    """Records for every JAFFE-named image in ``directory`` (sorted by name)."""
    directory = Path(directory)
    return [ManifestRecord(p, jaffe_label(p)) for p in sorted(directory.glob(pattern))]


def split(records: Sequence[ManifestRecord], seed: int = 0, per_class_test: int = 10):
    """Stratified split with exactly ``per_class_test`` test images per class.

    Each class's records (in manifest order) are shuffled with
    :class:`XorShift64Star` (stream 2) and the first ``per_class_test`` go to
    the test side.  Both returned lists keep manifest order and carry their
    split tag.
    """
    if per_class_test < 0:
        raise ValueError("per_class_test must be non-negative")
    rng = XorShift64Star(seed, stream=2)
    test_idx = set()
    for label in Expression:
        idx = [i for i, r in enumerate(records) if r.label == label]
        if not idx:
            continue
        if per_class_test and len(idx) <= per_class_test:
            raise ValueError(
                f"class {label.label} has {len(idx)} images; need more than {per_class_test} for the test split"
            )
        for i in range(len(idx) - 1, 0, -1):
            j = rng.next_u64() % (i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        test_idx.update(idx[:per_class_test])
    train = [ManifestRecord(r.path, r.label, "train") for i, r in enumerate(records) if i not in test_idx]
    test = [ManifestRecord(r.path, r.label, "test") for i, r in enumerate(records) if i in test_idx]
    return train, test


def resolve_split(records, seed, per_class_test):
    """Use the manifest's own train/test tags when present, otherwise
    :func:`split`."""
    tags = {r.split for r in records}
    if tags & {"train", "test"}:
        if None in tags:
            raise ValueError("manifest mixes tagged and untagged records")
        return [r for r in records if r.split == "train"], [r for r in records if r.split == "test"]
    return split(records, seed, per_class_test)


# ---------------------------------------------------------------------------
# per-image preprocessing


def preprocess(img, face_size: int = 85, crop_rect: Optional[Rect] = None) -> np.ndarray:
    """Crop to the face and equalize.

    Without ``crop_rect`` an image already ``face_size`` square is used as
    is and larger images get a centred ``face_size`` crop.
    """
    arr = as_gray(img)
    h, w = arr.shape
    if crop_rect is not None:
        arr = crop(arr, crop_rect)
    elif (w, h) != (face_size, face_size):
        arr = crop(arr, center_rect(w, h, face_size))
    return histogram_equalize(arr)


def region_set(img, layout: RegionLayout, canny_cfg: CannyConfig, crop_rect: Optional[Rect] = None) -> RegionSet:
    face = preprocess(img, layout.face_size[0], crop_rect)
    if face.shape != (layout.face_size[1], layout.face_size[0]):
        raise ValueError(f"face crop is {face.shape[1]}x{face.shape[0]}, layout expects {layout.face_size}")
    return extract_all(face, canny(face, canny_cfg), layout)


def _load_region_sets(records, layout, canny_cfg, crop_rect):
    sets = []
    for r in records:
        try:
            img = read_pgm(r.path)
        except (OSError, ValueError) as exc:
            raise PipelineError("load", str(exc), r.path) from exc
        try:
            sets.append(region_set(img, layout, canny_cfg, crop_rect))
        except ValueError as exc:
            raise PipelineError("regions", str(exc), r.path) from exc
    return sets


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    flagged: tuple = ()  # dimensions whose std was ~0 and replaced by 1

    @classmethod
    def fit(cls, features) -> "Normalizer":
        x = np.asarray(features, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        flat = std < 1e-12
        std = np.where(flat, 1.0, std)
        return cls(mean, std, tuple(int(i) for i in np.nonzero(flat)[0]))

    def apply(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "flagged": list(self.flagged)}

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        std = np.asarray(d["std"], dtype=np.float64)
        if np.any(std <= 0):
            raise ValueError("normalizer std entries must be positive")
        return cls(np.asarray(d["mean"], dtype=np.float64), std, tuple(d.get("flagged", ())))


def _raw_features(pcas: Sequence[PcaModel], sets: Sequence[RegionSet]) -> np.ndarray:
    blocks = [
        pca_project(p, np.stack([s.patches[i].values for s in sets])) for i, p in enumerate(pcas)
    ]
    return np.hstack(blocks)


@dataclass
class FeatureSet:
    """Normalized features for a train/test partition plus the fitted
    transforms that produced them."""

    pcas: list
    normalizer: Normalizer
    train_x: np.ndarray
    train_y: np.ndarray  # Expression values 1..7
    test_x: np.ndarray
    test_y: np.ndarray
    train_records: list = field(default_factory=list)
    test_records: list = field(default_factory=list)


def build_features(
    train_records: Sequence[ManifestRecord],
    test_records: Sequence[ManifestRecord] = (),
    layout: Optional[RegionLayout] = None,
    canny_cfg: CannyConfig = CannyConfig(),
    n_components: int = 40,
    crop_rect: Optional[Rect] = None,
) -> FeatureSet:
    """Region extraction for every image, PCA per region and the normalizer
    fitted on the training side only, then applied to both sides."""
    layout = layout or default_layout()
    train_sets = _load_region_sets(train_records, layout, canny_cfg, crop_rect)
    test_sets = _load_region_sets(test_records, layout, canny_cfg, crop_rect)
    if len(train_sets) < 2:
        raise PipelineError("pca", "need at least two training images")
    try:
        pcas = [
            pca_fit(np.stack([s.patches[i].values for s in train_sets]), n_components)
            for i in range(len(REGION_NAMES))
        ]
    except ValueError as exc:
        raise PipelineError("pca", str(exc)) from exc
    raw_train = _raw_features(pcas, train_sets)
    normalizer = Normalizer.fit(raw_train)
    raw_test = _raw_features(pcas, test_sets) if test_sets else np.zeros((0, raw_train.shape[1]))
    return FeatureSet(
        pcas,
        normalizer,
        normalizer.apply(raw_train),
        np.array([int(r.label) for r in train_records], dtype=np.int64),
        normalizer.apply(raw_test),
        np.array([int(r.label) for r in test_records], dtype=np.int64),
        list(train_records),
        list(test_records),
    )


def one_hot(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, len(Expression)))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


# ---------------------------------------------------------------------------
# training


def cell_seed(seed: int, hidden: int, rate: float) -> int:
    """Initialisation seed for one (hidden, rate) configuration.

    Mixes the base seed with the configuration values (rate in units of
    1e-6) so a configuration gets the same seed whatever grid it sits in.
    """
    mask = (1 << 64) - 1
    s = _splitmix64(int(seed) & mask)
    s = _splitmix64((s ^ int(hidden)) & mask)
    return _splitmix64((s ^ int(round(rate * 1e6))) & mask)


def fit_classifier(
    train_x,
    train_y,
    hidden: int = 10,
    rate: float = 0.3,
    max_epochs: int = 200000,
    target_error: float = 1e-7,
    seed: int = 0,
) -> tuple[MlpModel, np.ndarray]:
    """Initialise an ``n_in-hidden-7`` net from :func:`cell_seed` and train it."""
    train_x = np.asarray(train_x, dtype=np.float64)
    s = cell_seed(seed, hidden, rate)
    model = init_weights([train_x.shape[1], hidden, len(Expression)], s)
    return train(model, train_x, one_hot(train_y), TrainConfig(rate, max_epochs, target_error, s))


@dataclass
class ExpressionModel:
    layout: RegionLayout
    canny: CannyConfig
    pcas: list
    normalizer: Normalizer
    mlp: MlpModel
    crop: Optional[Rect] = None
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.pcas) != len(REGION_NAMES):
            raise ValueError(f"expected {len(REGION_NAMES)} PCA models, got {len(self.pcas)}")
        for name, p, n in zip(REGION_NAMES, self.pcas, self.layout.lengths):
            if p.n_features != n:
                raise ValueError(f"{name} PCA expects {p.n_features} inputs but the layout yields {n}")
        dims = sum(p.n_components for p in self.pcas)
        if dims != self.mlp.n_inputs:
            raise ValueError(f"PCA output dimension {dims} does not match MLP input {self.mlp.n_inputs}")
        if self.normalizer.mean.shape != (dims,) or self.normalizer.std.shape != (dims,):
            raise ValueError("normalizer dimension does not match the feature dimension")
        if self.mlp.n_outputs != len(Expression):
            raise ValueError(f"MLP has {self.mlp.n_outputs} outputs, expected {len(Expression)}")

    def features(self, img) -> np.ndarray:
        rs = region_set(img, self.layout, self.canny, self.crop)
        return self.normalizer.apply(_raw_features(self.pcas, [rs])[0])

    def predict(self, features) -> tuple[Expression, np.ndarray]:
        out = forward(self.mlp, features)[-1]
        return Expression(int(np.argmax(out)) + 1), out

    def classify_image(self, img) -> tuple[Expression, np.ndarray]:
        return self.predict(self.features(img))


def train_expression_model(
    records: Sequence[ManifestRecord],
    hidden: int = 10,
    rate: float = 0.3,
    max_epochs: int = 200000,
    target_error: float = 1e-7,
    seed: int = 0,
    per_class_test: int = 10,
    layout: Optional[RegionLayout] = None,
    canny_cfg: CannyConfig = CannyConfig(),
    n_components: int = 40,
    crop_rect: Optional[Rect] = None,
):
    """Split, extract features, train.  Returns (model, history, features)."""
    layout = layout or default_layout()
    try:
        train_recs, test_recs = resolve_split(records, seed, per_class_test)
    except ValueError as exc:
        raise PipelineError("split", str(exc)) from exc
    feats = build_features(train_recs, test_recs, layout, canny_cfg, n_components, crop_rect)
    mlp, history = fit_classifier(feats.train_x, feats.train_y, hidden, rate, max_epochs, target_error, seed)
    meta = {
        "hidden": int(hidden),
        "learning_rate": float(rate),
        "max_epochs": int(max_epochs),
        "target_error": float(target_error),
        "epochs_run": int(history.size),
        "final_mse": float(history[-1]),
        "seed": int(seed),
        "per_class_test": int(per_class_test),
        "n_train": len(train_recs),
        "n_test": len(test_recs),
    }
    model = ExpressionModel(layout, canny_cfg, feats.pcas, feats.normalizer, mlp, crop_rect, meta)
    return model, history, feats


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    confusion: np.ndarray  # (7, 7), rows true, columns predicted
    per_class: np.ndarray  # accuracy % per class, nan for absent classes

    @property
    def counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def correct(self) -> np.ndarray:
        return np.diag(self.confusion)

    @property
    def average(self) -> float:
        """Unweighted mean of the per-class accuracies of the classes present."""
        return float(np.nanmean(self.per_class))

    @property
    def pooled(self) -> float:
        """Accuracy over all samples, regardless of class."""
        return 100.0 * float(self.correct.sum()) / float(self.counts.sum())

    def table(self) -> str:
        lines = [f"{'Feeling':<10} {'Correct':>9} {'Accuracy %':>11}"]
        for label, c, n, acc in zip(Expression, self.correct, self.counts, self.per_class):
            acc_s = "-" if math.isnan(acc) else f"{acc:.1f}"
            lines.append(f"{label.label:<10} {f'{c}/{n}':>9} {acc_s:>11}")
        lines.append(f"{'Average':<10} {'':>9} {self.average:>11.1f}")
        lines.append(f"{'Pooled':<10} {f'{self.correct.sum()}/{self.counts.sum()}':>9} {self.pooled:>11.1f}")
        lines.append("")
        lines.append("Confusion matrix (rows true, columns predicted):")
        abbrev = [l.label[:3] for l in Expression]
        lines.append("     " + " ".join(f"{a:>4}" for a in abbrev))
        for a, row in zip(abbrev, self.confusion):
            lines.append(f"{a:>4} " + " ".join(f"{v:>4d}" for v in row))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true"] + [l.label for l in Expression] + ["correct", "total", "accuracy_percent"])
        for label, row, c, n, acc in zip(Expression, self.confusion, self.correct, self.counts, self.per_class):
            w.writerow([label.label] + [int(v) for v in row] + [int(c), int(n), "" if math.isnan(acc) else repr(float(acc))])
        w.writerow(["average"] + [""] * (len(Expression) + 2) + [repr(self.average)])
        w.writerow(["pooled"] + [""] * (len(Expression) + 2) + [repr(self.pooled)])
        return buf.getvalue()


def report_from_predictions(true, pred) -> EvalReport:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.size == 0:
        raise ValueError("cannot evaluate an empty test set")
    k = len(Expression)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true - 1, pred - 1), 1)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, 100.0 * np.diag(confusion) / counts, np.nan)
    return EvalReport(confusion, per_class)


def evaluate(model, features, labels) -> EvalReport:
    """Classify every feature row with ``model`` (an :class:`ExpressionModel`
    or a bare :class:`MlpModel`) and tabulate against ``labels``."""
    mlp = model.mlp if isinstance(model, ExpressionModel) else model
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot evaluate an empty test set")
    if x.shape[1] != mlp.n_inputs:
        raise ValueError(f"features have {x.shape[1]} dimensions, model expects {mlp.n_inputs}")
    pred = [int(np.argmax(forward(mlp, row)[-1])) + 1 for row in x]
    return report_from_predictions(labels, pred)


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridResult:
    hidden: tuple
    rates: tuple
    accuracy: np.ndarray  # (len(hidden), len(rates)), percent

    @property
    def best(self) -> tuple[int, float, float]:
        """(hidden, rate, accuracy) of the first maximal cell in row-major order."""
        i, j = np.unravel_index(int(np.argmax(self.accuracy)), self.accuracy.shape)
        return self.hidden[i], self.rates[j], float(self.accuracy[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hidden", "rate", "accuracy_percent"])
        for i, h in enumerate(self.hidden):
            for j, r in enumerate(self.rates):
                w.writerow([h, repr(float(r)), repr(float(self.accuracy[i, j]))])
        return buf.getvalue()


def _grid_cell(args):
    train_x, train_y, test_x, test_y, hidden, rate, max_epochs, target_error, seed = args
    mlp, _ = fit_classifier(train_x, train_y, hidden, rate, max_epochs, target_error, seed)
    return evaluate(mlp, test_x, test_y).pooled


def grid_search(
    train_x,
    train_y,
    test_x,
    test_y,
    rates: Sequence[float] = DEFAULT_RATES,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    max_epochs: int = 200000,
    target_error: float = 1e-7,
    seed: int = 0,
    jobs: int = 1,
) -> GridResult:
    """Train and score one classifier per (hidden, rate) cell.

    Each cell is initialised from :func:`cell_seed` and scored by overall
    held-out accuracy.  ``jobs > 1`` spreads cells over processes without
    changing any result.
    """
    rates, hidden = tuple(float(r) for r in rates), tuple(int(h) for h in hidden)
    if not rates or not hidden:
        raise ValueError("rate and hidden grids must be non-empty")
    cells = [
        (train_x, train_y, test_x, test_y, h, r, max_epochs, target_error, seed) for h in hidden for r in rates
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_grid_cell, cells))
    else:
        scores = [_grid_cell(c) for c in cells]
    return GridResult(hidden, rates, np.array(scores).reshape(len(hidden), len(rates)))


# ---------------------------------------------------------------------------
# persistence


def model_to_json(model: ExpressionModel) -> str:
    doc = {
        "format": "facexpr-expression-model",
        "version": model.version,
        "labels": [l.label for l in Expression],
        "layout": model.layout.to_dict(),
        "canny": model.canny.to_dict(),
        "crop": list(model.crop) if model.crop is not None else None,
        "pca": {name: p.to_dict() for name, p in zip(REGION_NAMES, model.pcas)},
        "normalizer": model.normalizer.to_dict(),
        "mlp": model.mlp.to_dict(),
        "metadata": model.metadata,
    }
    return json.dumps(doc, sort_keys=True, allow_nan=False) + "\n"


def model_from_json(text: str) -> ExpressionModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != "facexpr-expression-model":
        raise ModelFormatError("not an expression model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model version {doc.get('version')!r} (expected {FORMAT_VERSION})")
    if doc.get("labels") != [l.label for l in Expression]:
        raise ModelFormatError("label mapping does not match Y1..Y7 = Anger..Neutral")
    try:
        return ExpressionModel(
            layout=RegionLayout.from_dict(doc["layout"]),
            canny=CannyConfig.from_dict(doc["canny"]),
            pcas=[PcaModel.from_dict(doc["pca"][n]) for n in REGION_NAMES],
            normalizer=Normalizer.from_dict(doc["normalizer"]),
            mlp=MlpModel.from_dict(doc["mlp"]),
            crop=Rect(*doc["crop"]) if doc.get("crop") is not None else None,
            metadata=dict(doc.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model contents: {exc}") from None


def save_model(model: ExpressionModel, path) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path) -> ExpressionModel:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise ModelFormatError(f"{path}: not a text model file") from None
    return model_from_json(text)


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mse"])
        for i, v in enumerate(history, start=1):
            w.writerow([i, repr(float(v))])

"""Pixel- and object-level detector scoring.

Intersection-over-union between pixel sets, greedy one-to-one detection
matching at an IoU threshold, precision-recall curves swept over the
confidence threshold, and the max-F1 summary.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .objects import DetectedObject

_COORD_SCALE = np.int64(1) << 32


def _flat(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[1] != 2:
        raise ShapeError(f"pixel set must be (K, 2), got {pixels.shape}")
    return pixels[:, 0].astype(np.int64) * _COORD_SCALE + pixels[:, 1]


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """|A n B| / |A u B| over two (K, 2) pixel coordinate sets."""
    fa = np.unique(_flat(a)) if len(a) else np.empty(0, np.int64)
    fb = np.unique(_flat(b)) if len(b) else np.empty(0, np.int64)
    if len(fa) == 0 and len(fb) == 0:
        raise ValidationError("IoU of two empty pixel sets is undefined")
    inter = len(np.intersect1d(fa, fb, assume_unique=True))
    union = len(fa) + len(fb) - inter
    return inter / union


@dataclass
class MatchResult:
    correct: list[bool]  # per detection, in descending-confidence order
    confidences: list[float]  # aligned with ``correct``
    truth_matched: list[bool]
    iou_threshold: float


def match_detections(
    objects: list[DetectedObject],
    truths: list[np.ndarray],
    iou_threshold: float,
) -> MatchResult:
    """Greedy one-to-one matching in descending confidence order.

    A detection is correct iff its best IoU against a still-unmatched truth
    component reaches the threshold; that component is then consumed, so
    duplicate detections over one array count as false positives.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValidationError(f"IoU threshold must be in (0, 1], got {iou_threshold}")
    order = sorted(
        range(len(objects)),
        key=lambda i: (-objects[i].confidence, _flat(objects[i].pixels)[0]),
    )
    truth_flat = [np.unique(_flat(t)) for t in truths]
    matched = [False] * len(truths)
    correct = []
    confidences = []
    for i in order:
        det = np.unique(_flat(objects[i].pixels))
        best_iou, best_j = 0.0, -1
        for j, tf in enumerate(truth_flat):
            if matched[j]:
                continue
            inter = len(np.intersect1d(det, tf, assume_unique=True))
            if inter == 0:
                continue
            v = inter / (len(det) + len(tf) - inter)
            if v > best_iou:
                best_iou, best_j = v, j
        ok = best_iou >= iou_threshold and best_j >= 0
        if ok:
            matched[best_j] = True
        correct.append(ok)
        confidences.append(objects[i].confidence)
    return MatchResult(correct, confidences, matched, iou_threshold)


@dataclass
class PRCurve:
    taus: np.ndarray  # strictly decreasing
    precision: np.ndarray
    recall: np.ndarray
    n_truth: int
    n_detections: int


def object_pr(records: list[tuple[float, bool]], n_truth: int) -> PRCurve:
    """PR curve over the unique detection confidences, swept downward.

    Each point counts detections with confidence >= tau. With no detections
    at all the curve is the single conventional point (P=1, R=0).
    """
    if n_truth < 1:
        raise ValidationError(f"n_truth must be >= 1, got {n_truth}")
    if not records:
        return PRCurve(np.array([1.0]), np.array([1.0]), np.array([0.0]), n_truth, 0)
    conf = np.asarray([r[0] for r in records], dtype=np.float64)
    corr = np.asarray([bool(r[1]) for r in records])
    order = np.argsort(-conf, kind="stable")
    conf = conf[order]
    corr = corr[order]
    cum_correct = np.cumsum(corr)
    total = np.arange(1, len(conf) + 1)
    # last index of each unique confidence along the descending sweep
    last = np.nonzero(np.diff(conf, append=-np.inf))[0]
    taus = conf[last]
    precision = cum_correct[last] / total[last]
    recall = cum_correct[last] / n_truth
    return PRCurve(taus, precision, recall, n_truth, len(records))


def pixel_pr(pmap, truth, levels: int = 256) -> PRCurve:
    """Every pixel is a detection; swept over an evenly spaced tau grid.

    Accepts one (H, W) map and mask or aligned lists of them (scores pool:
    pixels from all rasters enter one curve).
    """
    maps = pmap if isinstance(pmap, (list, tuple)) else [pmap]
    masks = truth if isinstance(truth, (list, tuple)) else [truth]
    if len(maps) != len(masks):
        raise ShapeError(f"{len(maps)} maps for {len(masks)} truth masks")
    for m, t in zip(maps, masks):
        if np.asarray(m).shape != np.asarray(t).shape:
            raise ShapeError(f"map {np.asarray(m).shape} does not match truth {np.asarray(t).shape}")
    probs = np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in maps])
    labels = np.concatenate([(np.asarray(t) > 0).ravel() for t in masks])
    n_truth = int(labels.sum())
    if n_truth == 0:
        raise ValidationError("truth mask has no panel pixels; recall undefined")
    all_sorted = np.sort(probs)
    pos_sorted = np.sort(probs[labels])
    taus = np.linspace(1.0, 0.0, levels)
    total = len(probs) - np.searchsorted(all_sorted, taus, side="left")
    correct = len(pos_sorted) - np.searchsorted(pos_sorted, taus, side="left")
    precision = np.where(total > 0, correct / np.maximum(total, 1), 1.0)
    recall = correct / n_truth
    return PRCurve(taus, precision, recall, n_truth, len(probs))


def max_f1(curve: PRCurve) -> float:
    """Maximum harmonic mean of precision and recall over the curve."""
    if len(curve.taus) == 0:
        raise ValidationError("empty PR curve")
    p = curve.precision
    r = curve.recall
    denom = p + r
    f1 = np.where(denom > 0, 2.0 * p * r / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1.max())


def detection_records(
    objects, truths, iou_threshold: float
) -> tuple[list[tuple[float, bool]], int]:
    """Match detections to truths and pool (confidence, correct) records.

    ``objects``/``truths`` may be one scene's lists or aligned per-scene
    lists of lists; matching never crosses scenes.
    """
    single = (objects and isinstance(objects[0], DetectedObject)) or (
        truths and isinstance(truths[0], np.ndarray)
    ) or (not objects and not truths)
    if single:
        objects, truths = [objects], [truths]
    if len(objects) != len(truths):
        raise ShapeError(f"{len(objects)} detection lists for {len(truths)} truth lists")
    records: list[tuple[float, bool]] = []
    n_truth = 0
    for objs, trs in zip(objects, truths):
        n_truth += len(trs)
        m = match_detections(objs, trs, iou_threshold)
        records.extend(zip(m.confidences, m.correct))
    return records, n_truth


def iou_sweep(objects, truths, thresholds) -> list[tuple[float, float]]:
    """(threshold, max F1) rows for a strictly increasing threshold grid."""
    thresholds = list(thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])) or not thresholds:
        raise ValidationError("thresholds must be strictly increasing and nonempty")
    rows = []
    for t in thresholds:
        records, n_truth = detection_records(objects, truths, t)
        rows.append((t, max_f1(object_pr(records, n_truth))))
    return rows


DEFAULT_SWEEP = tuple(round(0.1 * k, 1) for k in range(1, 10))


def pr_to_csv(curve: PRCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tau", "precision", "recall"])
        for t, p, r in zip(curve.taus, curve.precision, curve.recall):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


def pr_from_csv(path) -> PRCurve:
    rows = list(csv.reader(Path(path).open()))
    if not rows or rows[0] != ["tau", "precision", "recall"]:
        raise ValidationError(f"{path}: not a PR curve CSV")
    vals = np.asarray([[float(x) for x in row] for row in rows[1:]], dtype=np.float64)
    if len(vals) == 0:
        raise ValidationError(f"{path}: empty PR curve")
    return PRCurve(vals[:, 0], vals[:, 1], vals[:, 2], 0, 0)


def sweep_to_csv(rows: list[tuple[float, float]], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iou_threshold", "max_f1"])
        for t, v in rows:
            w.writerow([repr(float(t)), repr(float(v))])


def sweep_from_csv(path) -> list[tuple[float, float]]:
    rows = list(csv.reader(Path(path).open()))
    if not rows or rows[0] != ["iou_threshold", "max_f1"]:
        raise ValidationError(f"{path}: not an IoU sweep CSV")
    return [(float(a), float(b)) for a, b in rows[1:]]

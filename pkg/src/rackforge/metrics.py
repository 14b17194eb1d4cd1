"""Layout metrics: per-channel mIoU and pixel-level average precision.

Class ``box`` is the Occupied cells; class ``rack`` is the shelf extent
(Occupied or Unoccupied).
"""
from __future__ import annotations

import os

import numpy as np

from .errors import AlignmentError, UndefinedMetric
from .layout import FRONT, TOP, CellClass

RACK = "rack"
BOX = "box"
CLASSES = (RACK, BOX)


def class_mask(labels, cls):
    labels = np.asarray(getattr(labels, "channels", labels))
    if cls == BOX:
        return labels == CellClass.OCCUPIED
    if cls == RACK:
        return labels != CellClass.BACKGROUND
    raise ValueError(f"unknown class {cls!r}")


def class_score(probs, cls):
    p = np.asarray(getattr(probs, "probs", probs))
    if cls == BOX:
        return p[..., CellClass.OCCUPIED]
    if cls == RACK:
        return p[..., CellClass.OCCUPIED] + p[..., CellClass.UNOCCUPIED]
    raise ValueError(f"unknown class {cls!r}")


def _pairs(preds, truths, view):
    preds, truths = list(preds), list(truths)
    if len(preds) != len(truths):
        raise AlignmentError(f"{len(preds)} predictions for {len(truths)} ground-truth frames")
    out = []
    for p, t in zip(preds, truths):
        if view is not None and getattr(t, "view", view) != view:
            continue
        out.append((p, t))
    return out


def frame_ious(pred, truth, cls):
    """IoU of each channel; NaN where both masks are empty."""
    a, b = class_mask(pred, cls), class_mask(truth, cls)
    inter = (a & b).sum(axis=(-2, -1))
    union = (a | b).sum(axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), np.nan)


def miou(preds, truths, cls, view=None):
    """Mean IoU in percent over every (frame, channel) whose union is non-empty."""
    ious = [frame_ious(p, t, cls) for p, t in _pairs(preds, truths, view)]
    if not ious:
        raise UndefinedMetric(f"no frames for class {cls}")
    v = np.concatenate([np.ravel(x) for x in ious])
    v = v[~np.isnan(v)]
    if not v.size:
        raise UndefinedMetric(f"class {cls} is absent from every frame")
    return float(100.0 * v.mean())


def pr_points(scores, labels):
    """Precision/recall at every distinct score threshold, highest threshold first."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]  # end of each tie group
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / max(int(labels.sum()), 1)
    return precision, recall


def ap_from_scores(scores, labels):
    """Area under the precision-recall curve by the trapezoidal rule.

    The curve starts at recall 0 with the precision of the highest threshold.
    """
    if not np.any(labels):
        raise UndefinedMetric("no positive cells")
    precision, recall = pr_points(scores, labels)
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2))


def average_precision(preds, truths, cls, view=None):
    """Pixel-level AP in percent: cells pooled over frames per channel, then averaged over channels."""
    pairs = _pairs(preds, truths, view)
    if not pairs:
        raise UndefinedMetric(f"no frames for class {cls}")
    scores = np.stack([class_score(p, cls) for p, _ in pairs])   # (F, R, D, D)
    labels = np.stack([class_mask(t, cls) for _, t in pairs])
    aps = []
    for ch in range(scores.shape[1]):
        y = labels[:, ch]
        if y.any():
            aps.append(ap_from_scores(scores[:, ch], y))
    if not aps:
        raise UndefinedMetric(f"class {cls} is absent from every frame")
    return float(100.0 * np.mean(aps))


class MetricsTable:
    """mIoU and mAP (percent) for each view and class."""

    def __init__(self, values=None):
        self.values = values or {}

    def set(self, view, cls, miou_v, map_v):
        self.values[(view, cls)] = {"miou": miou_v, "map": map_v}

    def get(self, view, cls, metric="miou"):
        return self.values[(view, cls)][metric]

    def to_dict(self):
        return {view: {cls: dict(self.values[(view, cls)]) for cls in CLASSES if (view, cls) in self.values}
                for view in (TOP, FRONT)}

    @classmethod
    def from_dict(cls, d):
        vals = {}
        for view, row in d.items():
            for c, m in row.items():
                vals[(view, c)] = {"miou": m["miou"], "map": m["map"]}
        return cls(vals)

    def format(self):
        head = f"{'':8s}" + "".join(f"{v + ' ' + c:>22s}" for v in (TOP, FRONT) for c in CLASSES)
        sub = f"{'':8s}" + "".join(f"{'mIoU':>11s}{'mAP':>11s}" for _ in range(4))
        row = f"{'':8s}" + "".join(
            f"{self._fmt(v, c, 'miou'):>11s}{self._fmt(v, c, 'map'):>11s}" for v in (TOP, FRONT) for c in CLASSES)
        return "\n".join((head, sub, row))

    def _fmt(self, v, c, m):
        x = self.values.get((v, c), {}).get(m)
        return "-" if x is None else f"{x:.2f}"


def metrics_table(pred_stacks, truth_stacks, pred_probs=None):
    """Fill a MetricsTable from dicts view -> list of stacks (probabilities optional)."""
    table = MetricsTable()
    for view in (TOP, FRONT):
        probs = (pred_probs or {}).get(view)
        if probs is None:
            from .layout import ProbabilityStack
            probs = [ProbabilityStack.one_hot(s) for s in pred_stacks[view]]
        for c in CLASSES:
            table.set(view, c, miou(pred_stacks[view], truth_stacks[view], c),
                      average_precision(probs, truth_stacks[view], c))
    return table


def evaluate_dataset(pred_dir, truth_dir, split=None):
    """Compare every aligned frame of two datasets (optionally one split)."""
    from .dataset import load_manifest, read_layouts, read_probs

    truth = load_manifest(truth_dir)
    pred = load_manifest(pred_dir, check=False)
    ids = truth.ids(split)
    offenders = []
    pred_ids = {s["id"]: s for s in pred.sequences}
    for sid in ids:
        if sid not in pred_ids:
            offenders.append(f"{sid}: missing sequence")
            continue
        want = truth.sequence(sid)["frames"]
        got = pred_ids[sid]
        for view in (TOP, FRONT):
            paths = got.get(view, [])
            have = [p for p in paths if os.path.isfile(pred.path(p))]
            if len(have) != want:
                offenders.append(f"{sid}: {view} has {len(have)} of {want} frames")
    if offenders:
        raise AlignmentError("predictions do not align with ground truth: " + "; ".join(offenders), offenders)
    stacks = {TOP: [], FRONT: []}
    gts = {TOP: [], FRONT: []}
    probs = {TOP: [], FRONT: []}
    for sid in ids:
        for view in (TOP, FRONT):
            gts[view] += read_layouts(truth, sid, view)
            stacks[view] += read_layouts(pred, sid, view)
            probs[view] += read_probs(pred, sid, view)
    return metrics_table(stacks, gts, probs)

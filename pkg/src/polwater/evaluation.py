"""Pixel confusion counts, detection metrics and distance-binned detection rates."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import IGNORE, WATER


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    recall: float | None      # None when there is no true water
    precision: float | None   # None when nothing was predicted


def truth_labels(truth):
    """(water, counted) boolean maps from a bool mask or a WATER/DRY/IGNORE label image."""
    truth = np.asarray(truth)
    if truth.dtype == bool:
        return truth, np.ones(truth.shape, bool)
    return truth == WATER, truth != IGNORE


def confusion(pred, truth, valid=None) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    water, counted = truth_labels(truth)
    if pred.shape != water.shape or (valid is not None and np.shape(valid) != pred.shape):
        raise ValueError(f"mask shapes differ: pred {pred.shape}, truth {water.shape}"
                         + (f", valid {np.shape(valid)}" if valid is not None else ""))
    sel = counted if valid is None else counted & np.asarray(valid, dtype=bool)
    p, t = pred[sel], water[sel]
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, fp, int(p.size) - tp - fp - fn, fn)


def metrics(c: ConfusionCounts) -> Metrics:
    if c.total == 0:
        raise ValueError("no evaluated pixels")
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    return Metrics((c.tp + c.tn) / c.total, recall, precision)


def mean_metrics(per_frame: Iterable[Metrics]) -> Metrics:
    """Per-frame average; undefined ratios are skipped rather than counted as 0."""
    items = list(per_frame)
    if not items:
        raise ValueError("no frames")

    def avg(vals):
        vals = [x for x in vals if x is not None]
        return float(np.mean(vals)) if vals else None

    return Metrics(avg(m.accuracy for m in items), avg(m.recall for m in items),
                   avg(m.precision for m in items))


@dataclass(frozen=True)
class RangeCurve:
    edges: tuple[float, ...]
    hits: tuple[int, ...]       # detected truth-water pixels per bin
    support: tuple[int, ...]    # truth-water pixels per bin

    @property
    def rates(self) -> list[float | None]:
        return [h / s if s else None for h, s in zip(self.hits, self.support)]

    @property
    def centers(self) -> list[float]:
        e = self.edges
        return [0.5 * (e[i] + e[i + 1]) for i in range(len(e) - 1)]

    def pooled_rate(self, lo: float, hi: float) -> float | None:
        """Rate over all bins lying inside [lo, hi)."""
        h = s = 0
        for i in range(len(self.edges) - 1):
            if self.edges[i] >= lo and self.edges[i + 1] <= hi:
                h += self.hits[i]
                s += self.support[i]
        return h / s if s else None

    def __add__(self, other: "RangeCurve") -> "RangeCurve":
        if self.edges != other.edges:
            raise ValueError("bin edges differ")
        return RangeCurve(self.edges, tuple(a + b for a, b in zip(self.hits, other.hits)),
                          tuple(a + b for a, b in zip(self.support, other.support)))


def frame_range_counts(pred, truth, valid, distance, edges) -> RangeCurve:
    edges = tuple(float(e) for e in edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must increase")
    water, counted = truth_labels(truth)
    sel = water & counted & np.asarray(valid, bool) & np.isfinite(distance)
    dist = np.asarray(distance)[sel]
    hit = np.asarray(pred, bool)[sel]
    support = np.histogram(dist, bins=edges)[0]
    hits = np.histogram(dist[hit], bins=edges)[0]
    return RangeCurve(edges, tuple(int(x) for x in hits), tuple(int(x) for x in support))


def range_curve(results: Iterable, edges) -> RangeCurve:
    """Aggregate (pred, truth, valid, distance_map) tuples into one curve."""
    edges = tuple(float(e) for e in edges)
    total = RangeCurve(edges, (0,) * (len(edges) - 1), (0,) * (len(edges) - 1))
    for pred, truth, valid, dist in results:
        total = total + frame_range_counts(pred, truth, valid, dist, edges)
    return total


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def write_metrics_csv(path, per_frame: list[tuple[str, ConfusionCounts]], pooled: ConfusionCounts) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "tp", "fp", "tn", "fn", "accuracy", "recall", "precision"])
        for fid, c in list(per_frame) + [("pooled", pooled)]:
            m = metrics(c) if c.total else Metrics(None, None, None)
            w.writerow([fid, c.tp, c.fp, c.tn, c.fn, _fmt(m.accuracy), _fmt(m.recall), _fmt(m.precision)])


def write_range_csv(path, curve: RangeCurve) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "rate", "support"])
        for c, r, s in zip(curve.centers, curve.rates, curve.support):
            w.writerow([f"{c:g}", _fmt(r), s])


def summary_dict(per_frame: list[tuple[str, ConfusionCounts]], pooled: ConfusionCounts,
                 curve: RangeCurve | None = None, extra: dict | None = None) -> dict:
    frame_metrics = [metrics(c) for _, c in per_frame if c.total]
    out = {
        "frames": len(per_frame),
        "pooled": {**asdict(pooled), **asdict(metrics(pooled))} if pooled.total else asdict(pooled),
        "per_frame_mean": asdict(mean_metrics(frame_metrics)) if frame_metrics else None,
    }
    if curve is not None:
        out["range"] = {"edges": list(curve.edges), "rate": curve.rates, "hits": list(curve.hits),
                        "support": list(curve.support)}
    if extra:
        out.update(extra)
    return out


def write_summary_json(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")

"""Evaluation metrics: DSC, Hausdorff distance, PR/ROC curves.

Conventions:

* DSC is reported in percent; two empty masks count as perfect (100).
* Hausdorff distance is the full (100th percentile) symmetric distance
  between 4-connectivity boundary point sets, in pixels unless a
  (row, col) mm/px spacing is given.  If exactly one mask is empty the
  distance is ``inf``; such images are excluded from aggregates and the
  exclusion count is reported.
* PR/ROC curves pool pixels across the whole image list (micro-average)
  and sweep a threshold grid; MAP and AUC are trapezoid areas.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .kernels import boundary_mask, hausdorff_points

__all__ = [
    "dsc",
    "hausdorff",
    "pr_roc",
    "PRRocResult",
    "MetricsReport",
    "build_report",
]

BINARIZE_THRESHOLD = 0.5


def _as_binary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"expected a 2-D mask, got shape {mask.shape}")
    return mask != 0


def _check_pair(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p, g = _as_binary(pred), _as_binary(target)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def dsc(pred: np.ndarray, target: np.ndarray) -> float:
    """Dice similarity coefficient in percent."""
    p, g = _check_pair(pred, target)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 100.0
    return 100.0 * 2.0 * int((p & g).sum()) / denom


def hausdorff(
    pred: np.ndarray,
    target: np.ndarray,
    spacing: tuple[float, float] | None = None,
) -> float:
    """Symmetric Hausdorff distance between boundary point sets."""
    p, g = _check_pair(pred, target)
    a = np.argwhere(boundary_mask(p)).astype(np.float64)
    b = np.argwhere(boundary_mask(g)).astype(np.float64)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float("inf")
    if spacing is not None:
        scale = np.asarray(spacing, dtype=np.float64)
        a = a * scale
        b = b * scale
    return hausdorff_points(a, b)


@dataclass
class PRRocResult:
    pr_curve: list[tuple[float, float]]  # (recall, precision), recall ascending
    roc_curve: list[tuple[float, float]]  # (fpr, tpr), fpr ascending
    map: float
    auc: float
    thresholds: list[float]


def _threshold_grid(thresholds) -> np.ndarray:
    if isinstance(thresholds, int):
        if thresholds < 2:
            raise ParameterError("threshold count must be >= 2")
        grid = np.linspace(0.0, 1.0, thresholds)
    else:
        grid = np.asarray(thresholds, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0:
            raise ParameterError("thresholds must be a nonempty 1-D sweep")
        grid = np.sort(grid)
    return grid


def pr_roc(
    pred_probs: list[np.ndarray],
    targets: list[np.ndarray],
    thresholds: int | np.ndarray = 101,
) -> PRRocResult:
    """Pooled-pixel PR and ROC curves over a threshold sweep.

    A pixel is predicted positive at threshold ``t`` when its
    probability is >= ``t``.  A virtual all-negative point anchors the
    curves (recall 0 / precision 1, and the ROC origin).
    """
    if len(pred_probs) == 0 or len(pred_probs) != len(targets):
        raise ParameterError("need equal-length, nonempty prediction/target lists")
    grid = _threshold_grid(thresholds)

    tp = np.zeros(grid.size, dtype=np.int64)
    fp = np.zeros(grid.size, dtype=np.int64)
    n_pos = 0
    n_neg = 0
    for prob, target in zip(pred_probs, targets):
        prob = np.asarray(prob, dtype=np.float64)
        g = _as_binary(target)
        if prob.shape != g.shape:
            raise ShapeError(f"prob shape {prob.shape} != target shape {g.shape}")
        pos = np.sort(prob[g], kind="stable")
        neg = np.sort(prob[~g], kind="stable")
        n_pos += pos.size
        n_neg += neg.size
        # count of values >= t in an ascending-sorted array
        tp += pos.size - np.searchsorted(pos, grid, side="left")
        fp += neg.size - np.searchsorted(neg, grid, side="left")

    # threshold descending: recall and fpr both ascend
    tp = tp[::-1]
    fp = fp[::-1]
    recall = tp / n_pos if n_pos > 0 else np.zeros(tp.size, dtype=np.float64)
    fpr = fp / n_neg if n_neg > 0 else np.zeros(fp.size, dtype=np.float64)
    predicted = tp + fp
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)

    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[1.0], precision])
    fpr = np.concatenate([[0.0], fpr])
    tpr = recall  # pooled-pixel TPR is recall by definition

    area_pr = float(np.trapezoid(precision, recall))
    area_roc = float(np.trapezoid(tpr, fpr))
    return PRRocResult(
        pr_curve=[(float(r), float(p)) for r, p in zip(recall, precision)],
        roc_curve=[(float(f), float(t)) for f, t in zip(fpr, tpr)],
        map=area_pr,
        auc=area_roc,
        thresholds=[float(t) for t in grid],
    )


@dataclass
class MetricsReport:
    """Per-image and aggregate metrics for one evaluation run."""

    name: str
    per_image: list[dict]
    dsc_mean: float
    dsc_std: float
    hd_mean: float
    hd_std: float
    hd_excluded: int
    pr_curve: list[tuple[float, float]]
    roc_curve: list[tuple[float, float]]
    map: float
    auc: float
    spacing: tuple[float, float] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["pr_curve"] = [tuple(p) for p in d["pr_curve"]]
        d["roc_curve"] = [tuple(p) for p in d["roc_curve"]]
        if d.get("spacing") is not None:
            d["spacing"] = tuple(d["spacing"])
        return cls(**d)

    def save(self, out_dir: str | Path) -> Path:
        """Write metrics.json plus curve point CSVs; returns the json path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "metrics.json"
        path.write_text(json.dumps(self.to_dict(), indent=2))
        _write_curve(out / "pr_curve.csv", ("recall", "precision"), self.pr_curve)
        _write_curve(out / "roc_curve.csv", ("fpr", "tpr"), self.roc_curve)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _write_curve(path: Path, header: tuple[str, str], points) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(points)


def build_report(
    name: str,
    ids: list[str],
    pred_probs: list[np.ndarray],
    targets: list[np.ndarray],
    spacing: tuple[float, float] | None = None,
    thresholds: int | np.ndarray = 101,
    extra: dict | None = None,
) -> MetricsReport:
    """Score a list of probability maps against ground-truth masks."""
    if not (len(ids) == len(pred_probs) == len(targets)):
        raise ParameterError("ids, predictions and targets must align")
    per_image = []
    dscs, hds = [], []
    excluded = 0
    for sample_id, prob, target in zip(ids, pred_probs, targets):
        pred = np.asarray(prob) >= BINARIZE_THRESHOLD
        d = dsc(pred, target)
        h = hausdorff(pred, target, spacing=spacing)
        per_image.append({"id": sample_id, "dsc": d, "hd": h})
        dscs.append(d)
        if np.isfinite(h):
            hds.append(h)
        else:
            excluded += 1
    curves = pr_roc(pred_probs, targets, thresholds=thresholds)
    return MetricsReport(
        name=name,
        per_image=per_image,
        dsc_mean=float(np.mean(dscs)),
        dsc_std=float(np.std(dscs)),
        hd_mean=float(np.mean(hds)) if hds else float("nan"),
        hd_std=float(np.std(hds)) if hds else float("nan"),
        hd_excluded=excluded,
        pr_curve=curves.pr_curve,
        roc_curve=curves.roc_curve,
        map=curves.map,
        auc=curves.auc,
        spacing=spacing,
        extra=extra or {},
    )

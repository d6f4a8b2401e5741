"""Overlap and surface-distance metrics for binary masks.

Surface points are foreground pixels with at least one background
4-neighbor, where the image border counts as background. Distances are
Euclidean between pixel centers, optionally scaled by a physical spacing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ShapeError
from .image import LabelMask

__all__ = [
    "EvalRecord",
    "dice",
    "boundary_points",
    "assd",
    "evaluate_pair",
    "summarize",
    "write_csv",
    "write_summary",
]


@dataclass(frozen=True)
class EvalRecord:
    """Per-image evaluation result; assd is None when undefined."""

    image_id: str
    dice: float
    assd: Optional[float]
    status: str  # "ok" or "undefined_assd"


def _require_same_shape(a: LabelMask, b: LabelMask) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mask shapes {a.data.shape} and {b.data.shape} differ")


def dice(a: LabelMask, b: LabelMask, cls: int = 1) -> float:
    """Overlap coefficient 2|A∩B| / (|A|+|B|); two empty sets count as 1.0."""
    _require_same_shape(a, b)
    am = a.data == cls
    bm = b.data == cls
    na, nb = int(am.sum()), int(bm.sum())
    if na == 0 and nb == 0:
        return 1.0
    inter = int((am & bm).sum())
    return 2.0 * inter / (na + nb)


def boundary_points(mask: LabelMask, cls: int = 1) -> np.ndarray:
    """(N, 2) array of (x, y) surface pixels in row-major order."""
    m = mask.data == cls
    padded = np.pad(m, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    surface = m & ~interior
    ys, xs = np.nonzero(surface)
    return np.stack([xs, ys], axis=1).astype(np.int64)


def assd(
    a: LabelMask,
    b: LabelMask,
    cls: int = 1,
    spacing: tuple[float, float] = (1.0, 1.0),
) -> Optional[float]:
    """Average symmetric surface distance between two masks' boundaries.

    Both boundaries empty gives 0.0; exactly one empty has no meaningful
    surface distance and returns None.
    """
    _require_same_shape(a, b)
    sa = boundary_points(a, cls).astype(np.float64)
    sb = boundary_points(b, cls).astype(np.float64)
    if sa.shape[0] == 0 and sb.shape[0] == 0:
        return 0.0
    if sa.shape[0] == 0 or sb.shape[0] == 0:
        return None
    scale = np.array(spacing, dtype=np.float64)
    pa = sa * scale
    pb = sb * scale
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float((d_ab.sum() + d_ba.sum()) / (len(pa) + len(pb)))


def evaluate_pair(
    image_id: str,
    pred: LabelMask,
    gt: LabelMask,
    cls: int = 1,
    spacing: tuple[float, float] = (1.0, 1.0),
) -> EvalRecord:
    d = dice(pred, gt, cls)
    s = assd(pred, gt, cls, spacing)
    if s is None:
        return EvalRecord(image_id=image_id, dice=d, assd=None, status="undefined_assd")
    return EvalRecord(image_id=image_id, dice=d, assd=s, status="ok")


def summarize(records: Sequence[EvalRecord]) -> dict:
    """Mean/std (population) of Dice over all records and ASSD over defined ones."""
    dices = np.array([r.dice for r in records], dtype=np.float64)
    assds = np.array([r.assd for r in records if r.status == "ok"], dtype=np.float64)
    return {
        "mean_dice": float(dices.mean()) if dices.size else 0.0,
        "std_dice": float(dices.std()) if dices.size else 0.0,
        "mean_assd": float(assds.mean()) if assds.size else 0.0,
        "std_assd": float(assds.std()) if assds.size else 0.0,
        "n": len(records),
        "n_undefined": len(records) - assds.size,
    }


def write_csv(records: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "dice", "assd", "status"])
        for r in records:
            writer.writerow(
                [r.image_id, repr(r.dice), "" if r.assd is None else repr(r.assd), r.status]
            )


def write_summary(records: Sequence[EvalRecord], path) -> dict:
    summary = summarize(records)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary

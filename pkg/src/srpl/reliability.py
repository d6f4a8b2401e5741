"""Reliable-region mining from the agreement of branch-wise segmentations.

A pixel is reliable when the prompted segmenter produced the same label for
it under all three enhanced views of the image; everything else is the
unreliable region. The two regions partition the image exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .image import LabelMask, _freeze
from .segmenter import BoxPrompt, SegmenterHandle, gray_as_rgb, segment_with_prompt
from .enhance import T3Bundle, concat_rgb

__all__ = ["ReliabilityMask", "RefinedLabelSet", "cmso", "refine"]


@dataclass(frozen=True)
class ReliabilityMask:
    """Boolean per-pixel flags; True marks the reliable region."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"ReliabilityMask needs a (H, W) array, got {arr.shape}")
        if arr.dtype != np.bool_:
            raise ValueError("ReliabilityMask data must be boolean")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def n_reliable(self) -> int:
        return int(self.data.sum())

    @property
    def n_unreliable(self) -> int:
        return self.data.size - self.n_reliable

    @classmethod
    def all_reliable(cls, height: int, width: int) -> "ReliabilityMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def all_unreliable(cls, height: int, width: int) -> "ReliabilityMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class RefinedLabelSet:
    """Refined pseudo-label, its three branch-wise variants, and the reliability mask."""

    r: LabelMask
    r_he: LabelMask
    r_gd: LabelMask
    r_gs: LabelMask
    mask: ReliabilityMask
    box: BoxPrompt

    def __post_init__(self):
        shapes = {
            self.r.data.shape,
            self.r_he.data.shape,
            self.r_gd.data.shape,
            self.r_gs.data.shape,
            self.mask.data.shape,
        }
        if len(shapes) != 1:
            raise ShapeError(f"refined label rasters disagree on shape: {shapes}")


def cmso(r_he: LabelMask, r_gd: LabelMask, r_gs: LabelMask) -> ReliabilityMask:
    """Mark pixels where all three branch segmentations agree as reliable."""
    if not (r_he.data.shape == r_gd.data.shape == r_gs.data.shape):
        raise ShapeError(
            f"branch masks disagree on shape: {r_he.data.shape}, "
            f"{r_gd.data.shape}, {r_gs.data.shape}"
        )
    agree = (r_he.data == r_gd.data) & (r_gd.data == r_gs.data)
    return ReliabilityMask(agree)


def refine(seg: SegmenterHandle, bundle: T3Bundle, box: BoxPrompt) -> RefinedLabelSet:
    """Prompt the segmenter with the composite image and with each branch.

    The composite (3-channel) result is the refined pseudo-label used for
    supervision; the three single-branch results, sent as replicated
    3-channel images under the same box, feed the consistency mask. The
    mask is computed from the branch outputs only, never from the
    composite result.
    """
    r = segment_with_prompt(seg, concat_rgb(bundle), box)
    r_he = segment_with_prompt(seg, gray_as_rgb(bundle.he), box)
    r_gd = segment_with_prompt(seg, gray_as_rgb(bundle.gd), box)
    r_gs = segment_with_prompt(seg, gray_as_rgb(bundle.gs), box)
    return RefinedLabelSet(
        r=r, r_he=r_he, r_gd=r_gd, r_gs=r_gs, mask=cmso(r_he, r_gd, r_gs), box=box
    )

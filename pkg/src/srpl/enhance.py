"""Test-time tri-branch intensity enhancement.

Three deterministic transforms of a gray image, each usable as one channel
of an RGB composite: histogram equalization, gamma correction that aligns
the image mean to the dataset mean, and gamma correction that matches the
mean/std statistics of large natural-image corpora.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DegenerateDomain, DegenerateImage, EmptyDataset, ShapeError
from .image import GrayImage, ImageSpec, RgbImage, dequantize, quantize

__all__ = [
    "DomainStats",
    "SamStats",
    "GammaSearchConfig",
    "T3Bundle",
    "histogram_equalize",
    "compute_domain_stats",
    "gamma_domain",
    "gamma_sam",
    "gamma_objective",
    "t3ie",
    "concat_rgb",
]


@dataclass(frozen=True)
class DomainStats:
    """Pixel-weighted mean intensity of an entire dataset, in (0, 1)."""

    u_d: float
    n_pixels: int = 0

    def __post_init__(self):
        if not 0.0 < self.u_d < 1.0:
            raise DegenerateDomain(f"dataset mean must lie in (0, 1), got {self.u_d}")

    def to_json(self) -> str:
        return json.dumps({"u_d": self.u_d, "n_pixels": self.n_pixels})

    @classmethod
    def from_json(cls, text: str) -> "DomainStats":
        doc = json.loads(text)
        return cls(u_d=float(doc["u_d"]), n_pixels=int(doc["n_pixels"]))


@dataclass(frozen=True)
class SamStats:
    """Target mean/std for natural-image-like intensity statistics."""

    mu_s: float = 0.5
    sigma_s: float = 0.29


@dataclass(frozen=True)
class GammaSearchConfig:
    """1-D search window and stopping tolerance for the statistics-matching gamma."""

    gamma_min: float = 0.05
    gamma_max: float = 20.0
    tolerance: float = 1e-5
    # Coarse log-spaced scan that brackets the best basin before the
    # golden-section refinement; guards against multiple local minima.
    coarse_points: int = 257

    def __post_init__(self):
        if not 0.0 < self.gamma_min < self.gamma_max:
            raise ValueError("need 0 < gamma_min < gamma_max")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class T3Bundle:
    """The three enhanced views of one image plus the gammas that produced them."""

    he: GrayImage
    gd: GrayImage
    gs: GrayImage
    gamma_d: float
    gamma_s: float

    def __post_init__(self):
        shapes = {self.he.data.shape, self.gd.data.shape, self.gs.data.shape}
        if len(shapes) != 1:
            raise ShapeError(f"bundle channels disagree on shape: {shapes}")

    @property
    def height(self) -> int:
        return self.he.height

    @property
    def width(self) -> int:
        return self.he.width


def histogram_equalize(img: GrayImage, spec: ImageSpec = ImageSpec()) -> GrayImage:
    """Remap intensities through the image's own CDF.

    Level i maps to round-half-up((L-1) * CDF(i)) on the L-level quantized
    image, then back to [0, 1]. Monotone non-decreasing in i; a constant
    image maps to all ones (the CDF of its only level is 1).
    """
    L = spec.gray_levels
    levels = quantize(img, spec)
    hist = np.bincount(levels.ravel(), minlength=L)
    cdf = np.cumsum(hist, dtype=np.float64) / levels.size
    mapped = np.floor((L - 1) * cdf + 0.5).astype(np.int32)
    return dequantize(mapped[levels], spec)


def compute_domain_stats(images: Iterable[GrayImage]) -> DomainStats:
    """Grand pixel-weighted mean over a collection of images."""
    total = 0.0
    n = 0
    for img in images:
        total += float(img.data.sum(dtype=np.float64))
        n += img.data.size
    if n == 0:
        raise EmptyDataset("cannot compute domain stats from an empty collection")
    u_d = total / n
    if u_d <= 0.0 or u_d >= 1.0:
        raise DegenerateDomain(f"all-black or all-white dataset (mean {u_d})")
    return DomainStats(u_d=u_d, n_pixels=n)


def gamma_domain(img: GrayImage, stats: DomainStats) -> tuple[float, GrayImage]:
    """Gamma correction that moves the image's mean-intensity point onto the dataset mean.

    The exponent solves u_x ** gamma = u_d; that identity is exact by
    construction. The mean of the *output* image is not asserted to equal
    u_d (a power of a mean is not the mean of the powers).
    """
    u_x = float(img.data.mean(dtype=np.float64))
    if u_x <= 0.0 or u_x >= 1.0:
        raise DegenerateImage(f"image mean {u_x} admits no gamma alignment")
    gamma_d = math.log(stats.u_d) / math.log(u_x)
    out = np.power(img.data.astype(np.float64), gamma_d)
    return gamma_d, GrayImage(out.astype(np.float32))


def gamma_objective(img: GrayImage, gamma: float, sam: SamStats = SamStats()) -> float:
    """Squared mismatch of mean and population variance after gamma correction."""
    powered = np.power(img.data.astype(np.float64), gamma)
    mu = float(powered.mean())
    var = float(powered.var())  # population form, divide by N
    return (sam.mu_s - mu) ** 2 + (sam.sigma_s**2 - var) ** 2


def gamma_sam(
    img: GrayImage,
    sam: SamStats = SamStats(),
    cfg: GammaSearchConfig = GammaSearchConfig(),
) -> tuple[float, GrayImage]:
    """Find the gamma whose output best matches the target mean/std statistics.

    The objective is scanned on a coarse log-gamma grid to bracket the best
    basin, then refined by golden-section search in log space down to
    cfg.tolerance. Constant images are legal: their variance term does not
    depend on gamma and the mean term alone is minimized.
    """
    lo, hi = math.log(cfg.gamma_min), math.log(cfg.gamma_max)

    values = img.data.astype(np.float64).ravel()

    def j(log_gamma: float) -> float:
        powered = np.power(values, math.exp(log_gamma))
        mu = powered.mean()
        var = powered.var()
        return (sam.mu_s - mu) ** 2 + (sam.sigma_s**2 - var) ** 2

    grid = np.linspace(lo, hi, cfg.coarse_points)
    scores = [j(g) for g in grid]
    best = int(np.argmin(scores))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, cfg.coarse_points - 1)]

    # Golden-section refinement inside the bracketing interval.
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    jc, jd = j(c), j(d)
    while (b - a) > cfg.tolerance:
        if jc < jd:
            b, d, jd = d, c, jc
            c = b - invphi * (b - a)
            jc = j(c)
        else:
            a, c, jc = c, d, jd
            d = a + invphi * (b - a)
            jd = j(d)
    log_best = (a + b) / 2.0
    if j(log_best) > scores[best]:
        log_best = grid[best]
    gamma_s = math.exp(log_best)
    out = np.power(img.data.astype(np.float64), gamma_s)
    return gamma_s, GrayImage(out.astype(np.float32))


def t3ie(
    img: GrayImage,
    stats: DomainStats,
    sam: SamStats = SamStats(),
    spec: ImageSpec = ImageSpec(),
    cfg: GammaSearchConfig = GammaSearchConfig(),
) -> T3Bundle:
    """Apply all three enhancement branches to one image."""
    he = histogram_equalize(img, spec)
    gamma_d, gd = gamma_domain(img, stats)
    gamma_s, gs = gamma_sam(img, sam, cfg)
    return T3Bundle(he=he, gd=gd, gs=gs, gamma_d=gamma_d, gamma_s=gamma_s)


def concat_rgb(bundle: T3Bundle) -> RgbImage:
    """Stack the three branches as channels (he, gd, gs), in that order."""
    return RgbImage(np.stack([bundle.he.data, bundle.gd.data, bundle.gs.data]))

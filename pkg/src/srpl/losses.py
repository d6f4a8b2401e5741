"""Reliability-aware pseudo-label losses with analytic logit gradients.

Supervision runs on the reliable region: partial cross-entropy and partial
Dice against the refined pseudo-label, averaged. The unreliable region is
regularized by partial entropy minimization. The total is

    total = 0.5 * (pce + pdc) + lambda * pem

and its gradient is taken with respect to the pre-softmax logits, so the
optimizer never sees the per-pixel simplex constraint. All arithmetic here
is double precision; a finite-difference check at h = 1e-4 needs the
headroom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError, ShapeError
from .image import LabelMask, ProbMap
from .reliability import ReliabilityMask

__all__ = [
    "LossConfig",
    "LossReport",
    "softmax",
    "loss_pce",
    "loss_pdc",
    "loss_rpl",
    "loss_pem",
    "loss_total_with_grad",
]


@dataclass(frozen=True)
class LossConfig:
    """Weights and numerical guards for the adaptation loss."""

    lam: float = 10.0
    epsilon: float = 1e-5
    prob_floor: float = 1e-8

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be >= 0")
        if self.epsilon <= 0.0 or self.prob_floor <= 0.0:
            raise ValueError("epsilon and prob_floor must be positive")


@dataclass(frozen=True)
class LossReport:
    """All partial losses, the total, and d(total)/d(logits)."""

    l_pce: float
    l_pdc: float
    l_rpl: float
    l_pem: float
    l_total: float
    grad: Optional[np.ndarray] = field(repr=False, default=None)

    def scalars(self) -> dict:
        return {
            "l_pce": self.l_pce,
            "l_pdc": self.l_pdc,
            "l_rpl": self.l_rpl,
            "l_pem": self.l_pem,
            "l_total": self.l_total,
        }


def softmax(z: np.ndarray, axis: int = 0) -> np.ndarray:
    """Numerically stable softmax in double precision."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _check_shapes(q: np.ndarray, r: LabelMask, reliab: ReliabilityMask) -> None:
    c, h, w = q.shape
    if r.data.shape != (h, w) or reliab.data.shape != (h, w):
        raise ShapeError(
            f"probabilities {q.shape}, labels {r.data.shape}, reliability "
            f"{reliab.data.shape} do not agree"
        )
    if r.num_classes != c:
        raise ShapeError(f"labels carry {r.num_classes} classes, probabilities {c}")


def _pce(q: np.ndarray, onehot: np.ndarray, rel: np.ndarray, floor: float) -> float:
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0
    q_true = (q * onehot).sum(axis=0)
    logs = np.log(np.maximum(q_true, floor))
    return float(-(logs[rel]).sum() / n_rel)


def _pdc(q: np.ndarray, onehot: np.ndarray, rel: np.ndarray, eps: float) -> float:
    n_rel = int(rel.sum())
    if n_rel == 0:
        return 0.0
    qr = q[:, rel]
    rr = onehot[:, rel]
    inter = (qr * rr).sum(axis=1)
    denom = (qr * qr + rr * rr).sum(axis=1)
    per_class = (2.0 * inter + eps) / (denom + eps)
    return float(1.0 - per_class.mean())


def _pem(q: np.ndarray, unrel: np.ndarray, floor: float) -> float:
    n_unrel = int(unrel.sum())
    if n_unrel == 0:
        return 0.0
    qu = q[:, unrel]
    ent = -(qu * np.log(np.maximum(qu, floor))).sum(axis=0)
    return float(ent.sum() / n_unrel)


def loss_pce(
    q: ProbMap, r: LabelMask, reliab: ReliabilityMask, cfg: LossConfig = LossConfig()
) -> float:
    """Partial cross-entropy: mean -log q(true class) over the reliable region."""
    qd = q.data.astype(np.float64)
    _check_shapes(qd, r, reliab)
    return _pce(qd, r.one_hot(), reliab.data, cfg.prob_floor)


def loss_pdc(
    q: ProbMap, r: LabelMask, reliab: ReliabilityMask, cfg: LossConfig = LossConfig()
) -> float:
    """Partial Dice over the reliable region, averaged over all classes."""
    qd = q.data.astype(np.float64)
    _check_shapes(qd, r, reliab)
    return _pdc(qd, r.one_hot(), reliab.data, cfg.epsilon)


def loss_rpl(
    q: ProbMap, r: LabelMask, reliab: ReliabilityMask, cfg: LossConfig = LossConfig()
) -> float:
    """Reliable pseudo-label loss: the mean of partial CE and partial Dice."""
    return 0.5 * (loss_pce(q, r, reliab, cfg) + loss_pdc(q, r, reliab, cfg))


def loss_pem(
    q: ProbMap, reliab: ReliabilityMask, cfg: LossConfig = LossConfig()
) -> float:
    """Mean Shannon entropy (natural log) over the unreliable region."""
    qd = q.data.astype(np.float64)
    if reliab.data.shape != qd.shape[1:]:
        raise ShapeError(
            f"probabilities {qd.shape} and reliability {reliab.data.shape} do not agree"
        )
    return _pem(qd, ~reliab.data, cfg.prob_floor)


def loss_total_with_grad(
    z: np.ndarray,
    r: LabelMask,
    reliab: ReliabilityMask,
    cfg: LossConfig = LossConfig(),
) -> LossReport:
    """Evaluate the full adaptation loss and its gradient w.r.t. the logits.

    ``z`` has shape (C, H, W); probabilities are its per-pixel softmax.
    Reliable pixels contribute through the supervision terms, unreliable
    pixels through entropy minimization; no pixel contributes to both.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise ShapeError(f"logits must be (C, H, W), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("logits contain non-finite values")
    _check_shapes(z, r, reliab)

    q = softmax(z, axis=0)
    onehot = r.one_hot()
    rel = reliab.data
    unrel = ~rel
    n_rel = int(rel.sum())
    n_unrel = int(unrel.sum())
    floor = cfg.prob_floor

    l_pce = _pce(q, onehot, rel, floor)
    l_pdc = _pdc(q, onehot, rel, cfg.epsilon)
    l_pem = _pem(q, unrel, floor)
    l_rpl = 0.5 * (l_pce + l_pdc)
    l_total = l_rpl + cfg.lam * l_pem

    # dL/dq for each term, then one chain rule through the softmax:
    # dL/dz_j = q_j * (g_j - sum_c g_c q_c).
    g = np.zeros_like(q)

    if n_rel > 0:
        unclamped = q >= floor
        # CE: -(1/|rel|) * r / q at reliable pixels; zero slope inside the clamp.
        g_pce = np.where(unclamped, -onehot / np.maximum(q, floor), 0.0)
        g_pce[:, unrel] = 0.0
        g_pce /= n_rel

        # Dice: quotient rule on (2*inter + eps) / (sum q^2 + sum r^2 + eps).
        c = q.shape[0]
        inter = (q * onehot * rel).sum(axis=(1, 2))
        denom = ((q * q + onehot * onehot) * rel).sum(axis=(1, 2))
        num_c = (2.0 * inter + cfg.epsilon)[:, None, None]
        den_c = (denom + cfg.epsilon)[:, None, None]
        dt_dq = (2.0 * onehot * den_c - num_c * 2.0 * q) / (den_c * den_c)
        g_pdc = -(1.0 / c) * dt_dq * rel

        g += 0.5 * (g_pce + g_pdc)

    if n_unrel > 0 and cfg.lam != 0.0:
        # d/dq of q*log(max(q, floor)) is log(q) + 1 above the floor, log(floor) below.
        logq = np.log(np.maximum(q, floor))
        g_pem = -(logq + (q >= floor)) / n_unrel
        g_pem = g_pem * unrel
        g += cfg.lam * g_pem

    inner = (g * q).sum(axis=0, keepdims=True)
    grad = q * (g - inner)

    return LossReport(
        l_pce=l_pce, l_pdc=l_pdc, l_rpl=l_rpl, l_pem=l_pem, l_total=l_total, grad=grad
    )

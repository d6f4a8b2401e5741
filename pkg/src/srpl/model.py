"""Desk-scale per-pixel classifier, its training loop, and target adaptation.

The model is a linear softmax classifier over eight fixed per-pixel
features. It stands in for a full segmentation backbone so that the
adaptation mathematics (losses, analytic gradients, Adam, initialization
from the source weights) runs without any autodiff framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .enhance import T3Bundle
from .errors import ConfigError, EmptyDataset, ShapeError
from .image import GrayImage, LabelMask, ProbMap, RgbImage
from .losses import LossConfig, LossReport, loss_total_with_grad, softmax
from .reliability import RefinedLabelSet, ReliabilityMask

__all__ = [
    "FEATURE_SPEC_V1",
    "NUM_FEATURES",
    "ModelParams",
    "TrainConfig",
    "AdaptSample",
    "AdamState",
    "extract_features",
    "features_for_gray",
    "features_for_rgb",
    "forward",
    "LinearSourceModel",
    "train_source",
    "adapt",
    "ADAPT_MODES",
]

FEATURE_SPEC_V1 = "v1"
NUM_FEATURES = 8

ADAPT_MODES = ("em", "pl_y", "pl_r", "rpl", "rpl_pem")


def _local_mean_std(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 window mean and population std with clamp-to-edge borders."""
    padded = np.pad(img, 1, mode="edge")
    s1 = np.zeros_like(img, dtype=np.float64)
    s2 = np.zeros_like(img, dtype=np.float64)
    h, w = img.shape
    for dy in range(3):
        for dx in range(3):
            win = padded[dy : dy + h, dx : dx + w].astype(np.float64)
            s1 += win
            s2 += win * win
    mean = s1 / 9.0
    var = np.maximum(s2 / 9.0 - mean * mean, 0.0)
    return mean, np.sqrt(var)


def extract_features(bundle: T3Bundle) -> np.ndarray:
    """Fixed feature stack (8, H, W), float64.

    Order: he, gd, gs, 3x3 mean of he, 3x3 std of he, x/(W-1), y/(H-1),
    bias 1. Coordinate features are 0 on degenerate 1-pixel axes.
    """
    he = bundle.he.data.astype(np.float64)
    h, w = he.shape
    mean3, std3 = _local_mean_std(he)
    xs = np.zeros(w) if w == 1 else np.arange(w, dtype=np.float64) / (w - 1)
    ys = np.zeros(h) if h == 1 else np.arange(h, dtype=np.float64) / (h - 1)
    feats = np.stack(
        [
            he,
            bundle.gd.data.astype(np.float64),
            bundle.gs.data.astype(np.float64),
            mean3,
            std3,
            np.broadcast_to(xs, (h, w)).copy(),
            np.broadcast_to(ys[:, None], (h, w)).copy(),
            np.ones((h, w)),
        ]
    )
    return feats


def features_for_gray(img: GrayImage) -> np.ndarray:
    """Features of a single gray image: the channel fills all three intensity slots."""
    return extract_features(T3Bundle(he=img, gd=img, gs=img, gamma_d=1.0, gamma_s=1.0))


def features_for_rgb(img: RgbImage) -> np.ndarray:
    """Features of a 3-channel image, channels taken as (he, gd, gs)."""
    return extract_features(
        T3Bundle(
            he=img.channel(0),
            gd=img.channel(1),
            gs=img.channel(2),
            gamma_d=1.0,
            gamma_s=1.0,
        )
    )


@dataclass(frozen=True)
class ModelParams:
    """Linear classifier weights, shape (C, F)."""

    weights: np.ndarray
    num_classes: int
    feature_spec: str = FEATURE_SPEC_V1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != self.num_classes:
            raise ShapeError(f"weights must be (C, F), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "c": self.num_classes,
                "f": self.num_features,
                "feature_spec": self.feature_spec,
                "weights": self.weights.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        doc = json.loads(text)
        params = cls(
            weights=np.array(doc["weights"], dtype=np.float64),
            num_classes=int(doc["c"]),
            feature_spec=doc.get("feature_spec", FEATURE_SPEC_V1),
        )
        if params.num_features != int(doc["f"]):
            raise ConfigError("declared feature count does not match weights")
        return params

    @classmethod
    def init_random(
        cls, num_classes: int, num_features: int = NUM_FEATURES, seed: int = 0
    ) -> "ModelParams":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 0.01, size=(num_classes, num_features))
        return cls(weights=w, num_classes=num_classes)


def forward(params: ModelParams, feats: np.ndarray) -> tuple[np.ndarray, ProbMap]:
    """Logits and probabilities for a (F, H, W) feature stack."""
    if feats.ndim != 3 or feats.shape[0] != params.num_features:
        raise ShapeError(
            f"feature stack {feats.shape} does not match {params.num_features} features"
        )
    z = np.einsum("cf,fhw->chw", params.weights, feats)
    q = softmax(z, axis=0)
    return z, ProbMap(q.astype(np.float32))


class LinearSourceModel:
    """Source-model handle over :class:`ModelParams`; predicts from gray or RGB input."""

    kind = "builtin"

    def __init__(self, params: ModelParams):
        self.params = params

    @property
    def num_classes(self) -> int:
        return self.params.num_classes

    def predict_prob(self, img) -> ProbMap:
        if isinstance(img, GrayImage):
            feats = features_for_gray(img)
        elif isinstance(img, RgbImage):
            feats = features_for_rgb(img)
        else:
            raise ShapeError(f"cannot predict from {type(img).__name__}")
        return forward(self.params, feats)[1]

    def predict_label(self, img) -> LabelMask:
        return self.predict_prob(img).argmax_label()


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by source training and target adaptation."""

    learning_rate: float = 6.0e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    seed: int = 0
    mode: str = "rpl_pem"

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mode not in ADAPT_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {ADAPT_MODES}")


class AdamState:
    """Plain Adam with bias correction, double precision throughout."""

    def __init__(self, shape, cfg: TrainConfig):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.cfg = cfg

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        self.t += 1
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - cfg.beta1**self.t)
        v_hat = self.v / (1.0 - cfg.beta2**self.t)
        return w - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _grad_weights(report: LossReport, feats: np.ndarray) -> np.ndarray:
    """Chain the per-pixel logit gradient into the weight matrix."""
    return np.einsum("chw,fhw->cf", report.grad, feats)


def train_source(
    dataset: Sequence[tuple[GrayImage, LabelMask]],
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    num_classes: int = 2,
) -> tuple[ModelParams, list[dict]]:
    """Train the classifier on labeled images with CE + Dice.

    Implemented as the reliable-region loss with an all-reliable mask and
    ground-truth labels. One Adam step per image, full-image batches,
    fixed visiting order; deterministic for a fixed seed.
    """
    if len(dataset) == 0:
        raise EmptyDataset("train_source needs at least one labeled image")
    params = ModelParams.init_random(num_classes, NUM_FEATURES, seed=cfg.seed)
    w = params.weights.copy()
    adam = AdamState(w.shape, cfg)
    feats = [features_for_gray(img) for img, _ in dataset]
    marks = [
        ReliabilityMask.all_reliable(img.height, img.width) for img, _ in dataset
    ]
    sup_cfg = LossConfig(lam=0.0, epsilon=loss_cfg.epsilon, prob_floor=loss_cfg.prob_floor)

    history = []
    for epoch in range(cfg.epochs):
        totals = []
        for f, (_, label), rel in zip(feats, dataset, marks):
            z = np.einsum("cf,fhw->chw", w, f)
            report = loss_total_with_grad(z, label, rel, sup_cfg)
            w = adam.step(w, _grad_weights(report, f))
            totals.append(report.scalars())
        mean = {k: float(np.mean([t[k] for t in totals])) for k in totals[0]}
        history.append({"epoch": epoch, **mean})
    return ModelParams(w, num_classes), history


@dataclass(frozen=True)
class AdaptSample:
    """Per-image adaptation inputs; label artifacts may be absent for some modes."""

    image: GrayImage
    y: Optional[LabelMask] = None
    refined: Optional[RefinedLabelSet] = None
    image_id: str = ""


def _mode_targets(
    sample: AdaptSample, mode: str, height: int, width: int
) -> tuple[LabelMask, ReliabilityMask, bool]:
    """Labels, reliability mask, and whether entropy regularization applies."""
    if mode == "em":
        dummy = LabelMask(np.zeros((height, width), dtype=np.uint8), 2)
        return dummy, ReliabilityMask.all_unreliable(height, width), True
    if mode == "pl_y":
        if sample.y is None:
            raise ConfigError(f"mode pl_y needs the initial pseudo-label ({sample.image_id})")
        return sample.y, ReliabilityMask.all_reliable(height, width), False
    if sample.refined is None:
        raise ConfigError(f"mode {mode} needs refined pseudo-labels ({sample.image_id})")
    if mode == "pl_r":
        return sample.refined.r, ReliabilityMask.all_reliable(height, width), False
    if mode == "rpl":
        return sample.refined.r, sample.refined.mask, False
    if mode == "rpl_pem":
        return sample.refined.r, sample.refined.mask, True
    raise ConfigError(f"unknown mode {mode!r}")


def adapt(
    theta_s: ModelParams,
    samples: Sequence[AdaptSample],
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    refresh_fn: Optional[Callable[[ModelParams, int], Sequence[AdaptSample]]] = None,
    epoch_callback: Optional[Callable[[ModelParams, int], None]] = None,
) -> tuple[ModelParams, list[dict]]:
    """Adapt source weights on unlabeled target images driven by pseudo-labels.

    Mode semantics: ``em`` minimizes prediction entropy over all pixels and
    touches no pseudo-label; ``pl_y`` / ``pl_r`` supervise everywhere with
    the initial / refined label; ``rpl`` supervises only the reliable
    region; ``rpl_pem`` adds entropy minimization on the unreliable region
    with weight ``loss_cfg.lam``. The source weights are never mutated.

    ``refresh_fn``, when given, is called at the start of every epoch after
    the first to regenerate pseudo-label artifacts from the current weights
    (the iterative reading of the pipeline); by default artifacts are fixed
    once.
    """
    if len(samples) == 0:
        raise EmptyDataset("adapt needs at least one target image")
    mode = cfg.mode
    w = theta_s.weights.copy()
    adam = AdamState(w.shape, cfg)

    # In em mode the entropy term is the whole objective, weight 1; elsewhere
    # lam applies only when the mode enables regularization.
    if mode == "em":
        lam = 1.0
    elif mode == "rpl_pem":
        lam = loss_cfg.lam
    else:
        lam = 0.0
    eff_cfg = LossConfig(lam=lam, epsilon=loss_cfg.epsilon, prob_floor=loss_cfg.prob_floor)

    current = list(samples)
    feats = [features_for_gray(s.image) for s in current]
    history = []
    for epoch in range(cfg.epochs):
        if refresh_fn is not None and epoch > 0:
            current = list(refresh_fn(ModelParams(w, theta_s.num_classes), epoch))
            feats = [features_for_gray(s.image) for s in current]
        totals = []
        for f, sample in zip(feats, current):
            h, wid = sample.image.height, sample.image.width
            label, rel, _ = _mode_targets(sample, mode, h, wid)
            z = np.einsum("cf,fhw->chw", w, f)
            report = loss_total_with_grad(z, label, rel, eff_cfg)
            w = adam.step(w, _grad_weights(report, f))
            totals.append(report.scalars())
        mean = {k: float(np.mean([t[k] for t in totals])) for k in totals[0]}
        history.append({"epoch": epoch, "mode": mode, **mean})
        if epoch_callback is not None:
            epoch_callback(ModelParams(w, theta_s.num_classes), epoch)
    return ModelParams(w, theta_s.num_classes), history

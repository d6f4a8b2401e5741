"""Source-free domain adaptation toolkit for 2-D segmentation.

Library layout:

- :mod:`srpl.image` — image types, quantization, PGM and SRT file I/O
- :mod:`srpl.enhance` — tri-branch test-time intensity enhancement
- :mod:`srpl.segmenter` — pseudo-labels, box prompts, oracle and external segmenters
- :mod:`srpl.reliability` — consistency-based reliable-region mining
- :mod:`srpl.losses` — reliability-aware losses with analytic logit gradients
- :mod:`srpl.model` — per-pixel classifier, source training, target adaptation
- :mod:`srpl.synth` — synthetic two-domain benchmark generator
- :mod:`srpl.metrics` — Dice and average symmetric surface distance
- :mod:`srpl.pipeline` — on-disk stage orchestration used by the CLI
"""

from . import errors
from .enhance import (
    DomainStats,
    GammaSearchConfig,
    SamStats,
    T3Bundle,
    compute_domain_stats,
    concat_rgb,
    gamma_domain,
    gamma_objective,
    gamma_sam,
    histogram_equalize,
    t3ie,
)
from .image import (
    GrayImage,
    ImageSpec,
    LabelMask,
    ProbMap,
    RgbImage,
    dequantize,
    load_pgm,
    load_srt,
    quantize,
    save_pgm,
    save_srt,
)
from .losses import (
    LossConfig,
    LossReport,
    loss_pce,
    loss_pdc,
    loss_pem,
    loss_rpl,
    loss_total_with_grad,
)
from .metrics import EvalRecord, assd, boundary_points, dice
from .model import (
    AdaptSample,
    LinearSourceModel,
    ModelParams,
    TrainConfig,
    adapt,
    extract_features,
    forward,
    train_source,
)
from .reliability import RefinedLabelSet, ReliabilityMask, cmso, refine
from .segmenter import (
    BoxPrompt,
    ExternalBridgeClient,
    OracleSegmenter,
    derive_box_prompt,
    ensemble_initial_label,
    oracle_segment,
    predict_prob,
    segment_with_prompt,
)
from .synth import SynthDataset, SynthDomainConfig, synth_dataset

__version__ = "0.1.0"

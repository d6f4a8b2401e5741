"""Full source-free adaptation run on the synthetic two-domain benchmark.

Trains a source model, measures the source-to-target drop, builds refined
pseudo-labels with the oracle segmenter, adapts in every mode, and prints
the two ablation tables. Mirrors `srpl synth/train-source/.../ablate` but
stays in memory.

Note on the entropy-regularized mode: at the reference weight (10.0) the
entropy term collapses this deliberately small linear classifier (see
tests/test_adaptation_dynamics.py), so the table below also shows a small
weight where the term is near-neutral.
"""

import numpy as np

from srpl import (
    AdaptSample,
    LinearSourceModel,
    LossConfig,
    OracleSegmenter,
    adapt,
    compute_domain_stats,
    derive_box_prompt,
    dice,
    ensemble_initial_label,
    refine,
    synth_dataset,
    t3ie,
    train_source,
)
from srpl.errors import EmptyPseudoLabel
from srpl.model import TrainConfig
from srpl.segmenter import gray_as_rgb, segment_with_prompt
from srpl.synth import SynthDomainConfig


def mean_dice(model, samples):
    return float(np.mean([dice(model.predict_label(s.image), s.label) for s in samples]))


def main():
    ds = synth_dataset(SynthDomainConfig())
    theta_s, _ = train_source(
        [(s.image, s.label) for s in ds.source_train], TrainConfig(epochs=100, seed=0)
    )
    src_model = LinearSourceModel(theta_s)
    print(f"source model on source test: {mean_dice(src_model, ds.source_test):.4f}")
    print(f"source model on target test: {mean_dice(src_model, ds.target_test):.4f}")

    stats = compute_domain_stats([s.image for s in ds.target_train])
    seg = OracleSegmenter()
    samples, quality = [], {"raw": [], "ensemble": [], "sam_raw": [], "sam_rgb": []}
    for s in ds.target_train:
        bundle = t3ie(s.image, stats)
        _, y = ensemble_initial_label(
            src_model.predict_prob(bundle.he),
            src_model.predict_prob(bundle.gd),
            src_model.predict_prob(bundle.gs),
        )
        quality["raw"].append(dice(src_model.predict_label(s.image), s.label))
        quality["ensemble"].append(dice(y, s.label))
        try:
            box = derive_box_prompt(y, 1, 8)
        except EmptyPseudoLabel:
            continue
        quality["sam_raw"].append(dice(segment_with_prompt(seg, gray_as_rgb(s.image), box), s.label))
        refined = refine(seg, bundle, box)
        quality["sam_rgb"].append(dice(refined.r, s.label))
        samples.append(AdaptSample(image=s.image, y=y, refined=refined, image_id=s.image_id))

    print("\npseudo-label quality on target train (mean dice):")
    for row, label in [
        ("raw", "source model"),
        ("ensemble", "+ tri-branch ensemble"),
        ("sam_raw", "+ box-prompted refinement of the raw image"),
        ("sam_rgb", "+ refinement of the 3-channel composite"),
    ]:
        print(f"  {label:<44} {np.mean(quality[row]):.4f}")

    print("\nadaptation modes on target test (mean dice):")
    for mode, lam in [("em", 10.0), ("pl_y", 10.0), ("pl_r", 10.0), ("rpl", 10.0),
                      ("rpl_pem", 10.0), ("rpl_pem", 0.05)]:
        theta_t, _ = adapt(
            theta_s, samples, TrainConfig(epochs=100, seed=0, mode=mode), LossConfig(lam=lam)
        )
        tag = mode if mode != "rpl_pem" else f"rpl_pem (weight {lam})"
        print(f"  {tag:<24} {mean_dice(LinearSourceModel(theta_t), ds.target_test):.4f}")


if __name__ == "__main__":
    main()

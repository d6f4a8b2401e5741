"""On-disk stage orchestration for the adaptation pipeline.

Each stage consumes the previous stage's artifacts from disk and writes its
own; re-running a stage overwrites deterministically. The CLI in
:mod:`srpl.cli` is a thin argument layer over these functions, so tests can
drive the exact same code paths in-process.

Run layout (all paths overridable)::

    <root>/data/<domain>/<split>/images/<id>.pgm
    <root>/data/<domain>/<split>/labels/<id>.srt        u8 (H, W)
    <root>/models/theta_s.json, theta_t.json
    <root>/artifacts/domain_stats.json
    <root>/artifacts/t3ie/<id>.srt                      f32 (3, H, W)
    <root>/artifacts/t3ie/<id>.json                     gammas
    <root>/artifacts/pseudo/<id>_pbar.srt               f32 (C, H, W)
    <root>/artifacts/pseudo/<id>_y.srt                  u8 (H, W)
    <root>/artifacts/refine/<id>/{R,R_he,R_gd,R_gs,reliab}.srt + box.json
    <root>/reports/...
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .enhance import (
    DomainStats,
    GammaSearchConfig,
    SamStats,
    T3Bundle,
    compute_domain_stats,
    concat_rgb,
    t3ie,
)
from .errors import ConfigError, EmptyPseudoLabel, SegmenterIoError
from .image import (
    GrayImage,
    ImageSpec,
    LabelMask,
    load_pgm,
    load_srt,
    save_pgm,
    save_srt,
)
from .losses import LossConfig
from .metrics import EvalRecord, evaluate_pair, summarize, write_csv
from .model import (
    ADAPT_MODES,
    AdaptSample,
    LinearSourceModel,
    ModelParams,
    TrainConfig,
    adapt,
    train_source,
)
from .reliability import RefinedLabelSet, ReliabilityMask, refine
from .segmenter import (
    BoxPrompt,
    ExternalBridgeClient,
    OracleSegmenter,
    derive_box_prompt,
    ensemble_initial_label,
    gray_as_rgb,
    segment_with_prompt,
)
from .synth import SynthDomainConfig, synth_dataset

__all__ = [
    "PipelineConfig",
    "load_config",
    "CONFIG_SCHEMA",
    "log_event",
    "make_segmenter",
    "stage_synth",
    "stage_train_source",
    "stage_stats",
    "stage_t3ie",
    "stage_pseudo",
    "stage_refine",
    "stage_adapt",
    "stage_eval",
    "stage_ablate",
]

SEGMENTER_CMD_ENV = "SRPL_SEGMENTER_CMD"

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "gray_levels": {"type": "integer", "minimum": 2},
        "margin": {"type": "integer", "minimum": 0},
        "empty_box_policy": {"enum": ["skip", "full-image"]},
        "jobs": {"type": "integer", "minimum": 1},
        "gamma_search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma_min": {"type": "number", "exclusiveMinimum": 0},
                "gamma_max": {"type": "number"},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number", "minimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "prob_floor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number"},
                "beta2": {"type": "number"},
                "adam_eps": {"type": "number"},
                "epochs": {"type": "integer", "minimum": 1},
                "mode": {"enum": list(ADAPT_MODES)},
            },
        },
        "segmenter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["oracle", "external"]},
                "command": {"type": "string"},
                "workdir": {"type": "string"},
                "timeout": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "synth": {"type": "object"},
    },
}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a stage needs beyond its input/output paths."""

    seed: int = 2024
    gray_levels: int = 256
    margin: int = 8
    empty_box_policy: str = "skip"
    jobs: int = 0  # 0 = os.cpu_count()
    gamma_search: GammaSearchConfig = field(default_factory=GammaSearchConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    segmenter_kind: str = "oracle"
    segmenter_command: str = ""
    segmenter_workdir: Optional[str] = None
    segmenter_timeout: float = 120.0
    synth: SynthDomainConfig = field(default_factory=SynthDomainConfig)

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Build a PipelineConfig from an optional JSON file plus overrides."""
    import jsonschema

    doc: dict = {}
    if path is not None:
        with open(path) as fh:
            doc = json.load(fh)
    if overrides:
        doc = _merge(doc, overrides)
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc

    cfg = PipelineConfig(
        seed=doc.get("seed", 2024),
        gray_levels=doc.get("gray_levels", 256),
        margin=doc.get("margin", 8),
        empty_box_policy=doc.get("empty_box_policy", "skip"),
        jobs=doc.get("jobs", 0),
        gamma_search=GammaSearchConfig(**doc.get("gamma_search", {})),
        loss=_loss_from(doc.get("loss", {})),
        train=TrainConfig(seed=doc.get("seed", 2024), **doc.get("train", {})),
        segmenter_kind=doc.get("segmenter", {}).get("kind", "oracle"),
        segmenter_command=doc.get("segmenter", {}).get("command", ""),
        segmenter_workdir=doc.get("segmenter", {}).get("workdir"),
        segmenter_timeout=doc.get("segmenter", {}).get("timeout", 120.0),
        synth=SynthDomainConfig(seed=doc.get("seed", 2024), **doc.get("synth", {})),
    )
    env_cmd = os.environ.get(SEGMENTER_CMD_ENV)
    if env_cmd:
        cfg = replace(cfg, segmenter_kind="external", segmenter_command=env_cmd)
    return cfg


def _loss_from(doc: dict) -> LossConfig:
    kw = dict(doc)
    if "lambda" in kw:
        kw["lam"] = kw.pop("lambda")
    return LossConfig(**kw)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def log_event(stage: str, stream=None, **kw) -> None:
    """One machine-diffable JSON line per event, to stderr by default."""
    doc = {"stage": stage, **kw}
    print(json.dumps(doc, sort_keys=True), file=stream or sys.stderr, flush=True)


def make_segmenter(cfg: PipelineConfig, exchange_dir: Optional[str] = None):
    if cfg.segmenter_kind == "oracle":
        return OracleSegmenter()
    if not cfg.segmenter_command:
        raise ConfigError("external segmenter selected but no command configured")
    return ExternalBridgeClient(
        cfg.segmenter_command,
        workdir=cfg.segmenter_workdir,
        exchange_dir=exchange_dir,
        timeout=cfg.segmenter_timeout,
    )


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing upstream artifact for {what}: {path}")
    return path


def _json_dump(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def list_image_ids(images_dir: Path) -> list[str]:
    return sorted(p.stem for p in images_dir.glob("*.pgm"))


def load_split(data_dir: Path) -> list[tuple[str, GrayImage, Optional[LabelMask]]]:
    """(id, image, label-if-present) triples, sorted by id."""
    images_dir = _require(data_dir / "images", "split images")
    labels_dir = data_dir / "labels"
    out = []
    for image_id in list_image_ids(images_dir):
        img = load_pgm(images_dir / f"{image_id}.pgm")
        label = None
        lp = labels_dir / f"{image_id}.srt"
        if lp.exists():
            label = LabelMask(load_srt(lp), 2)
        out.append((image_id, img, label))
    return out


def _parallel(jobs: int, fn, items: Sequence):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Stages.


def stage_synth(cfg: PipelineConfig, out_dir: Path) -> dict:
    """Generate the two-domain benchmark and write it as PGM + SRT files."""
    ds = synth_dataset(cfg.synth)
    counts = {}
    for split_name, samples in ds.splits():
        split_dir = out_dir / split_name
        (split_dir / "images").mkdir(parents=True, exist_ok=True)
        (split_dir / "labels").mkdir(parents=True, exist_ok=True)
        for s in samples:
            save_pgm(s.image, split_dir / "images" / f"{s.image_id}.pgm")
            save_srt(s.label.data, split_dir / "labels" / f"{s.image_id}.srt")
        counts[split_name] = len(samples)
    manifest = {"seed": cfg.synth.seed, "splits": counts, "generator": asdict(cfg.synth)}
    _json_dump(manifest, out_dir / "dataset.json")
    log_event("synth", out=str(out_dir), **counts)
    return manifest


def stage_train_source(cfg: PipelineConfig, data_dir: Path, out_path: Path) -> ModelParams:
    """Train the source model on a labeled split and persist it as JSON."""
    split = load_split(data_dir)
    labeled = [(img, lbl) for _, img, lbl in split if lbl is not None]
    if len(labeled) != len(split):
        raise ConfigError(f"train-source needs labels for every image under {data_dir}")
    params, history = train_source(labeled, replace(cfg.train, mode="rpl_pem"), cfg.loss)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(params.to_json() + "\n")
    log_event(
        "train-source",
        images=len(labeled),
        final_loss=history[-1]["l_total"],
        out=str(out_path),
    )
    return params


def stage_stats(cfg: PipelineConfig, data_dir: Path, out_path: Path) -> DomainStats:
    """Pixel-weighted mean intensity of a split, persisted as JSON."""
    split = load_split(data_dir)
    stats = compute_domain_stats([img for _, img, _ in split])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(stats.to_json() + "\n")
    log_event("stats", images=len(split), u_d=stats.u_d, out=str(out_path))
    return stats


def stage_t3ie(cfg: PipelineConfig, data_dir: Path, stats_path: Path, out_dir: Path) -> list[str]:
    """Write each image's three enhanced branches as one (3, H, W) tensor."""
    stats = DomainStats.from_json(_require(stats_path, "t3ie").read_text())
    split = load_split(data_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = ImageSpec(cfg.gray_levels)

    def work(item):
        image_id, img, _ = item
        bundle = t3ie(img, stats, SamStats(), spec, cfg.gamma_search)
        save_srt(concat_rgb(bundle).data, out_dir / f"{image_id}.srt")
        _json_dump(
            {"gamma_d": bundle.gamma_d, "gamma_s": bundle.gamma_s},
            out_dir / f"{image_id}.json",
        )
        return image_id

    ids = _parallel(cfg.effective_jobs(), work, split)
    log_event("t3ie", images=len(ids), out=str(out_dir))
    return ids


def load_bundle(t3ie_dir: Path, image_id: str) -> T3Bundle:
    tensor = load_srt(_require(t3ie_dir / f"{image_id}.srt", "t3ie tensor"))
    gammas = json.loads((t3ie_dir / f"{image_id}.json").read_text())
    return T3Bundle(
        he=GrayImage(tensor[0]),
        gd=GrayImage(tensor[1]),
        gs=GrayImage(tensor[2]),
        gamma_d=gammas["gamma_d"],
        gamma_s=gammas["gamma_s"],
    )


def stage_pseudo(cfg: PipelineConfig, model_path: Path, t3ie_dir: Path, out_dir: Path) -> list[str]:
    """Ensemble the source model over the three branches; write P-bar and Y."""
    params = ModelParams.from_json(_require(model_path, "pseudo").read_text())
    model = LinearSourceModel(params)
    ids = sorted(p.stem for p in _require(t3ie_dir, "pseudo").glob("*.srt"))
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(image_id):
        bundle = load_bundle(t3ie_dir, image_id)
        p_bar, y = ensemble_initial_label(
            model.predict_prob(bundle.he),
            model.predict_prob(bundle.gd),
            model.predict_prob(bundle.gs),
        )
        save_srt(p_bar.data, out_dir / f"{image_id}_pbar.srt")
        save_srt(y.data, out_dir / f"{image_id}_y.srt")
        return image_id

    done = _parallel(cfg.effective_jobs(), work, ids)
    log_event("pseudo", images=len(done), out=str(out_dir))
    return done


def stage_refine(
    cfg: PipelineConfig,
    t3ie_dir: Path,
    pseudo_dir: Path,
    out_dir: Path,
    on_error: str = "abort",
) -> dict:
    """Prompted refinement per image: R, the three branch masks, reliability, box."""
    ids = sorted(p.stem for p in _require(t3ie_dir, "refine").glob("*.srt"))
    _require(pseudo_dir, "refine")
    out_dir.mkdir(parents=True, exist_ok=True)
    seg = make_segmenter(cfg)
    skipped, failed = [], []
    # External bridges serialize requests internally; oracle calls are pure,
    # so per-image parallelism is safe for both.
    jobs = cfg.effective_jobs() if getattr(seg, "kind", "oracle") == "oracle" else 1

    def work(image_id):
        y = LabelMask(load_srt(_require(pseudo_dir / f"{image_id}_y.srt", "refine")), 2)
        bundle = load_bundle(t3ie_dir, image_id)
        try:
            box = derive_box_prompt(y, 1, cfg.margin)
        except EmptyPseudoLabel:
            if cfg.empty_box_policy == "skip":
                log_event("refine", image=image_id, skipped="empty pseudo-label")
                skipped.append(image_id)
                return None
            box = BoxPrompt(0, 0, y.width - 1, y.height - 1)
        try:
            refined = refine(seg, bundle, box)
        except SegmenterIoError as exc:
            if on_error == "skip":
                log_event("refine", image=image_id, error=str(exc))
                failed.append(image_id)
                return None
            raise
        img_dir = out_dir / image_id
        img_dir.mkdir(parents=True, exist_ok=True)
        save_srt(refined.r.data, img_dir / "R.srt")
        save_srt(refined.r_he.data, img_dir / "R_he.srt")
        save_srt(refined.r_gd.data, img_dir / "R_gd.srt")
        save_srt(refined.r_gs.data, img_dir / "R_gs.srt")
        save_srt(refined.mask.data.astype(np.uint8), img_dir / "reliab.srt")
        _json_dump({"box": box.as_list(), "margin": cfg.margin}, img_dir / "box.json")
        return image_id

    done = [r for r in _parallel(jobs, work, ids) if r is not None]
    if hasattr(seg, "close"):
        seg.close()
    log_event("refine", images=len(done), skipped=len(skipped), failed=len(failed), out=str(out_dir))
    return {"refined": done, "skipped": skipped, "failed": failed}


def load_refined(refine_dir: Path, image_id: str) -> RefinedLabelSet:
    img_dir = _require(refine_dir / image_id, "refined labels")
    box_doc = json.loads((img_dir / "box.json").read_text())
    return RefinedLabelSet(
        r=LabelMask(load_srt(img_dir / "R.srt"), 2),
        r_he=LabelMask(load_srt(img_dir / "R_he.srt"), 2),
        r_gd=LabelMask(load_srt(img_dir / "R_gd.srt"), 2),
        r_gs=LabelMask(load_srt(img_dir / "R_gs.srt"), 2),
        mask=ReliabilityMask(load_srt(img_dir / "reliab.srt").astype(bool)),
        box=BoxPrompt(*box_doc["box"]),
    )


def _gather_adapt_samples(
    data_dir: Path, pseudo_dir: Optional[Path], refine_dir: Optional[Path], mode: str
) -> list[AdaptSample]:
    samples = []
    for image_id, img, _ in load_split(data_dir):
        y = None
        refined = None
        if mode == "pl_y":
            y_path = pseudo_dir / f"{image_id}_y.srt" if pseudo_dir else None
            if y_path is None or not y_path.exists():
                raise ConfigError(f"mode pl_y needs pseudo-labels: {y_path}")
            y = LabelMask(load_srt(y_path), 2)
        if mode in ("pl_r", "rpl", "rpl_pem"):
            if refine_dir is None or not (refine_dir / image_id).exists():
                # refine may legitimately have skipped this image
                log_event("adapt", image=image_id, skipped="no refined label")
                continue
            refined = load_refined(refine_dir, image_id)
        samples.append(AdaptSample(image=img, y=y, refined=refined, image_id=image_id))
    return samples


def stage_adapt(
    cfg: PipelineConfig,
    source_model_path: Path,
    data_dir: Path,
    pseudo_dir: Optional[Path],
    refine_dir: Optional[Path],
    out_path: Path,
    log_path: Optional[Path] = None,
    mode: Optional[str] = None,
    select_best_on: Optional[Path] = None,
    refresh_every: int = 0,
    stats_path: Optional[Path] = None,
) -> ModelParams:
    """Adapt the source model on the target training split."""
    theta_s = ModelParams.from_json(_require(source_model_path, "adapt").read_text())
    mode = mode or cfg.train.mode
    train_cfg = replace(cfg.train, mode=mode)
    samples = _gather_adapt_samples(data_dir, pseudo_dir, refine_dir, mode)

    refresh_fn = None
    if refresh_every > 0:
        if stats_path is None:
            raise ConfigError("--refresh-every needs domain stats to rebuild pseudo-labels")
        stats = DomainStats.from_json(_require(stats_path, "adapt refresh").read_text())
        seg = make_segmenter(cfg)
        raw = [(s.image_id, s.image) for s in samples]
        spec = ImageSpec(cfg.gray_levels)
        holder = {"current": samples}

        def refresh_fn(params: ModelParams, epoch: int):
            if epoch % refresh_every != 0:
                return holder["current"]
            model = LinearSourceModel(params)
            fresh = []
            for image_id, img in raw:
                bundle = t3ie(img, stats, SamStats(), spec, cfg.gamma_search)
                _, y = ensemble_initial_label(
                    model.predict_prob(bundle.he),
                    model.predict_prob(bundle.gd),
                    model.predict_prob(bundle.gs),
                )
                try:
                    box = derive_box_prompt(y, 1, cfg.margin)
                except EmptyPseudoLabel:
                    continue
                fresh.append(
                    AdaptSample(
                        image=img, y=y, refined=refine(seg, bundle, box), image_id=image_id
                    )
                )
            holder["current"] = fresh
            return fresh

    best = None
    if select_best_on is not None:
        from .metrics import dice

        val = [(img, lbl) for _, img, lbl in load_split(select_best_on) if lbl is not None]
        if not val:
            raise ConfigError(f"--select-best-on has no labeled images: {select_best_on}")
        best = {"params": None, "score": -1.0}

        def epoch_callback(params: ModelParams, epoch: int) -> None:
            model = LinearSourceModel(params)
            score = float(np.mean([dice(model.predict_label(img), lbl) for img, lbl in val]))
            if score > best["score"]:
                best.update(params=params, score=score)

    else:
        epoch_callback = None

    theta_t, history = adapt(
        theta_s, samples, train_cfg, cfg.loss, refresh_fn=refresh_fn, epoch_callback=epoch_callback
    )
    if best is not None and best["params"] is not None:
        theta_t = best["params"]
        log_event("adapt", selected_val_dice=best["score"])

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(theta_t.to_json() + "\n")
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w") as fh:
            for row in history:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    log_event("adapt", mode=mode, images=len(samples), out=str(out_path))
    return theta_t


def stage_eval(
    cfg: PipelineConfig,
    gt_dir: Path,
    pred_dir: Optional[Path],
    model_path: Optional[Path],
    images_dir: Optional[Path],
    out_csv: Path,
    out_summary: Path,
    save_pred: Optional[Path] = None,
    spacing: tuple[float, float] = (1.0, 1.0),
) -> dict:
    """Compare predicted masks (from a directory or a model) against ground truth."""
    gt_dir = _require(gt_dir, "eval ground truth")
    records: list[EvalRecord] = []

    if pred_dir is not None:
        ids = sorted(p.stem for p in _require(pred_dir, "eval predictions").glob("*.srt"))

        def work(image_id):
            pred = LabelMask(load_srt(pred_dir / f"{image_id}.srt"), 2)
            gt = LabelMask(load_srt(_require(gt_dir / f"{image_id}.srt", "eval")), 2)
            return evaluate_pair(image_id, pred, gt, 1, spacing)

        records = _parallel(cfg.effective_jobs(), work, ids)
    elif model_path is not None and images_dir is not None:
        params = ModelParams.from_json(_require(model_path, "eval").read_text())
        model = LinearSourceModel(params)
        ids = list_image_ids(_require(images_dir, "eval images"))
        if save_pred is not None:
            save_pred.mkdir(parents=True, exist_ok=True)

        def work(image_id):
            img = load_pgm(images_dir / f"{image_id}.pgm")
            pred = model.predict_label(img)
            if save_pred is not None:
                save_srt(pred.data, save_pred / f"{image_id}.srt")
            gt = LabelMask(load_srt(_require(gt_dir / f"{image_id}.srt", "eval")), 2)
            return evaluate_pair(image_id, pred, gt, 1, spacing)

        records = _parallel(cfg.effective_jobs(), work, ids)
    else:
        raise ConfigError("eval needs either --pred-dir or --model with --images")

    out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_csv(records, out_csv)
    summary = summarize(records)
    _json_dump(summary, out_summary)
    log_event("eval", n=summary["n"], mean_dice=summary["mean_dice"], out=str(out_csv))
    return summary


# ---------------------------------------------------------------------------
# Ablation harness.


def _mean_dice_against_labels(masks: dict[str, LabelMask], labels: dict[str, LabelMask]) -> float:
    from .metrics import dice

    vals = [dice(masks[i], labels[i]) for i in sorted(masks) if i in labels]
    return float(np.mean(vals)) if vals else float("nan")


def stage_ablate(
    cfg: PipelineConfig,
    source_model_path: Path,
    data_root: Path,
    t3ie_dir: Path,
    pseudo_dir: Path,
    refine_dir: Path,
    out_dir: Path,
) -> dict:
    """Mode matrix and pseudo-label-quality matrix, as one combined report.

    The quality matrix is evaluated on the target training split (where
    pseudo-labels live); the mode matrix adapts on target train and
    evaluates on target test. The rpl_pem row reuses exactly the artifacts
    of the standalone refine stage.
    """
    theta_s = ModelParams.from_json(_require(source_model_path, "ablate").read_text())
    model = LinearSourceModel(theta_s)
    train_dir = data_root / "target" / "train"
    test_dir = data_root / "target" / "test"
    train_split = load_split(train_dir)
    labels = {i: lbl for i, _, lbl in train_split if lbl is not None}
    if not labels:
        raise ConfigError("ablate needs target train labels for the quality matrix")

    seg = make_segmenter(cfg)
    raw_pred, y_mask, sam_x, sam_rgb = {}, {}, {}, {}
    for image_id, img, _ in train_split:
        raw_pred[image_id] = model.predict_label(img)
        y_path = pseudo_dir / f"{image_id}_y.srt"
        if not y_path.exists():
            continue
        y = LabelMask(load_srt(y_path), 2)
        y_mask[image_id] = y
        if not (refine_dir / image_id).exists():
            continue
        refined = load_refined(refine_dir, image_id)
        sam_rgb[image_id] = refined.r
        sam_x[image_id] = segment_with_prompt(seg, gray_as_rgb(img), refined.box)
    if hasattr(seg, "close"):
        seg.close()

    quality = {
        "source_model": _mean_dice_against_labels(raw_pred, labels),
        "source_model_t3ie": _mean_dice_against_labels(y_mask, labels),
        "sam_on_raw": _mean_dice_against_labels(sam_x, labels),
        "sam_on_rgb": _mean_dice_against_labels(sam_rgb, labels),
    }

    models_dir = out_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    mode_rows = {}
    for mode in ADAPT_MODES:
        theta_t = stage_adapt(
            cfg,
            source_model_path,
            train_dir,
            pseudo_dir,
            refine_dir,
            models_dir / f"{mode}.json",
            log_path=None,
            mode=mode,
        )
        m = LinearSourceModel(theta_t)
        recs = []
        for image_id, img, lbl in load_split(test_dir):
            if lbl is None:
                continue
            recs.append(evaluate_pair(image_id, m.predict_label(img), lbl))
        s = summarize(recs)
        mode_rows[mode] = {"mean_dice": s["mean_dice"], "mean_assd": s["mean_assd"]}

    report = {"pseudo_label_quality": quality, "adaptation_modes": mode_rows}
    _json_dump(report, out_dir / "report.json")
    _write_report_md(report, out_dir / "report.md")
    log_event("ablate", out=str(out_dir))
    return report


def _write_report_md(report: dict, path: Path) -> None:
    lines = ["# Ablation report", "", "## Pseudo-label quality (target train, mean Dice)", ""]
    lines += ["| variant | mean dice |", "|---|---|"]
    for k, v in report["pseudo_label_quality"].items():
        lines.append(f"| {k} | {v:.4f} |")
    lines += ["", "## Adaptation modes (target test)", ""]
    lines += ["| mode | mean dice | mean assd |", "|---|---|---|"]
    for k, v in report["adaptation_modes"].items():
        lines.append(f"| {k} | {v['mean_dice']:.4f} | {v['mean_assd']:.4f} |")
    path.write_text("\n".join(lines) + "\n")

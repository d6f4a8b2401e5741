"""Stage-level pipeline behavior on a miniature run directory."""

import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import srpl.pipeline as P
from srpl.errors import ConfigError
from srpl.image import load_srt, save_srt
from srpl.losses import LossConfig
from srpl.model import TrainConfig
from srpl.synth import SynthDomainConfig


def tiny_config(**kw):
    synth = SynthDomainConfig(
        height=48,
        width=48,
        radius_min=10,
        radius_max=15,
        n_source_train=4,
        n_source_test=2,
        n_target_train=4,
        n_target_test=2,
        seed=11,
    )
    base = dict(
        seed=11,
        train=TrainConfig(epochs=60, seed=11),
        loss=LossConfig(),
        synth=synth,
        jobs=1,
    )
    base.update(kw)
    return P.PipelineConfig(**base)


@pytest.fixture(scope="module")
def run_root(tmp_path_factory):
    """One miniature pipeline run shared by the read-only stage tests."""
    root = tmp_path_factory.mktemp("run")
    cfg = tiny_config()
    P.stage_synth(cfg, root / "data")
    P.stage_train_source(cfg, root / "data" / "source" / "train", root / "models" / "theta_s.json")
    P.stage_stats(cfg, root / "data" / "target" / "train", root / "artifacts" / "domain_stats.json")
    P.stage_t3ie(
        cfg,
        root / "data" / "target" / "train",
        root / "artifacts" / "domain_stats.json",
        root / "artifacts" / "t3ie",
    )
    P.stage_pseudo(
        cfg, root / "models" / "theta_s.json", root / "artifacts" / "t3ie", root / "artifacts" / "pseudo"
    )
    P.stage_refine(
        cfg, root / "artifacts" / "t3ie", root / "artifacts" / "pseudo", root / "artifacts" / "refine"
    )
    return root, cfg


def dir_digest(path: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_synth_writes_all_splits(run_root):
    root, _ = run_root
    for split in ("source/train", "source/test", "target/train", "target/test"):
        images = list((root / "data" / split / "images").glob("*.pgm"))
        labels = list((root / "data" / split / "labels").glob("*.srt"))
        assert len(images) == len(labels) > 0
    manifest = json.loads((root / "data" / "dataset.json").read_text())
    assert manifest["splits"]["target/train"] == 4


def test_stage_reruns_are_byte_identical(run_root, tmp_path):
    root, cfg = run_root
    before = dir_digest(root / "artifacts" / "pseudo")
    P.stage_pseudo(
        cfg, root / "models" / "theta_s.json", root / "artifacts" / "t3ie", root / "artifacts" / "pseudo"
    )
    assert dir_digest(root / "artifacts" / "pseudo") == before

    out2 = tmp_path / "data2"
    P.stage_synth(cfg, out2)
    assert dir_digest(out2 / "source") == dir_digest(root / "data" / "source")


def test_refine_artifacts_complete(run_root):
    root, _ = run_root
    for img_dir in (root / "artifacts" / "refine").iterdir():
        if not img_dir.is_dir():
            continue
        names = {p.name for p in img_dir.iterdir()}
        assert names == {"R.srt", "R_he.srt", "R_gd.srt", "R_gs.srt", "reliab.srt", "box.json"}
        reliab = load_srt(img_dir / "reliab.srt")
        assert set(np.unique(reliab)) <= {0, 1}
        doc = json.loads((img_dir / "box.json").read_text())
        assert len(doc["box"]) == 4 and doc["margin"] == 8


def test_adapt_and_eval(run_root, tmp_path):
    root, cfg = run_root
    theta_t = P.stage_adapt(
        cfg,
        root / "models" / "theta_s.json",
        root / "data" / "target" / "train",
        root / "artifacts" / "pseudo",
        root / "artifacts" / "refine",
        tmp_path / "theta_t.json",
        log_path=tmp_path / "log.jsonl",
        mode="rpl",
    )
    assert (tmp_path / "theta_t.json").exists()
    log_lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(log_lines) == cfg.train.epochs
    row = json.loads(log_lines[0])
    assert {"l_pce", "l_pdc", "l_rpl", "l_pem", "l_total"} <= set(row)

    summary = P.stage_eval(
        cfg,
        root / "data" / "target" / "test" / "labels",
        None,
        tmp_path / "theta_t.json",
        root / "data" / "target" / "test" / "images",
        tmp_path / "eval.csv",
        tmp_path / "eval_summary.json",
    )
    assert summary["n"] == 2
    assert 0.0 <= summary["mean_dice"] <= 1.0


def test_eval_identical_dirs_gives_perfect_scores(run_root, tmp_path):
    root, cfg = run_root
    labels = root / "data" / "target" / "test" / "labels"
    summary = P.stage_eval(
        cfg, labels, labels, None, None, tmp_path / "e.csv", tmp_path / "e.json"
    )
    assert summary["mean_dice"] == 1.0
    assert summary["mean_assd"] == 0.0
    assert summary["n_undefined"] == 0


def test_missing_artifact_names_path(run_root, tmp_path):
    root, cfg = run_root
    missing = tmp_path / "nowhere"
    with pytest.raises(ConfigError, match=str(missing)):
        P.stage_t3ie(cfg, root / "data" / "target" / "train", missing / "stats.json", tmp_path / "out")


def test_adapt_em_runs_without_pseudo_artifacts(run_root, tmp_path):
    root, cfg = run_root
    P.stage_adapt(
        cfg,
        root / "models" / "theta_s.json",
        root / "data" / "target" / "train",
        None,
        None,
        tmp_path / "em.json",
        mode="em",
    )
    assert (tmp_path / "em.json").exists()


def test_config_schema_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"segmenter": {"kind": "telepathy"}}))
    with pytest.raises(ConfigError):
        P.load_config(str(bad))


def test_config_env_var_overrides_segmenter(tmp_path, monkeypatch):
    monkeypatch.setenv(P.SEGMENTER_CMD_ENV, "some-bridge --flag")
    cfg = P.load_config(None)
    assert cfg.segmenter_kind == "external"
    assert cfg.segmenter_command == "some-bridge --flag"


def test_config_file_plus_overrides(tmp_path):
    doc = {"seed": 5, "train": {"epochs": 7}, "loss": {"lambda": 2.5}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    cfg = P.load_config(str(path), overrides={"train": {"epochs": 9}})
    assert cfg.seed == 5
    assert cfg.train.epochs == 9
    assert cfg.loss.lam == 2.5


def test_cli_entrypoint_roundtrip(tmp_path):
    from srpl.cli import main

    root = tmp_path / "run"
    assert main(["synth", "--root", str(root), "--seed", "11"]) == 0
    assert (root / "data" / "dataset.json").exists()
    # missing upstream artifact -> nonzero exit naming the path
    rc = main(["pseudo", "--root", str(root)])
    assert rc == 2


def test_emptybox_policy_full_image(run_root, tmp_path):
    root, cfg = run_root
    # pseudo-labels that are all background for one image
    pseudo2 = tmp_path / "pseudo_empty"
    pseudo2.mkdir()
    ids = sorted(p.stem for p in (root / "artifacts" / "t3ie").glob("*.srt"))
    for image_id in ids:
        y = load_srt(root / "artifacts" / "pseudo" / f"{image_id}_y.srt")
        save_srt(np.zeros_like(y), pseudo2 / f"{image_id}_y.srt")

    out_skip = tmp_path / "refine_skip"
    result = P.stage_refine(cfg, root / "artifacts" / "t3ie", pseudo2, out_skip)
    assert result["refined"] == [] and len(result["skipped"]) == len(ids)

    out_full = tmp_path / "refine_full"
    cfg_full = replace(cfg, empty_box_policy="full-image")
    result = P.stage_refine(cfg_full, root / "artifacts" / "t3ie", pseudo2, out_full)
    assert len(result["refined"]) == len(ids)
    box = json.loads((out_full / ids[0] / "box.json").read_text())["box"]
    assert box == [0, 0, 47, 47]

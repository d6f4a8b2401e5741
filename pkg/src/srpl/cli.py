"""Stage-oriented command line for the adaptation pipeline.

Each subcommand maps to one function in :mod:`srpl.pipeline`. Paths default
to a single run directory (``--root``, default ``./run``), so the whole
pipeline is::

    srpl synth
    srpl train-source
    srpl stats
    srpl t3ie
    srpl pseudo
    srpl refine
    srpl adapt
    srpl eval
    srpl ablate

The segmenter defaults to the built-in oracle; point it at an external
bridge with ``--segmenter-cmd`` or the SRPL_SEGMENTER_CMD environment
variable.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline as P
from .errors import SrplError

__all__ = ["main", "build_parser"]


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--root", default="run", help="run directory (default: ./run)")
    sub.add_argument("--config", default=None, help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--jobs", type=int, default=None, help="parallel workers per stage")
    sub.add_argument(
        "--segmenter-cmd",
        default=None,
        help="external segmenter command (switches kind to external)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srpl", description="source-free domain adaptation pipeline"
    )
    subs = parser.add_subparsers(dest="stage", required=True)

    s = subs.add_parser("synth", help="generate the synthetic two-domain benchmark")
    _common(s)
    s.add_argument("--out", default=None, help="dataset directory (default <root>/data)")

    s = subs.add_parser("train-source", help="train the source model on labeled source data")
    _common(s)
    s.add_argument("--data", default=None, help="labeled split (default <root>/data/source/train)")
    s.add_argument("--out", default=None, help="model path (default <root>/models/theta_s.json)")
    s.add_argument("--epochs", type=int, default=None)

    s = subs.add_parser("stats", help="compute target-domain intensity statistics")
    _common(s)
    s.add_argument("--data", default=None, help="split (default <root>/data/target/train)")
    s.add_argument("--out", default=None, help="stats path (default <root>/artifacts/domain_stats.json)")

    s = subs.add_parser("t3ie", help="run the tri-branch enhancement per image")
    _common(s)
    s.add_argument("--data", default=None)
    s.add_argument("--stats", default=None)
    s.add_argument("--out", default=None)

    s = subs.add_parser("pseudo", help="ensemble initial pseudo-labels from the source model")
    _common(s)
    s.add_argument("--model", default=None)
    s.add_argument("--t3ie", default=None)
    s.add_argument("--out", default=None)

    s = subs.add_parser("refine", help="prompt-refine pseudo-labels and mine reliability")
    _common(s)
    s.add_argument("--t3ie", default=None)
    s.add_argument("--pseudo", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--margin", type=int, default=None, help="box margin in pixels")
    s.add_argument("--empty-box-policy", choices=["skip", "full-image"], default=None)
    s.add_argument("--on-error", choices=["skip", "abort"], default="abort")

    s = subs.add_parser("adapt", help="adapt the source model on the target training split")
    _common(s)
    s.add_argument("--model", default=None)
    s.add_argument("--data", default=None)
    s.add_argument("--pseudo", default=None)
    s.add_argument("--refine", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--log", default=None)
    s.add_argument("--mode", choices=list(P.ADAPT_MODES), default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--select-best-on", default=None, help="labeled val split for checkpoint selection")
    s.add_argument("--refresh-every", type=int, default=0, help="regenerate pseudo-labels every N epochs")
    s.add_argument("--stats", default=None, help="domain stats (needed with --refresh-every)")

    s = subs.add_parser("eval", help="evaluate predictions against ground truth")
    _common(s)
    s.add_argument("--gt-dir", default=None, help="directory of u8 SRT ground-truth masks")
    s.add_argument("--pred-dir", default=None, help="directory of u8 SRT predicted masks")
    s.add_argument("--model", default=None, help="predict with this model instead of --pred-dir")
    s.add_argument("--images", default=None, help="PGM images for --model")
    s.add_argument("--save-pred", default=None, help="write model predictions here")
    s.add_argument("--out-csv", default=None)
    s.add_argument("--out-summary", default=None)
    s.add_argument("--spacing", type=float, nargs=2, default=(1.0, 1.0), metavar=("SX", "SY"))

    s = subs.add_parser("ablate", help="mode matrix + pseudo-label-quality matrix report")
    _common(s)
    s.add_argument("--model", default=None)
    s.add_argument("--data", default=None, help="dataset root (default <root>/data)")
    s.add_argument("--t3ie", default=None)
    s.add_argument("--pseudo", default=None)
    s.add_argument("--refine", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=None)

    return parser


def _config_from(args) -> P.PipelineConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "segmenter_cmd", None):
        overrides["segmenter"] = {"kind": "external", "command": args.segmenter_cmd}
    if getattr(args, "margin", None) is not None:
        overrides["margin"] = args.margin
    if getattr(args, "empty_box_policy", None):
        overrides["empty_box_policy"] = args.empty_box_policy
    if getattr(args, "epochs", None) is not None:
        overrides.setdefault("train", {})["epochs"] = args.epochs
    if getattr(args, "mode", None) is not None:
        overrides.setdefault("train", {})["mode"] = args.mode
    if getattr(args, "lam", None) is not None:
        overrides.setdefault("loss", {})["lambda"] = args.lam
    return P.load_config(args.config, overrides)


def _run(args) -> int:
    root = Path(args.root)
    cfg = _config_from(args)

    def p(value, default: Path) -> Path:
        return Path(value) if value else default

    stage = args.stage
    if stage == "synth":
        P.stage_synth(cfg, p(args.out, root / "data"))
    elif stage == "train-source":
        P.stage_train_source(
            cfg,
            p(args.data, root / "data" / "source" / "train"),
            p(args.out, root / "models" / "theta_s.json"),
        )
    elif stage == "stats":
        P.stage_stats(
            cfg,
            p(args.data, root / "data" / "target" / "train"),
            p(args.out, root / "artifacts" / "domain_stats.json"),
        )
    elif stage == "t3ie":
        P.stage_t3ie(
            cfg,
            p(args.data, root / "data" / "target" / "train"),
            p(args.stats, root / "artifacts" / "domain_stats.json"),
            p(args.out, root / "artifacts" / "t3ie"),
        )
    elif stage == "pseudo":
        P.stage_pseudo(
            cfg,
            p(args.model, root / "models" / "theta_s.json"),
            p(args.t3ie, root / "artifacts" / "t3ie"),
            p(args.out, root / "artifacts" / "pseudo"),
        )
    elif stage == "refine":
        P.stage_refine(
            cfg,
            p(args.t3ie, root / "artifacts" / "t3ie"),
            p(args.pseudo, root / "artifacts" / "pseudo"),
            p(args.out, root / "artifacts" / "refine"),
            on_error=args.on_error,
        )
    elif stage == "adapt":
        P.stage_adapt(
            cfg,
            p(args.model, root / "models" / "theta_s.json"),
            p(args.data, root / "data" / "target" / "train"),
            p(args.pseudo, root / "artifacts" / "pseudo"),
            p(args.refine, root / "artifacts" / "refine"),
            p(args.out, root / "models" / "theta_t.json"),
            log_path=p(args.log, root / "logs" / "adapt.jsonl"),
            mode=args.mode,
            select_best_on=Path(args.select_best_on) if args.select_best_on else None,
            refresh_every=args.refresh_every,
            stats_path=p(args.stats, root / "artifacts" / "domain_stats.json"),
        )
    elif stage == "eval":
        P.stage_eval(
            cfg,
            p(args.gt_dir, root / "data" / "target" / "test" / "labels"),
            Path(args.pred_dir) if args.pred_dir else None,
            p(args.model, root / "models" / "theta_t.json") if not args.pred_dir else None,
            p(args.images, root / "data" / "target" / "test" / "images"),
            p(args.out_csv, root / "reports" / "eval.csv"),
            p(args.out_summary, root / "reports" / "eval_summary.json"),
            save_pred=Path(args.save_pred) if args.save_pred else None,
            spacing=tuple(args.spacing),
        )
    elif stage == "ablate":
        P.stage_ablate(
            cfg,
            p(args.model, root / "models" / "theta_s.json"),
            p(args.data, root / "data"),
            p(args.t3ie, root / "artifacts" / "t3ie"),
            p(args.pseudo, root / "artifacts" / "pseudo"),
            p(args.refine, root / "artifacts" / "refine"),
            p(args.out, root / "reports" / "ablate"),
        )
    else:  # pragma: no cover - argparse enforces choices
        raise SrplError(f"unknown stage {stage}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except SrplError as exc:
        print(f"srpl {args.stage}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

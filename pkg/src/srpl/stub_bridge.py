"""Reference bridge process speaking the srpl-seg/1 protocol.

Serves the built-in oracle segmenter (and, with ``--model``, the built-in
pixel classifier) over stdin/stdout, exactly as an external foundation
segmenter would be wrapped. Used to exercise the external-segmenter client
end to end without any model weights::

    srpl refine --segmenter-cmd "python3 -m srpl.stub_bridge --out-dir /tmp/masks"

Malformed requests get an ``ok: false`` reply; the process stays alive
until stdin closes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import FormatError, SrplError
from .image import GrayImage, RgbImage, load_srt, save_srt
from .model import LinearSourceModel, ModelParams
from .protocol import ProtocolViolation, handshake_line, validate_request
from .segmenter import BoxPrompt, oracle_segment


def _load_rgb(path: str) -> RgbImage:
    tensor = load_srt(path)
    if tensor.dtype != np.float32 or tensor.ndim != 3 or tensor.shape[0] != 3:
        raise FormatError(f"expected f32 (3, H, W) tensor, got {tensor.dtype} {tensor.shape}")
    return RgbImage(tensor)


def _handle_segment(req: dict, out_dir: Path) -> dict:
    img = _load_rgb(req["image"])
    box = BoxPrompt(*(int(v) for v in req["box"]))
    box.check_within(img.width, img.height)
    mask = oracle_segment(img, box)
    mask_path = out_dir / f"mask_{req['id']:06d}.srt"
    save_srt(mask.data, mask_path)
    return {"id": req["id"], "ok": True, "mask": str(mask_path)}


def _handle_predict(req: dict, out_dir: Path, model: LinearSourceModel) -> dict:
    tensor = load_srt(req["image"])
    if tensor.dtype != np.float32 or tensor.ndim != 3 or tensor.shape[0] not in (1, 3):
        raise FormatError(f"expected f32 (1|3, H, W) tensor, got {tensor.dtype} {tensor.shape}")
    if tensor.shape[0] == 1:
        prob = model.predict_prob(GrayImage(tensor[0]))
    else:
        prob = model.predict_prob(RgbImage(tensor))
    prob_path = out_dir / f"prob_{req['id']:06d}.srt"
    save_srt(prob.data, prob_path)
    return {"id": req["id"], "ok": True, "prob": str(prob_path)}


def serve(out_dir: Path, model: LinearSourceModel | None, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    out_dir.mkdir(parents=True, exist_ok=True)
    print(handshake_line(), file=stdout, flush=True)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        req_id = None
        try:
            req = json.loads(line)
            if isinstance(req, dict) and isinstance(req.get("id"), int):
                req_id = req["id"]
            validate_request(req)
            if req["op"] == "segment":
                reply = _handle_segment(req, out_dir)
            else:
                if model is None:
                    raise SrplError("no model loaded; start the bridge with --model")
                reply = _handle_predict(req, out_dir, model)
        except (
            SrplError,
            ProtocolViolation,
            ValueError,
            KeyError,
            OSError,
            json.JSONDecodeError,
        ) as exc:
            reply = {"id": req_id if isinstance(req_id, int) else -1, "ok": False, "error": str(exc)}
        print(json.dumps(reply), file=stdout, flush=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="srpl.stub_bridge")
    parser.add_argument("--out-dir", default="bridge_masks", help="where result tensors are written")
    parser.add_argument("--model", default=None, help="ModelParams JSON for 'predict' requests")
    args = parser.parse_args(argv)
    model = None
    if args.model:
        try:
            model = LinearSourceModel(ModelParams.from_json(Path(args.model).read_text()))
        except (OSError, ValueError, KeyError) as exc:
            print(json.dumps({"fatal": f"cannot load model: {exc}"}), flush=True)
            return 1
    serve(Path(args.out_dir), model)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Regenerate the recorded protocol fixtures.

Run from the repository root::

    python3 tests/fixtures/make_protocol_fixtures.py

The golden image is a deterministic 8x8 scene: a 3x3 bright block, a
single stray bright pixel (exercises the largest-component rule), and a
small position-dependent ripple so no two pixels tie. The golden mask is
the built-in oracle's output for the recorded box and must be reproduced
bit-for-bit by any bridge's stub backend.
"""

import json
from pathlib import Path

import numpy as np

from srpl.image import save_srt
from srpl.segmenter import BoxPrompt, oracle_segment
from srpl.image import RgbImage

HERE = Path(__file__).parent / "protocol"


def golden_image() -> np.ndarray:
    v = np.full((8, 8), 0.2, dtype=np.float64)
    v[2:5, 2:5] = 0.9
    v[6, 6] = 0.85
    ys, xs = np.mgrid[0:8, 0:8]
    v += ((5 * xs + 3 * ys) % 7) / 100.0
    channels = np.stack([v, 0.9 * v, np.power(v, 1.2)])
    return np.clip(channels, 0.0, 1.0).astype(np.float32)


def main() -> None:
    HERE.mkdir(parents=True, exist_ok=True)
    image = golden_image()
    box = BoxPrompt(1, 1, 6, 6)
    save_srt(image, HERE / "golden_image.srt")
    mask = oracle_segment(RgbImage(image), box)
    save_srt(mask.data, HERE / "golden_mask.srt")
    (HERE / "golden_box.json").write_text(json.dumps({"box": box.as_list()}) + "\n")

    requests = [
        {"id": 1, "op": "segment", "image": "golden_image.srt", "box": box.as_list()},
        {"id": 2, "op": "predict", "image": "golden_image.srt"},
    ]
    with open(HERE / "requests.jsonl", "w") as fh:
        for doc in requests:
            fh.write(json.dumps(doc) + "\n")

    responses = [
        {"id": 1, "ok": True, "mask": "golden_mask.srt"},
        {"id": 2, "ok": False, "error": "no model loaded; start the bridge with --model"},
    ]
    with open(HERE / "responses.jsonl", "w") as fh:
        for doc in responses:
            fh.write(json.dumps(doc) + "\n")

    malformed = [
        '{"id": 3, "op": "segment"',
        '{"id": "three", "op": "segment", "image": "x.srt", "box": [0, 0, 1, 1]}',
        '{"id": 4, "op": "resize", "image": "x.srt"}',
        '{"id": 5, "op": "segment", "image": "x.srt", "box": [0, 0, 1]}',
        '{"id": 6, "op": "segment", "image": "x.srt", "box": [3, 0, 1, 1]}',
        '[1, 2, 3]',
        '{"id": 7, "op": "segment", "box": [0, 0, 1, 1]}',
    ]
    (HERE / "malformed_requests.jsonl").write_text("\n".join(malformed) + "\n")
    print(f"wrote fixtures to {HERE}")


if __name__ == "__main__":
    main()

"""Drive an out-of-process segmenter over the srpl-seg/1 wire protocol.

Spawns the reference stub bridge as a subprocess, sends it a box-prompted
segmentation request through the client, and checks the reply against the
in-process oracle. Point SRPL_SEGMENTER_CMD (or --segmenter-cmd on the
CLI) at any process speaking this protocol, e.g. the TypeScript bridge:

    node bridge/dist/main.js --stub --out-dir /tmp/masks
"""

import sys
import tempfile

import numpy as np

from srpl import ExternalBridgeClient, OracleSegmenter
from srpl.image import RgbImage
from srpl.segmenter import BoxPrompt, segment_with_prompt


def main():
    rng = np.random.default_rng(5)
    img_arr = np.full((3, 24, 24), 0.2, dtype=np.float32)
    img_arr[:, 6:16, 8:18] = 0.85
    img_arr += rng.normal(0, 0.02, img_arr.shape).astype(np.float32)
    img = RgbImage(np.clip(img_arr, 0, 1))
    box = BoxPrompt(4, 4, 20, 19)

    workdir = tempfile.mkdtemp(prefix="bridge-demo-")
    cmd = f"{sys.executable} -m srpl.stub_bridge --out-dir {workdir}/masks"
    print(f"launching bridge: {cmd}")
    with ExternalBridgeClient(cmd, exchange_dir=f"{workdir}/exchange", timeout=60) as client:
        remote = segment_with_prompt(client, img, box)
        print(f"bridge returned a mask with {int(remote.data.sum())} foreground pixels")

    local = segment_with_prompt(OracleSegmenter(), img, box)
    print("matches the in-process oracle bit for bit:", bool(np.array_equal(remote.data, local.data)))


if __name__ == "__main__":
    main()

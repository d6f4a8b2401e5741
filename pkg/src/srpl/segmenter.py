"""Prompted segmentation: initial pseudo-labels, box prompts, and segmenter backends.

Two interchangeable segmenter backends answer box prompts: a built-in
deterministic oracle (box-restricted Otsu threshold plus largest connected
component) for desk-scale runs, and a client that drives an external
bridge process over the line-delimited JSON protocol in
:mod:`srpl.protocol`.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyPseudoLabel,
    FormatError,
    SegmenterIoError,
    SegmenterTimeout,
    ShapeError,
)
from .image import GrayImage, LabelMask, ProbMap, RgbImage, load_srt, save_srt
from .protocol import ProtocolViolation, parse_handshake, parse_response

__all__ = [
    "BoxPrompt",
    "OracleSegmenter",
    "ExternalBridgeClient",
    "SegmenterHandle",
    "gray_as_rgb",
    "predict_prob",
    "ensemble_initial_label",
    "derive_box_prompt",
    "segment_with_prompt",
    "oracle_segment",
    "otsu_threshold",
]


@dataclass(frozen=True)
class BoxPrompt:
    """Axis-aligned box, inclusive pixel coordinates, origin top-left, x = column."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        if self.xmin < 0 or self.ymin < 0:
            raise ValueError(f"box corners must be non-negative: {self}")
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"box is empty: {self}")

    def check_within(self, width: int, height: int) -> None:
        if self.xmax >= width or self.ymax >= height:
            raise ShapeError(f"{self} exceeds image bounds {width}x{height}")

    def as_list(self) -> list[int]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


def gray_as_rgb(img: GrayImage) -> RgbImage:
    """Replicate one channel three times; the wire protocol carries one shape."""
    return RgbImage(np.stack([img.data, img.data, img.data]))


def predict_prob(model, img: Union[GrayImage, RgbImage]) -> ProbMap:
    """Per-pixel class probabilities from a source-model handle.

    The handle may be a built-in pixel classifier or an external bridge
    client; both expose ``predict_prob``.
    """
    return model.predict_prob(img)


def ensemble_initial_label(
    p_he: ProbMap, p_gd: ProbMap, p_gs: ProbMap
) -> tuple[ProbMap, LabelMask]:
    """Average the three branch predictions and take the per-pixel argmax.

    Ties in the argmax resolve to the lowest class index.
    """
    if not (p_he.data.shape == p_gd.data.shape == p_gs.data.shape):
        raise ShapeError(
            f"probability maps disagree on shape: {p_he.data.shape}, "
            f"{p_gd.data.shape}, {p_gs.data.shape}"
        )
    mean = (
        p_he.data.astype(np.float64)
        + p_gd.data.astype(np.float64)
        + p_gs.data.astype(np.float64)
    ) / 3.0
    p_bar = ProbMap(mean.astype(np.float32))
    return p_bar, p_bar.argmax_label()


def derive_box_prompt(y: LabelMask, foreground_class: int = 1, margin: int = 8) -> BoxPrompt:
    """Tight bounding box of the foreground class, expanded by a margin and clamped."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    rows, cols = np.nonzero(y.data == foreground_class)
    if rows.size == 0:
        raise EmptyPseudoLabel(f"no pixel of class {foreground_class} in the mask")
    return BoxPrompt(
        xmin=max(int(cols.min()) - margin, 0),
        ymin=max(int(rows.min()) - margin, 0),
        xmax=min(int(cols.max()) + margin, y.width - 1),
        ymax=min(int(rows.max()) + margin, y.height - 1),
    )


# ---------------------------------------------------------------------------
# Built-in oracle segmenter.


def otsu_threshold(levels: np.ndarray) -> int | None:
    """Otsu's threshold over integer levels 0..255; None if no split exists.

    Maximizes the between-class variance; on ties the lowest threshold
    wins. Pixels with level <= t form the background class.
    """
    hist = np.bincount(levels.ravel(), minlength=256).astype(np.int64)
    idx = np.arange(256, dtype=np.int64)
    w0 = np.cumsum(hist)
    total = int(w0[-1])
    sum0 = np.cumsum(idx * hist)
    total_sum = int(sum0[-1])

    best_t, best_score = None, -np.inf
    for t in range(255):
        n0 = int(w0[t])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = sum0[t] / n0
        mu1 = (total_sum - sum0[t]) / n1
        d = mu0 - mu1
        score = (float(n0) * float(n1)) * (d * d)
        if score > best_score:
            best_score, best_t = score, t
    return best_t


def oracle_segment(img: RgbImage, box: BoxPrompt) -> LabelMask:
    """Deterministic stand-in for a promptable foundation segmenter.

    Inside the box: threshold the channel mean at Otsu's threshold computed
    within the box, keep only the largest 4-connected component of the
    brighter class. Outside the box: zero. A box of uniform intensity
    yields an all-zero mask.
    """
    box.check_within(img.width, img.height)
    chans = img.data.astype(np.float64)
    mean = (chans[0] + chans[1] + chans[2]) / 3.0
    sub = mean[box.ymin : box.ymax + 1, box.xmin : box.xmax + 1]
    levels = np.floor(sub * 255.0 + 0.5).astype(np.int64)

    out = np.zeros((img.height, img.width), dtype=np.uint8)
    t = otsu_threshold(levels)
    if t is None:
        return LabelMask(out, 2)

    fg = levels > t
    labeled, n = ndimage.label(fg)  # default structure = 4-connectivity
    if n == 0:
        return LabelMask(out, 2)
    counts = np.bincount(labeled.ravel(), minlength=n + 1)
    keep = int(np.argmax(counts[1:])) + 1  # ties: lowest label = first in scan order
    out[box.ymin : box.ymax + 1, box.xmin : box.xmax + 1] = (labeled == keep).astype(
        np.uint8
    )
    return LabelMask(out, 2)


class OracleSegmenter:
    """In-process segmenter handle wrapping :func:`oracle_segment`."""

    kind = "oracle"

    def __init__(self):
        self.clipped_responses = 0

    def segment_raw(self, img: RgbImage, box: BoxPrompt) -> LabelMask:
        return oracle_segment(img, box)

    def close(self) -> None:
        pass


def segment_with_prompt(seg, img: RgbImage, box: BoxPrompt) -> LabelMask:
    """Run the segmenter on the full image; force everything outside the box to 0.

    A backend may answer with foreground outside the prompt box; those
    pixels are cleared and the handle's ``clipped_responses`` counter
    increments once per offending response.
    """
    box.check_within(img.width, img.height)
    mask = seg.segment_raw(img, box)
    if mask.data.shape != (img.height, img.width):
        raise SegmenterIoError(
            f"segmenter returned shape {mask.data.shape} for a "
            f"{img.height}x{img.width} image"
        )
    inside = np.zeros_like(mask.data, dtype=bool)
    inside[box.ymin : box.ymax + 1, box.xmin : box.xmax + 1] = True
    outside_fg = int((mask.data[~inside] != 0).sum())
    if outside_fg == 0:
        return mask
    seg.clipped_responses += 1
    clipped = mask.data.copy()
    clipped[~inside] = 0
    return LabelMask(clipped, 2)


# ---------------------------------------------------------------------------
# External bridge client.


class ExternalBridgeClient:
    """Client for an external segmenter/predictor speaking the srpl-seg/1 protocol.

    One request is in flight at a time; tensors are exchanged through SRT
    files in ``exchange_dir``. The subprocess is started eagerly and its
    handshake is verified before the first request.
    """

    kind = "external"

    def __init__(
        self,
        command: str,
        workdir: str | None = None,
        exchange_dir: str | None = None,
        timeout: float = 120.0,
    ):
        self.command = command
        self.timeout = timeout
        self.clipped_responses = 0
        self._lock = threading.Lock()
        self._req_id = 0
        if exchange_dir is None:
            import tempfile

            exchange_dir = tempfile.mkdtemp(prefix="srpl-bridge-")
        self._exchange = Path(exchange_dir)
        self._exchange.mkdir(parents=True, exist_ok=True)

        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                cwd=workdir,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SegmenterIoError(f"cannot launch bridge {command!r}: {exc}") from exc

        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump_stdout, daemon=True)
        self._reader.start()

        try:
            parse_handshake(self._read_line())
        except ProtocolViolation as exc:
            self.close()
            raise SegmenterIoError(str(exc)) from exc

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _read_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise SegmenterTimeout(
                f"bridge gave no reply within {self.timeout}s"
            ) from None
        if line is None:
            raise SegmenterIoError("bridge closed its stdout")
        return line

    def _roundtrip(self, payload: dict) -> dict:
        if self._proc.poll() is not None:
            raise SegmenterIoError("bridge process has exited")
        line = json.dumps(payload)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SegmenterIoError(f"bridge stdin closed: {exc}") from exc
        try:
            reply = parse_response(self._read_line(), expect_id=payload["id"])
        except ProtocolViolation as exc:
            raise SegmenterIoError(str(exc)) from exc
        if not reply["ok"]:
            raise SegmenterIoError(f"bridge error: {reply.get('error', '<no message>')}")
        return reply

    def _load_tensor(self, reply: dict, key: str) -> np.ndarray:
        path = reply.get(key)
        if not isinstance(path, str):
            raise SegmenterIoError(f"bridge reply lacks a {key!r} path")
        try:
            return load_srt(path)
        except (OSError, FormatError) as exc:
            raise SegmenterIoError(f"bridge wrote an unreadable tensor: {exc}") from exc

    def segment_raw(self, img: RgbImage, box: BoxPrompt) -> LabelMask:
        with self._lock:
            self._req_id += 1
            rid = self._req_id
            img_path = self._exchange / f"img_{rid:06d}.srt"
            save_srt(img.data, img_path)
            reply = self._roundtrip(
                {"id": rid, "op": "segment", "image": str(img_path), "box": box.as_list()}
            )
            arr = self._load_tensor(reply, "mask")
        if arr.dtype != np.uint8 or arr.shape != (img.height, img.width):
            raise SegmenterIoError(
                f"mask tensor has dtype {arr.dtype} shape {arr.shape}, "
                f"expected u8 ({img.height}, {img.width})"
            )
        if arr.max(initial=0) > 1:
            raise SegmenterIoError("mask tensor values must be in {0, 1}")
        return LabelMask(arr, 2)

    def predict_prob(self, img: Union[GrayImage, RgbImage]) -> ProbMap:
        if isinstance(img, GrayImage):
            tensor = img.data[None, :, :]
        else:
            tensor = img.data
        with self._lock:
            self._req_id += 1
            rid = self._req_id
            img_path = self._exchange / f"img_{rid:06d}.srt"
            save_srt(tensor, img_path)
            reply = self._roundtrip({"id": rid, "op": "predict", "image": str(img_path)})
            arr = self._load_tensor(reply, "prob")
        if arr.dtype != np.float32 or arr.ndim != 3 or arr.shape[1:] != tensor.shape[1:]:
            raise SegmenterIoError(
                f"prob tensor has dtype {arr.dtype} shape {arr.shape}, expected "
                f"f32 (C, {tensor.shape[1]}, {tensor.shape[2]})"
            )
        try:
            return ProbMap(arr)
        except (ValueError, ShapeError) as exc:
            raise SegmenterIoError(f"prob tensor is not a probability map: {exc}") from exc

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        if proc.stdin:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


SegmenterHandle = Union[OracleSegmenter, ExternalBridgeClient]

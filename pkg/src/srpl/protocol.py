"""Wire protocol for out-of-process segmenters and predictors.

Line-delimited JSON over the bridge process's stdin/stdout; tensors travel
by file path in SRT format. On startup the bridge prints a handshake line
``{"proto": "srpl-seg/1"}``; afterwards each request gets exactly one
response carrying the same id.

Request::

    {"id": 1, "op": "segment", "image": "<path to f32 (3,H,W) SRT>",
     "box": [xmin, ymin, xmax, ymax]}
    {"id": 2, "op": "predict", "image": "<path to f32 (1,H,W) or (3,H,W) SRT>"}

Response::

    {"id": 1, "ok": true, "mask": "<path to u8 (H,W) SRT>"}
    {"id": 2, "ok": true, "prob": "<path to f32 (C,H,W) SRT>"}
    {"id": n, "ok": false, "error": "<message>"}

Box coordinates are inclusive on both ends; x is the column index.
"""

from __future__ import annotations

import json

__all__ = [
    "PROTO_NAME",
    "handshake_line",
    "parse_handshake",
    "parse_response",
    "validate_request",
    "ProtocolViolation",
]

PROTO_NAME = "srpl-seg/1"


class ProtocolViolation(ValueError):
    """A wire message does not conform to the protocol."""


def handshake_line() -> str:
    return json.dumps({"proto": PROTO_NAME})


def parse_handshake(line: str) -> None:
    """Validate the bridge's startup line; raises ProtocolViolation."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"handshake is not JSON: {line!r}") from exc
    if not isinstance(doc, dict) or doc.get("proto") != PROTO_NAME:
        raise ProtocolViolation(f"unexpected handshake {line!r}")


def parse_response(line: str, expect_id: int) -> dict:
    """Validate a response envelope and its id; raises ProtocolViolation."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"response is not JSON: {line!r}") from exc
    if not isinstance(doc, dict):
        raise ProtocolViolation(f"response is not an object: {line!r}")
    if doc.get("id") != expect_id:
        raise ProtocolViolation(
            f"response id {doc.get('id')!r} does not match request id {expect_id}"
        )
    if "ok" not in doc or not isinstance(doc["ok"], bool):
        raise ProtocolViolation(f"response missing boolean 'ok': {line!r}")
    return doc


def validate_request(doc) -> None:
    """Check a request envelope against the protocol; raises ProtocolViolation.

    Shared by the stub bridge and the protocol-conformance tests, so both
    sides of the wire agree on what a well-formed request is.
    """
    if not isinstance(doc, dict):
        raise ProtocolViolation("request is not a JSON object")
    if not isinstance(doc.get("id"), int):
        raise ProtocolViolation("request id must be an integer")
    op = doc.get("op")
    if op not in ("segment", "predict"):
        raise ProtocolViolation(f"unknown op {op!r}")
    if not isinstance(doc.get("image"), str):
        raise ProtocolViolation("request must carry an 'image' path")
    if op == "segment":
        box = doc.get("box")
        if not (
            isinstance(box, list)
            and len(box) == 4
            and all(isinstance(v, int) and not isinstance(v, bool) for v in box)
        ):
            raise ProtocolViolation("segment request needs box [xmin, ymin, xmax, ymax]")
        if box[0] > box[2] or box[1] > box[3] or min(box) < 0:
            raise ProtocolViolation(f"box is empty or negative: {box}")

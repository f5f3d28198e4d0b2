"""Frame protocol shared by the session server and its clients.

Every frame is a 4-byte little-endian unsigned length followed by the
payload. Control payloads are UTF-8 JSON objects; a solve result is
followed by one binary payload holding the vertex positions as a 4-byte
little-endian unsigned count n and then 3n little-endian 32-bit floats
(x, y, z interleaved).
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAX_FRAME = 1 << 28  # 256 MB guards against garbage lengths


def encode_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise ValueError("frame too large")
    return struct.pack("<I", len(payload)) + payload


def encode_control(message: dict) -> bytes:
    return encode_frame(json.dumps(message, separators=(",", ":")).encode("utf-8"))


def decode_control(payload: bytes) -> dict:
    msg = json.loads(payload.decode("utf-8"))
    if not isinstance(msg, dict):
        raise ValueError("control frame must be a JSON object")
    return msg


def encode_positions(vertices: np.ndarray) -> bytes:
    v = np.ascontiguousarray(vertices, dtype="<f4")
    if v.ndim != 2 or v.shape[1] != 3:
        raise ValueError("positions must be (n, 3)")
    return encode_frame(struct.pack("<I", len(v)) + v.tobytes())


def decode_positions(payload: bytes) -> np.ndarray:
    (n,) = struct.unpack_from("<I", payload, 0)
    if len(payload) != 4 + 12 * n:
        raise ValueError(f"positions frame length mismatch (n={n})")
    return np.frombuffer(payload, dtype="<f4", offset=4).reshape(n, 3).copy()


def read_frame_blocking(sock) -> bytes:
    """Read one frame from a blocking socket; raises ConnectionError at EOF."""
    header = _read_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if length > MAX_FRAME:
        raise ValueError("oversized frame announced")
    return _read_exact(sock, length)


def _read_exact(sock, count: int) -> bytes:
    buf = bytearray()
    while len(buf) < count:
        chunk = sock.recv(count - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)

"""ORTC container: magic, length-prefixed JSON header, raw f32 payloads.

Layout::

    b"ORTC0001"                 8 bytes (4-byte tag + 4-digit version)
    header_len                  u32 little-endian
    header                      UTF-8 JSON, sorted keys, compact separators
    video payload               F * grid_h * grid_w * dim  little-endian f32
    audio payload               N * dim                    little-endian f32
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .config import HyperParams
from .errors import (BadMagicError, ConfigError, ContainerError, HeaderError,
                     InvariantViolationError, StructuralError, TruncatedPayloadError,
                     VersionMismatchError)
from .streams import AudioStream, VideoStream, check_pair

MAGIC_TAG = b"ORTC"
VERSION = b"0001"
_LEN = struct.Struct("<I")
_F32 = np.dtype("<f4")
_REQUIRED = ("dim", "num_frames", "grid_h", "grid_w", "num_audio_tokens",
             "frame_bucket", "token_bucket", "hyperparams", "ground_truth_boundaries")


def encode(video: VideoStream, audio: AudioStream, params: HyperParams | None = None,
           ground_truth: dict[str, Any] | None = None) -> bytes:
    check_pair(video, audio)
    header = {
        "dim": video.dim,
        "num_frames": video.num_frames,
        "grid_h": video.grid_h,
        "grid_w": video.grid_w,
        "num_audio_tokens": audio.num_tokens,
        "frame_bucket": [int(b) for b in video.frame_bucket],
        "token_bucket": [int(b) for b in audio.token_bucket],
        "hyperparams": params.to_dict() if params is not None else None,
        "ground_truth_boundaries": ground_truth,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([
        MAGIC_TAG + VERSION,
        _LEN.pack(len(blob)),
        blob,
        video.tokens.astype(_F32, copy=False).tobytes(),
        audio.tokens.astype(_F32, copy=False).tobytes(),
    ])


def save_container(video: VideoStream, audio: AudioStream, params: HyperParams | None,
                   path, ground_truth: dict[str, Any] | None = None) -> None:
    data = encode(video, audio, params, ground_truth)
    Path(path).write_bytes(data)


def decode(data: bytes) -> tuple[VideoStream, AudioStream, HyperParams | None, dict | None]:
    if len(data) < 8 or data[:4] != MAGIC_TAG:
        raise BadMagicError(f"magic: expected {MAGIC_TAG!r}, got {bytes(data[:4])!r}")
    if data[4:8] != VERSION:
        raise VersionMismatchError(
            f"version: expected {VERSION.decode()}, got {bytes(data[4:8])!r}")
    if len(data) < 12:
        raise TruncatedPayloadError("header_len: file ends before the header length")
    (hlen,) = _LEN.unpack_from(data, 8)
    body = 12 + hlen
    if len(data) < body:
        raise TruncatedPayloadError(f"header: declared {hlen} bytes, {len(data) - 12} present")
    try:
        header = json.loads(data[12:body].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header: not valid UTF-8 JSON ({exc})") from None
    if not isinstance(header, dict):
        raise HeaderError("header: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in header]
    if missing:
        raise HeaderError(f"header: missing fields {missing}")

    dims = {}
    for key in ("dim", "num_frames", "grid_h", "grid_w", "num_audio_tokens"):
        value = header[key]
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise InvariantViolationError(key, f"must be a non-negative integer, got {value!r}")
        dims[key] = value
    for key in ("dim", "grid_h", "grid_w"):
        if dims[key] < 1:
            raise InvariantViolationError(key, "must be >= 1")

    d = dims["dim"]
    n_video = dims["num_frames"] * dims["grid_h"] * dims["grid_w"] * d
    n_audio = dims["num_audio_tokens"] * d
    expected = body + 4 * (n_video + n_audio)
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"payload: header declares {expected - body} bytes, {len(data) - body} present")
    if len(data) > expected:
        raise ContainerError(f"payload: {len(data) - expected} trailing bytes after audio section")

    video_vals = np.frombuffer(data, dtype=_F32, count=n_video, offset=body)
    audio_vals = np.frombuffer(data, dtype=_F32, count=n_audio, offset=body + 4 * n_video)

    for key, rows in (("frame_bucket", dims["num_frames"]),
                      ("token_bucket", dims["num_audio_tokens"])):
        seq = header[key]
        if not isinstance(seq, list) or len(seq) != rows:
            raise InvariantViolationError(key, f"expected a list of {rows} integers")
        if any(isinstance(b, bool) or not isinstance(b, int) for b in seq):
            raise InvariantViolationError(key, "bucket ids must be integers")

    try:
        video = VideoStream(
            grid_h=dims["grid_h"], grid_w=dims["grid_w"],
            tokens=video_vals.reshape(-1, d),
            frame_bucket=np.asarray(header["frame_bucket"], dtype=np.int64))
    except StructuralError as exc:
        raise InvariantViolationError(_field_of(exc, "video tokens"), str(exc)) from None
    try:
        audio = AudioStream(tokens=audio_vals.reshape(-1, d),
                            token_bucket=np.asarray(header["token_bucket"], dtype=np.int64))
    except StructuralError as exc:
        raise InvariantViolationError(_field_of(exc, "audio tokens"), str(exc)) from None
    try:
        check_pair(video, audio)
    except StructuralError as exc:
        raise InvariantViolationError("token_bucket", str(exc)) from None

    params = None
    if header["hyperparams"] is not None:
        try:
            params = HyperParams.from_dict(header["hyperparams"])
        except (ConfigError, TypeError) as exc:
            raise InvariantViolationError("hyperparams", str(exc)) from None
    return video, audio, params, header["ground_truth_boundaries"]


def _field_of(exc: StructuralError, default: str) -> str:
    head = str(exc).split(":", 1)[0]
    return head if head in ("frame_bucket", "token_bucket", "grid_h/grid_w") else default


def load_container(path) -> tuple[VideoStream, AudioStream, HyperParams | None]:
    video, audio, params, _ = load_container_full(path)
    return video, audio, params


def load_container_full(path):
    """Like :func:`load_container` but also returns the ground-truth sidecar."""
    return decode(Path(path).read_bytes())

"""Embedding streams and native bucket bookkeeping.

Embeddings are plain ``float32`` arrays of shape ``(rows, dim)``. The stream
classes validate on construction and freeze their arrays, so instances can be
shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


def as_embeddings(values, dim: int | None = None, *, field: str = "tokens") -> np.ndarray:
    """Coerce to a read-only C-contiguous float32 matrix, checking finiteness."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim == 1 and dim is not None:
        if arr.size % dim:
            raise StructuralError(f"{field}: length {arr.size} is not a multiple of dim={dim}")
        arr = arr.reshape(-1, dim)
    if arr.ndim != 2:
        raise StructuralError(f"{field}: expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise StructuralError(f"{field}: dim must be >= 1")
    if dim is not None and arr.shape[1] != dim:
        raise StructuralError(f"{field}: dim {arr.shape[1]} != expected {dim}")
    if not np.isfinite(arr).all():
        raise StructuralError(f"{field}: contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def check_buckets(bucket, *, field: str) -> np.ndarray:
    """Buckets must start at 0 and step by 0 or 1 (monotone, contiguous)."""
    arr = np.asarray(bucket)
    if arr.ndim != 1:
        raise StructuralError(f"{field}: must be one-dimensional")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise StructuralError(f"{field}: bucket ids must be integers")
    arr = arr.astype(np.int64)
    if arr.size:
        if arr[0] != 0:
            raise StructuralError(f"{field}: first bucket id must be 0, got {arr[0]}")
        steps = np.diff(arr)
        if (steps < 0).any():
            raise StructuralError(f"{field}: bucket ids are not monotone non-decreasing")
        if (steps > 1).any():
            raise StructuralError(f"{field}: bucket ids skip a value (coverage not contiguous)")
    arr.setflags(write=False)
    return arr


def num_buckets(bucket: np.ndarray) -> int:
    return int(bucket[-1]) + 1 if bucket.size else 0


@dataclass(frozen=True, eq=False)
class VideoStream:
    grid_h: int
    grid_w: int
    tokens: np.ndarray
    frame_bucket: np.ndarray

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1:
            raise StructuralError("grid_h/grid_w: must be >= 1")
        object.__setattr__(self, "tokens", as_embeddings(self.tokens))
        object.__setattr__(self, "frame_bucket",
                           check_buckets(self.frame_bucket, field="frame_bucket"))
        if self.tokens.shape[0] != self.num_frames * self.patches_per_frame:
            raise StructuralError(
                f"tokens: {self.tokens.shape[0]} rows != num_frames*grid_h*grid_w "
                f"({self.num_frames}*{self.grid_h}*{self.grid_w})")

    @property
    def num_frames(self) -> int:
        return int(self.frame_bucket.size)

    @property
    def patches_per_frame(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def num_buckets(self) -> int:
        return num_buckets(self.frame_bucket)

    def frames(self, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Frames ``lo:hi`` (0-based, half-open) as ``(n, grid_h, grid_w, dim)``."""
        hi = self.num_frames if hi is None else hi
        p = self.patches_per_frame
        return self.tokens[lo * p:hi * p].reshape(hi - lo, self.grid_h, self.grid_w, self.dim)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VideoStream):
            return NotImplemented
        return (self.grid_h == other.grid_h and self.grid_w == other.grid_w
                and np.array_equal(self.frame_bucket, other.frame_bucket)
                and self.tokens.shape == other.tokens.shape
                and np.array_equal(self.tokens, other.tokens))


@dataclass(frozen=True, eq=False)
class AudioStream:
    tokens: np.ndarray
    token_bucket: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", as_embeddings(self.tokens))
        object.__setattr__(self, "token_bucket",
                           check_buckets(self.token_bucket, field="token_bucket"))
        if self.tokens.shape[0] != self.token_bucket.size:
            raise StructuralError(
                f"tokens: {self.tokens.shape[0]} rows != len(token_bucket)={self.token_bucket.size}")

    @property
    def num_tokens(self) -> int:
        return int(self.token_bucket.size)

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def num_buckets(self) -> int:
        return num_buckets(self.token_bucket)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AudioStream):
            return NotImplemented
        return (np.array_equal(self.token_bucket, other.token_bucket)
                and self.tokens.shape == other.tokens.shape
                and np.array_equal(self.tokens, other.tokens))


def check_pair(video: VideoStream, audio: AudioStream) -> None:
    if video.dim != audio.dim:
        raise StructuralError(f"dim mismatch: video {video.dim} vs audio {audio.dim}")
    if video.num_buckets != audio.num_buckets:
        raise StructuralError(
            f"bucket count mismatch: frame_bucket has K={video.num_buckets}, "
            f"token_bucket has K={audio.num_buckets}")


def uniform_buckets(length: int, k: int) -> np.ndarray:
    """Fixed-duration partition of ``length`` positions into ``k`` buckets."""
    return (np.arange(length, dtype=np.int64) * k) // length


def bucket_sizes(bucket: np.ndarray) -> np.ndarray:
    return np.bincount(bucket, minlength=num_buckets(bucket)) if bucket.size else np.zeros(0, np.int64)

"""Frame-audio correspondence field with O(1) block sums."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .streams import AudioStream, VideoStream, check_pair

EPS = 1e-12


def cosine(u, v) -> float:
    """Cosine similarity; 0.0 when either norm is at most ``EPS``."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise StructuralError(f"dimension mismatch: {u.size} vs {v.size}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu <= EPS or nv <= EPS:
        return 0.0
    return float(min(1.0, max(-1.0, float(u @ v) / (nu * nv))))


def unit_rows(x) -> np.ndarray:
    """Row-normalise in float64; rows with norm <= EPS become zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms > EPS, norms, 1.0)
    return np.where(norms > EPS, x / safe, 0.0)


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosines between rows of ``a`` and rows of ``b``, clamped."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise StructuralError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return np.clip(unit_rows(a) @ unit_rows(b).T, -1.0, 1.0)


def frame_embeddings(video: VideoStream) -> np.ndarray:
    """Mean patch token per frame, ``(F, d)`` float64."""
    if video.num_frames == 0:
        return np.zeros((0, video.dim))
    return video.frames().astype(np.float64).mean(axis=(1, 2))


def similarity_matrix(frames, audio: AudioStream) -> np.ndarray:
    return cosine_matrix(frames, audio.tokens)


def neighborhood(k: int, num_buckets: int, mode: str = "literal") -> set[int]:
    """Audio buckets visible from video bucket ``k``.

    Interior buckets see ``{k-1, k, k+1}``. At the two ends ``literal`` keeps
    only ``{k}``; ``one_sided`` keeps the single in-range neighbour as well.
    """
    if k in (0, num_buckets - 1):
        if mode == "literal":
            return {k}
        return {b for b in (k - 1, k, k + 1) if 0 <= b < num_buckets}
    return {k - 1, k, k + 1}


def neighborhood_mask(video: VideoStream, audio: AudioStream, mode: str = "literal") -> np.ndarray:
    if video.num_buckets != audio.num_buckets:
        raise StructuralError(
            f"bucket count mismatch: video K={video.num_buckets}, audio K={audio.num_buckets}")
    K = video.num_buckets
    allowed = np.zeros((K, K), dtype=bool)
    for k in range(K):
        allowed[k, sorted(neighborhood(k, K, mode))] = True
    return allowed[video.frame_bucket][:, audio.token_bucket]


def _prefix(x: np.ndarray) -> np.ndarray:
    out = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    out[1:, 1:] = np.cumsum(np.cumsum(x.astype(np.float64), axis=0), axis=1)
    return out


@dataclass(frozen=True, eq=False)
class CorrespondenceField:
    sim: np.ndarray
    mask: np.ndarray
    masked: np.ndarray
    prefix_masked: np.ndarray
    prefix_mask: np.ndarray

    @classmethod
    def from_arrays(cls, sim, mask) -> "CorrespondenceField":
        sim = np.asarray(sim, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if sim.shape != mask.shape:
            raise StructuralError(f"sim {sim.shape} and mask {mask.shape} differ in shape")
        masked = mask * sim
        fld = cls(sim, mask, masked, _prefix(masked), _prefix(mask))
        for arr in (fld.sim, fld.mask, fld.masked, fld.prefix_masked, fld.prefix_mask):
            arr.setflags(write=False)
        return fld

    @property
    def num_frames(self) -> int:
        return self.sim.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.sim.shape[1]

    def block_sums(self, i, u, j, q):
        """Sum of S~ and of M over frames ``i:u`` and tokens ``j:q`` (0-based, half-open).

        Works elementwise on broadcastable index arrays. The operation order is
        fixed so scalar and vectorised callers get bit-identical results.
        """
        pm, pc = self.prefix_masked, self.prefix_mask
        s = pm[u, q] - pm[i, q] - pm[u, j] + pm[i, j]
        c = pc[u, q] - pc[i, q] - pc[u, j] + pc[i, j]
        return s, c


def build_field(video: VideoStream, audio: AudioStream, mode: str = "literal") -> CorrespondenceField:
    check_pair(video, audio)
    sim = similarity_matrix(frame_embeddings(video), audio)
    return CorrespondenceField.from_arrays(sim, neighborhood_mask(video, audio, mode))


def export_field_csv(field: CorrespondenceField, path, which: str = "masked") -> None:
    """Write S, M or S~ as CSV: one row per frame, one column per audio token."""
    arrays = {"sim": field.sim, "mask": field.mask.astype(np.float64), "masked": field.masked}
    if which not in arrays:
        raise ValueError(f"unknown matrix {which!r}; choose from {sorted(arrays)}")
    np.savetxt(path, arrays[which], fmt="%.6f", delimiter=",")

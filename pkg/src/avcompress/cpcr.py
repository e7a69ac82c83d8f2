"""Joint video/audio chunk refinement by constrained dynamic programming.

A chunk is a frame interval paired with an audio interval. The objective is

    sum over chunks of phi(chunk) - lambda_c * (number of chunks)

where phi is the mean masked similarity over the chunk's valid pairs. Ties in
the objective go to fewer chunks, then to the lexicographically smallest
sequence of chunk end points ``(frame_end, token_end)``.

Scores are accumulated as ``(prefix + phi) - lambda_c`` chunk by chunk in
every code path, so the DP and the brute-force oracle agree bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Iterator, Sequence

import numpy as np

from .config import HyperParams
from .correspondence import CorrespondenceField
from .errors import (BandInfeasibleError, ConfigError, InfeasibleChunkingError,
                     StructuralError)
from .streams import AudioStream, VideoStream

NEG_INF = float("-inf")
BRUTE_MAX_FRAMES = 12
BRUTE_MAX_TOKENS = 40


@dataclass(frozen=True)
class Chunk:
    """Frame interval ``[f_lo, f_hi]`` and audio interval ``[t_lo, t_hi]``, 1-based inclusive."""

    f_lo: int
    f_hi: int
    t_lo: int
    t_hi: int
    phi: float = math.nan

    @property
    def num_frames(self) -> int:
        return self.f_hi - self.f_lo + 1

    @property
    def num_tokens(self) -> int:
        return self.t_hi - self.t_lo + 1

    @property
    def frame_slice(self) -> slice:
        return slice(self.f_lo - 1, self.f_hi)

    @property
    def token_slice(self) -> slice:
        return slice(self.t_lo - 1, self.t_hi)


@dataclass(frozen=True)
class RefinedChunking:
    chunks: tuple[Chunk, ...]
    score: float
    lambda_c: float = math.nan
    banded: bool = False
    band_width: float | None = None

    @property
    def ends(self) -> tuple[tuple[int, int], ...]:
        return tuple((c.f_hi, c.t_hi) for c in self.chunks)

    def video_boundaries(self) -> list[int]:
        """Interior frame boundaries as 0-based start positions of chunks 2..G."""
        return [c.f_hi for c in self.chunks[:-1]]

    def audio_boundaries(self) -> list[int]:
        return [c.t_hi for c in self.chunks[:-1]]

    def to_dict(self) -> dict:
        return {
            "chunks": [{"f_lo": c.f_lo, "f_hi": c.f_hi, "t_lo": c.t_lo, "t_hi": c.t_hi,
                        "phi": _finite_or_none(c.phi)} for c in self.chunks],
            "score": _finite_or_none(self.score),
            "lambda_c": self.lambda_c,
            "banded": self.banded,
            "band_width": self.band_width,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def block_score(field: CorrespondenceField, i: int, u: int, j: int, q: int) -> float:
    """Mean of S~ over frames ``i+1..u`` and tokens ``j+1..q``; -inf when no pair is valid."""
    F, N = field.num_frames, field.num_tokens
    if not (0 <= i < u <= F and 0 <= j < q <= N):
        raise IndexError(f"block ({i}, {u}, {j}, {q}) out of range for a {F}x{N} field")
    s, c = field.block_sums(i, u, j, q)
    return NEG_INF if c == 0 else float(s / c)


def _phi_array(field: CorrespondenceField, i, u, j, q) -> np.ndarray:
    s, c = field.block_sums(i, u, j, q)
    out = np.full(np.broadcast(s, c).shape, NEG_INF)
    np.divide(s, c, out=out, where=c > 0)
    return out


def chunk_counts(length: int, lo: int, hi: int) -> range:
    """Piece counts m for which ``length`` splits into m pieces of size in [lo, hi]."""
    if length == 0:
        return range(0, 1)
    return range(-(-length // hi), length // lo + 1)


def feasible_counts(F: int, N: int, params: HyperParams) -> list[int]:
    mv = chunk_counts(F, params.sv_min, params.sv_max)
    ma = chunk_counts(N, params.sa_min, params.sa_max)
    return [m for m in mv if m in ma]


def check_feasible(F: int, N: int, params: HyperParams) -> None:
    if not feasible_counts(F, N, params):
        raise InfeasibleChunkingError(
            f"no joint segmentation of F={F} frames and N={N} audio tokens with frame "
            f"chunks in [{params.sv_min}, {params.sv_max}] and audio chunks in "
            f"[{params.sa_min}, {params.sa_max}]")


def band_width(F: int, N: int, params: HyperParams) -> float:
    return max(float(params.dp_min_window), params.dp_band_ratio * (N / F) * params.sv_max)


def admissible_mask(F: int, N: int, params: HyperParams) -> np.ndarray:
    """``(F+1, N+1)`` states within the diagonal band around ``q = u * N / F``."""
    if F == 0:
        return np.ones((1, N + 1), dtype=bool)
    u = np.arange(F + 1)[:, None]
    q = np.arange(N + 1)[None, :]
    return np.abs(q - u * (N / F)) <= band_width(F, N, params)


@dataclass(eq=False)
class DpTable:
    best: np.ndarray
    reachable: np.ndarray
    back_i: np.ndarray
    back_j: np.ndarray
    nchunks: np.ndarray
    admissible: np.ndarray
    _paths: dict = dc_field(default_factory=dict, repr=False)

    def path(self, u: int, q: int) -> tuple[tuple[int, int], ...]:
        """Chunk end points from (0, 0) to ``(u, q)``, excluding the origin."""
        key = (u, q)
        if key in self._paths:
            return self._paths[key]
        steps = []
        while (u, q) != (0, 0):
            steps.append((u, q))
            u, q = int(self.back_i[u, q]), int(self.back_j[u, q])
            if u < 0:
                raise StructuralError("backpointer chain does not reach the origin")
        out = tuple(reversed(steps))
        self._paths[key] = out
        return out


def build_dp_table(field: CorrespondenceField, params: HyperParams, banded: bool = True) -> DpTable:
    F, N = field.num_frames, field.num_tokens
    lam = float(params.lambda_c)
    best = np.full((F + 1, N + 1), NEG_INF)
    reachable = np.zeros((F + 1, N + 1), dtype=bool)
    back_i = np.full((F + 1, N + 1), -1, dtype=np.int64)
    back_j = np.full((F + 1, N + 1), -1, dtype=np.int64)
    nchunks = np.zeros((F + 1, N + 1), dtype=np.int64)
    admissible = admissible_mask(F, N, params) if banded else np.ones((F + 1, N + 1), dtype=bool)
    best[0, 0] = 0.0
    reachable[0, 0] = True
    table = DpTable(best, reachable, back_i, back_j, nchunks, admissible)

    Ls = np.arange(params.sa_min, params.sa_max + 1)
    qs = np.arange(N + 1)
    big = np.iinfo(np.int64).max
    for u in range(1, F + 1):
        i_hi = u - params.sv_min
        if i_hi < 0:
            continue
        Is = np.arange(max(0, u - params.sv_max), i_hi + 1)
        I = np.broadcast_to(Is[:, None, None], (Is.size, Ls.size, N + 1))
        J = np.broadcast_to(qs[None, None, :] - Ls[None, :, None], I.shape)
        valid = J >= 0
        Jc = np.where(valid, J, 0)
        Q = np.broadcast_to(qs, I.shape)

        phi = _phi_array(field, I, u, Jc, Q)
        reach = valid & reachable[I, Jc] & admissible[u][None, None, :]
        cand = (best[I, Jc] + phi) - lam
        nch = nchunks[I, Jc] + 1

        cand = cand.reshape(-1, N + 1)
        reach = reach.reshape(-1, N + 1)
        nch = nch.reshape(-1, N + 1)
        pred_i = I.reshape(-1, N + 1)
        pred_j = Jc.reshape(-1, N + 1)

        any_reach = reach.any(axis=0)
        top = np.where(reach, cand, NEG_INF).max(axis=0)
        tie = reach & (cand == top)
        fewest = np.where(tie, nch, big).min(axis=0)
        tie &= nch == fewest
        ntie = tie.sum(axis=0)
        first = tie.argmax(axis=0)

        pick = first.copy()
        for q in np.flatnonzero(any_reach & (ntie > 1)):
            rows = np.flatnonzero(tie[:, q])
            pick[q] = min(rows, key=lambda r: table.path(int(pred_i[r, q]), int(pred_j[r, q])))
        cols = np.flatnonzero(any_reach)
        rows = pick[cols]
        best[u, cols] = cand[rows, cols]
        reachable[u, cols] = True
        back_i[u, cols] = pred_i[rows, cols]
        back_j[u, cols] = pred_j[rows, cols]
        nchunks[u, cols] = nch[rows, cols]
    return table


def chunking_from_ends(field: CorrespondenceField, ends: Sequence[tuple[int, int]],
                       lambda_c: float, **meta) -> RefinedChunking:
    chunks, total, prev = [], 0.0, (0, 0)
    for u, q in ends:
        i, j = prev
        phi = block_score(field, i, u, j, q)
        total = (total + phi) - lambda_c
        chunks.append(Chunk(i + 1, u, j + 1, q, phi))
        prev = (u, q)
    return RefinedChunking(tuple(chunks), total, lambda_c=lambda_c, **meta)


def refine_chunks_dp(field: CorrespondenceField, params: HyperParams,
                     banded: bool = True) -> RefinedChunking:
    F, N = field.num_frames, field.num_tokens
    check_feasible(F, N, params)
    bw = band_width(F, N, params) if (banded and F) else None
    if F == 0:
        return RefinedChunking((), 0.0, lambda_c=params.lambda_c, banded=banded, band_width=bw)
    table = build_dp_table(field, params, banded)
    if not table.reachable[F, N]:
        raise BandInfeasibleError(
            f"the DP band (ratio B={params.dp_band_ratio}, window W={params.dp_min_window}, "
            f"width {bw:.3f}) excludes every feasible segmentation of F={F}, N={N}; "
            f"increase dp_band_ratio or dp_min_window, or run unbanded")
    out = chunking_from_ends(field, table.path(F, N), params.lambda_c, banded=banded, band_width=bw)
    if out.score != table.best[F, N] and not (math.isinf(out.score) and math.isinf(table.best[F, N])):
        raise StructuralError("traceback score differs from the DP table")
    return out


def enumerate_segmentations(F: int, N: int, params: HyperParams) -> Iterator[tuple[tuple[int, int], ...]]:
    """Every joint segmentation as its sequence of chunk end points."""
    def walk(i: int, j: int, acc: list):
        if i == F and j == N:
            yield tuple(acc)
            return
        for a in range(params.sv_min, params.sv_max + 1):
            if i + a > F:
                break
            for b in range(params.sa_min, params.sa_max + 1):
                if j + b > N:
                    break
                acc.append((i + a, j + b))
                yield from walk(i + a, j + b, acc)
                acc.pop()

    if F == 0 and N == 0:
        yield ()
        return
    yield from walk(0, 0, [])


def refine_chunks_bruteforce(field: CorrespondenceField, params: HyperParams) -> RefinedChunking:
    """Exhaustive search; only for tiny instances."""
    F, N = field.num_frames, field.num_tokens
    if F > BRUTE_MAX_FRAMES or N > BRUTE_MAX_TOKENS:
        raise ConfigError(
            f"brute force limited to F <= {BRUTE_MAX_FRAMES} and N <= {BRUTE_MAX_TOKENS}, "
            f"got F={F}, N={N}")
    check_feasible(F, N, params)
    lam = float(params.lambda_c)
    phis: dict[tuple[int, int, int, int], float] = {}
    best_key = None
    best_ends = None
    for ends in enumerate_segmentations(F, N, params):
        total, prev = 0.0, (0, 0)
        for u, q in ends:
            key = (prev[0], u, prev[1], q)
            if key not in phis:
                phis[key] = block_score(field, *key)
            total = (total + phis[key]) - lam
            prev = (u, q)
        if best_key is None or total > best_key[0] or (
                total == best_key[0] and (len(ends), ends) < (best_key[1], best_ends)):
            best_key, best_ends = (total, len(ends)), ends
    return chunking_from_ends(field, best_ends, lam)


def validate_chunking(chunking: RefinedChunking, F: int, N: int,
                      params: HyperParams | None = None) -> None:
    """Partition (and, given params, size-bound) checks; raises StructuralError."""
    chunks = chunking.chunks
    if not chunks:
        if F or N:
            raise StructuralError("empty chunking for a non-empty field")
        return
    f_next, t_next = 1, 1
    for g, c in enumerate(chunks):
        if c.f_lo != f_next or c.t_lo != t_next:
            raise StructuralError(
                f"chunk {g} starts at (f={c.f_lo}, t={c.t_lo}), expected (f={f_next}, t={t_next})")
        if c.f_hi < c.f_lo or c.t_hi < c.t_lo:
            raise StructuralError(f"chunk {g} has an empty interval")
        if params is not None:
            if not params.sv_min <= c.num_frames <= params.sv_max:
                raise StructuralError(f"chunk {g} has {c.num_frames} frames, outside "
                                      f"[{params.sv_min}, {params.sv_max}]")
            if not params.sa_min <= c.num_tokens <= params.sa_max:
                raise StructuralError(f"chunk {g} has {c.num_tokens} audio tokens, outside "
                                      f"[{params.sa_min}, {params.sa_max}]")
        f_next, t_next = c.f_hi + 1, c.t_hi + 1
    if f_next != F + 1 or t_next != N + 1:
        raise StructuralError(
            f"chunks cover frames 1..{f_next - 1} and tokens 1..{t_next - 1}, "
            f"expected 1..{F} and 1..{N}")


def segmentation_score(chunking: RefinedChunking, field: CorrespondenceField,
                       lambda_c: float) -> float:
    validate_chunking(chunking, field.num_frames, field.num_tokens)
    total = 0.0
    for c in chunking.chunks:
        total = (total + block_score(field, c.f_lo - 1, c.f_hi, c.t_lo - 1, c.t_hi)) - lambda_c
    return total


def native_chunking(video: VideoStream, audio: AudioStream, field: CorrespondenceField,
                    lambda_c: float) -> RefinedChunking:
    """The host model's own buckets, read as a chunking."""
    K = video.num_buckets
    f_ends = np.searchsorted(video.frame_bucket, np.arange(K), side="right")
    t_ends = np.searchsorted(audio.token_bucket, np.arange(K), side="right")
    return chunking_from_ends(field, list(zip(f_ends.tolist(), t_ends.tolist())), lambda_c)

"""End-to-end run: refine chunks, compress each chunk, reassemble, report."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import HyperParams
from .correspondence import CorrespondenceField, build_field
from .cpcr import Chunk, RefinedChunking, refine_chunks_dp
from .metrics import CostModel, flops_proxy
from .saac import AudioCompressionResult, ImportanceScores, compress_audio_chunk
from .streams import AudioStream, VideoStream, check_pair
from .tsst import VideoCompressionResult, compress_video_chunk

REPORT_VERSION = 1


def thread_count() -> int:
    raw = os.environ.get("ORF_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ChunkOutcome:
    chunk: Chunk
    video: VideoCompressionResult
    audio: AudioCompressionResult


@dataclass
class CompressedStreams:
    """Surviving representatives, tagged with the refined chunk they came from."""

    video_tokens: np.ndarray
    video_chunk: np.ndarray
    audio_tokens: np.ndarray
    audio_chunk: np.ndarray

    def interleaved(self) -> tuple[np.ndarray, list[str], np.ndarray]:
        """Prefill order: chunk by chunk, video before audio within a chunk."""
        rows, kinds, chunks = [], [], []
        for g in range(int(max(self.video_chunk.max(initial=-1), self.audio_chunk.max(initial=-1))) + 1):
            v = self.video_chunk == g
            a = self.audio_chunk == g
            rows += [self.video_tokens[v], self.audio_tokens[a]]
            kinds += ["video"] * int(v.sum()) + ["audio"] * int(a.sum())
            chunks += [g] * int(v.sum() + a.sum())
        d = self.video_tokens.shape[1]
        mat = np.concatenate(rows) if rows else np.zeros((0, d), np.float32)
        return mat, kinds, np.asarray(chunks, dtype=np.int64)

    def to_streams(self) -> tuple[VideoStream, AudioStream]:
        """Pack as ORTC-compatible streams: one survivor per 1x1 'frame', bucket = chunk."""
        return (VideoStream(grid_h=1, grid_w=1, tokens=self.video_tokens, frame_bucket=self.video_chunk),
                AudioStream(tokens=self.audio_tokens, token_bucket=self.audio_chunk))


@dataclass
class CompressionReport:
    per_chunk: list[dict[str, Any]]
    overall_retained_ratio: float
    flops_proxy_ratio: float
    chunking_score: float | None
    config_digest: str
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "report_version": REPORT_VERSION,
            "per_chunk": self.per_chunk,
            "overall_retained_ratio": self.overall_retained_ratio,
            "flops_proxy_ratio": self.flops_proxy_ratio,
            "chunking_score": self.chunking_score,
            "config_digest": self.config_digest,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CompressionReport":
        if data.get("report_version") != REPORT_VERSION:
            raise ValueError(f"unsupported report_version {data.get('report_version')!r}")
        core = ("per_chunk", "overall_retained_ratio", "flops_proxy_ratio",
                "chunking_score", "config_digest")
        extra = {k: v for k, v in data.items() if k not in core and k != "report_version"}
        return cls(*(data[k] for k in core), extra=extra)


@dataclass
class PipelineResult:
    compressed: CompressedStreams
    chunking: RefinedChunking
    report: CompressionReport
    outcomes: list[ChunkOutcome]
    field: CorrespondenceField

    def __iter__(self):
        return iter((self.compressed, self.chunking, self.report))


def _compress_chunk(video: VideoStream, audio: AudioStream, chunk: Chunk, params: HyperParams,
                    scores: np.ndarray | None) -> ChunkOutcome:
    frames = video.frames(chunk.f_lo - 1, chunk.f_hi)
    vres = compress_video_chunk(frames, params)
    tokens = audio.tokens[chunk.token_slice]
    sc = ImportanceScores(scores[chunk.token_slice]) if scores is not None else None
    ares = compress_audio_chunk(tokens, sc, vres, params)
    return ChunkOutcome(chunk, vres, ares)


def _num(x: float):
    return x if math.isfinite(x) else None


def run_pipeline(video: VideoStream, audio: AudioStream, params: HyperParams | None = None,
                 *, banded: bool = True, scores=None, cost_model: CostModel | None = None,
                 threads: int | None = None) -> PipelineResult:
    """Refine chunks on the correspondence field, then compress chunk by chunk.

    ``scores`` optionally supplies one non-negative importance value per audio
    token; by default each token's L2 norm is used.
    """
    params = params or HyperParams()
    cost_model = cost_model or CostModel()
    check_pair(video, audio)
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (audio.num_tokens,):
            raise ValueError(f"expected {audio.num_tokens} importance scores, got {scores.shape}")
    fld = build_field(video, audio, params.neighborhood_mode)
    chunking = refine_chunks_dp(fld, params, banded=banded)

    threads = threads or thread_count()
    work = lambda c: _compress_chunk(video, audio, c, params, scores)  # noqa: E731
    if threads > 1 and len(chunking.chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, chunking.chunks))
    else:
        outcomes = [work(c) for c in chunking.chunks]

    d = video.dim
    v_rows, v_ids, a_rows, a_ids, per_chunk = [], [], [], [], []
    for g, out in enumerate(outcomes):
        v_rows.append(out.video.merged_reps)
        v_ids += [g] * out.video.num_survivors
        a_rows.append(out.audio.merged_reps)
        a_ids += [g] * len(out.audio.retained_index)
        c = out.chunk
        per_chunk.append({
            "chunk": g,
            "f_lo": c.f_lo, "f_hi": c.f_hi, "t_lo": c.t_lo, "t_hi": c.t_hi,
            "phi": _num(c.phi),
            "r_v": out.video.r_v,
            "r_v_pre_clamp": out.video.r_v_pre_clamp,
            "video_window": list(out.video.window),
            "m_a": out.audio.m_a,
            "R_a": out.audio.R_a,
            "audio_retained_ratio": out.audio.retained_ratio,
            "video_tokens_before": out.video.num_tokens,
            "video_tokens_after": out.video.num_survivors,
            "audio_tokens_before": c.num_tokens,
            "audio_tokens_after": len(out.audio.retained_index),
            "audio_merged": sum(len(m) for m in out.audio.merge_sets.values()),
            "audio_dropped": len(out.audio.dropped),
            "notes": out.video.notes + out.audio.notes,
        })

    before = sum(p["video_tokens_before"] + p["audio_tokens_before"] for p in per_chunk)
    after = sum(p["video_tokens_after"] + p["audio_tokens_after"] for p in per_chunk)
    compressed = CompressedStreams(
        video_tokens=np.concatenate(v_rows).astype(np.float32) if v_rows else np.zeros((0, d), np.float32),
        video_chunk=np.asarray(v_ids, dtype=np.int64),
        audio_tokens=np.concatenate(a_rows).astype(np.float32) if a_rows else np.zeros((0, d), np.float32),
        audio_chunk=np.asarray(a_ids, dtype=np.int64),
    )
    report = CompressionReport(
        per_chunk=per_chunk,
        overall_retained_ratio=after / before if before else 1.0,
        flops_proxy_ratio=flops_proxy(before, after, cost_model) if after else 0.0,
        chunking_score=_num(chunking.score),
        config_digest=params.digest(),
        extra={
            "tokens_before": before,
            "tokens_after": after,
            "num_chunks": len(per_chunk),
            "banded": banded,
            "band_width": chunking.band_width,
            "lambda_c": params.lambda_c,
            "cost_model": cost_model.to_dict(),
            "decisions": {
                "neighborhood_mode": params.neighborhood_mode,
                "alpha_modulation": params.alpha_modulation,
                "alpha": params.alpha,
                "merge_quota": "ceil(m_a * group_size)",
                "group_block": params.G,
                "importance": "external" if scores is not None else "norm",
            },
        },
    )
    return PipelineResult(compressed, chunking, report, outcomes, fld)

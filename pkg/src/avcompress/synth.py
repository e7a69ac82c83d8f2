"""Synthetic paired streams with planted cross-modal events.

Each event owns a unit latent vector. Inside an event every audio token is the
latent plus noise and every video patch is the latent scaled by a positive
spatial pattern plus noise, so with zero noise all tokens of one event are
parallel. Event boundaries sit near native bucket boundaries, displaced by up
to ``boundary_jitter`` positions independently in each modality.
"""

from __future__ import annotations

from typing import Any, NamedTuple

import numpy as np

from .config import HyperParams, ScenarioSpec
from .errors import ConfigError
from .streams import AudioStream, VideoStream, uniform_buckets


class Scenario(NamedTuple):
    video: VideoStream
    audio: AudioStream
    truth: dict[str, Any]


def _sizes_fit(length: int, k: int, lo: int, hi: int) -> bool:
    return lo <= length // k and -(-length // k) <= hi


def choose_bucket_count(num_frames: int, num_tokens: int, params: HyperParams) -> int:
    """Smallest K whose uniform buckets fit both chunk-size ranges."""
    for k in range(1, min(num_frames, num_tokens) + 1):
        if (_sizes_fit(num_frames, k, params.sv_min, params.sv_max)
                and _sizes_fit(num_tokens, k, params.sa_min, params.sa_max)):
            return k
    raise ConfigError(
        f"no native bucket count fits {num_frames} frames into "
        f"[sv_min, sv_max]=[{params.sv_min}, {params.sv_max}] and {num_tokens} audio tokens "
        f"into [sa_min, sa_max]=[{params.sa_min}, {params.sa_max}]")


def bucket_starts(length: int, k: int) -> list[int]:
    """First position of each bucket 1..k-1 under uniform bucketing."""
    return [-(-b * length // k) for b in range(1, k)]


def _jittered(natives: list[int], length: int, jitter: int, rng: np.random.Generator) -> list[int]:
    out: list[int] = []
    offsets = rng.integers(-jitter, jitter + 1, size=len(natives)) if jitter else [0] * len(natives)
    for idx, (pos, off) in enumerate(zip(natives, offsets)):
        lo = out[-1] + 1 if out else 1
        hi = length - 1 - (len(natives) - 1 - idx)
        out.append(int(min(max(pos + int(off), lo), hi)))
    return out


def _latents(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((spec.dim, spec.num_events))
    if spec.orthogonal_latents and spec.num_events <= spec.dim:
        q, _ = np.linalg.qr(raw)
        return q.T
    return (raw / np.linalg.norm(raw, axis=0, keepdims=True)).T


def _labels(length: int, boundaries: list[int]) -> np.ndarray:
    labels = np.zeros(length, dtype=np.int64)
    for b in boundaries:
        labels[b:] += 1
    return labels


def generate_scenario(spec: ScenarioSpec, params: HyperParams | None = None) -> Scenario:
    params = params or HyperParams()
    F, N = spec.num_frames, spec.num_audio_tokens
    if spec.num_buckets is None:
        k = choose_bucket_count(F, N, params)
    else:
        k = spec.num_buckets
        if k > min(F, N) or not (_sizes_fit(F, k, params.sv_min, params.sv_max)
                                 and _sizes_fit(N, k, params.sa_min, params.sa_max)):
            raise ConfigError(
                f"num_buckets={k} does not fit {F} frames into [sv_min, sv_max]="
                f"[{params.sv_min}, {params.sv_max}] and {N} audio tokens into "
                f"[sa_min, sa_max]=[{params.sa_min}, {params.sa_max}]")
    if spec.num_events > k:
        raise ConfigError(f"num_events={spec.num_events} exceeds the native bucket count {k}")

    rng = np.random.default_rng(spec.seed)
    picks = [round(e * k / spec.num_events) for e in range(1, spec.num_events)]
    native_v, native_a = bucket_starts(F, k), bucket_starts(N, k)
    ev_native_v = [native_v[b - 1] for b in picks]
    ev_native_a = [native_a[b - 1] for b in picks]
    ev_v = _jittered(ev_native_v, F, spec.boundary_jitter, rng)
    ev_a = _jittered(ev_native_a, N, spec.boundary_jitter, rng)

    latents = _latents(spec, rng)
    frame_event = _labels(F, ev_v)
    token_event = _labels(N, ev_a)

    rows = np.arange(spec.grid_h)[:, None] / spec.grid_h
    cols = np.arange(spec.grid_w)[None, :] / spec.grid_w
    phases = rng.uniform(0, 2 * np.pi, size=spec.num_events)
    # positive per-patch gain keeps noiseless patches parallel to the latent
    gains = 1.0 + 0.5 * np.sin(2 * np.pi * (rows + cols)[None] + phases[:, None, None])

    video = latents[frame_event][:, None, None, :] * gains[frame_event][..., None]
    video = video.reshape(F * spec.grid_h * spec.grid_w, spec.dim)
    audio = latents[token_event].copy()
    if spec.noise_sigma > 0:
        video = video + spec.noise_sigma * rng.standard_normal(video.shape)
        audio = audio + spec.noise_sigma * rng.standard_normal(audio.shape)

    frame_bucket = uniform_buckets(F, k)
    token_bucket = uniform_buckets(N, k)
    truth = {
        "video": ev_v,
        "audio": ev_a,
        "native_video": native_v,
        "native_audio": native_a,
        "event_native_video": ev_native_v,
        "event_native_audio": ev_native_a,
        "frame_event": frame_event.tolist(),
        "token_event": token_event.tolist(),
        "latent_gram": np.round(latents @ latents.T, 12).tolist(),
    }
    return Scenario(
        VideoStream(grid_h=spec.grid_h, grid_w=spec.grid_w, tokens=video, frame_bucket=frame_bucket),
        AudioStream(tokens=audio, token_bucket=token_bucket),
        truth,
    )

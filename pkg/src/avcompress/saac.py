"""Semantic-anchor audio compression with a video-referenced budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import HyperParams
from .correspondence import cosine, cosine_matrix


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def audio_budget(params: HyperParams, r_v: float) -> tuple[float, float]:
    """Audio merging ratio and retention ratio given the chunk's video retention."""
    if not 0.0 <= r_v <= 1.0:
        raise ValueError(f"r_v must lie in [0, 1], got {r_v}")
    raw = params.rho_a - params.beta * (r_v - (1 - params.rho_v))
    m_a = min(params.a_max, max(params.a_min, raw))
    return m_a, 1 - m_a


@dataclass(frozen=True)
class ImportanceScores:
    values: np.ndarray
    source: str = "external"

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or not np.isfinite(vals).all() or (vals < 0).any():
            raise ValueError("importance scores must be a finite, non-negative vector")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_norms(cls, tokens) -> "ImportanceScores":
        return cls(np.linalg.norm(np.asarray(tokens, dtype=np.float64), axis=1), "norm")


def detect_anchors(tokens, theta_anchor: float) -> list[int]:
    """Token 0 plus every token whose cosine to its predecessor drops below the threshold."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if len(tokens) == 0:
        raise ValueError("chunk has no audio tokens")
    anchors = [0]
    for t in range(1, len(tokens)):
        if cosine(tokens[t - 1], tokens[t]) < theta_anchor:
            anchors.append(t)
    return anchors


def anchor_intervals(anchors: Sequence[int], n: int) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` semantic intervals opened by each anchor."""
    ends = list(anchors[1:]) + [n]
    return [(a, e - 1) for a, e in zip(anchors, ends)]


def select_retained(n: int, scores: ImportanceScores, anchors: Sequence[int], m_a: float,
                    contextual_ratio: float) -> tuple[list[int], list[int], list[int]]:
    """Split ``range(n)`` into (dominant, contextual anchors, residual)."""
    if len(scores.values) != n:
        raise ValueError(f"{len(scores.values)} scores for {n} tokens")
    target = min(n, max(1, round_half_up((1 - m_a) * n)))
    n_ctx = min(round_half_up(contextual_ratio * n), target)
    order = sorted(range(n), key=lambda t: (-scores.values[t], t))

    dominant = set(order[:target - n_ctx])
    intervals = anchor_intervals(anchors, n)
    covered = {k for k, (a, b) in enumerate(intervals) if any(a <= t <= b for t in dominant)}
    spare = [(k in covered, a) for k, a in enumerate(anchors) if a not in dominant]
    contextual = [a for _, a in sorted(spare)[:n_ctx]]
    # too few spare anchors: hand the leftover slots to the next-best tokens
    for t in order[target - n_ctx:]:
        if len(dominant) + len(contextual) >= target:
            break
        if t not in contextual:
            dominant.add(t)
    kept = dominant | set(contextual)
    residual = [t for t in range(n) if t not in kept]
    return sorted(dominant), sorted(contextual), residual


def assign_to_anchors(tokens, residuals: Sequence[int], anchors: Sequence[int],
                      intervals: Sequence[tuple[int, int]]) -> dict[int, int]:
    """Map each residual to the most similar retained anchor of its interval.

    ``anchors`` are the retained anchors. A residual whose interval holds no
    retained anchor goes to the nearest one in time (earlier on ties).
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if not anchors:
        return {}
    pi: dict[int, int] = {}
    for t in residuals:
        a, b = next((a, b) for a, b in intervals if a <= t <= b)
        local = [h for h in anchors if a <= h <= b]
        if local:
            pi[t] = min(local, key=lambda h: (-cosine(tokens[t], tokens[h]), abs(h - t), h))
        else:
            pi[t] = min(anchors, key=lambda h: (abs(h - t), h))
    return pi


def crossmodal_scores(tokens, video_reps) -> np.ndarray:
    """Best cosine of each audio token against any retained video representative."""
    tokens = np.asarray(tokens, dtype=np.float64)
    video_reps = np.asarray(video_reps, dtype=np.float64)
    if video_reps.size == 0:
        return np.zeros(len(tokens))
    return cosine_matrix(tokens, video_reps).max(axis=1)


def crossmodal_merge_candidates(groups: dict[int, list[int]], scores: np.ndarray,
                                m_a: float, G: int) -> dict[int, list[int]]:
    """Pick each anchor group's merge set, one token per G-block per round."""
    merge_sets: dict[int, list[int]] = {}
    for h, members in sorted(groups.items()):
        members = sorted(members)
        quota = min(len(members), math.ceil(m_a * len(members) - 1e-9))
        blocks = [sorted(members[k:k + G], key=lambda t: (-scores[t], t))
                  for k in range(0, len(members), G)]
        chosen: list[int] = []
        rnd = 0
        while len(chosen) < quota:
            for block in blocks:
                if rnd < len(block) and len(chosen) < quota:
                    chosen.append(block[rnd])
            rnd += 1
        merge_sets[h] = sorted(chosen)
    return merge_sets


def merge_weights(members: Sequence[int], scores: np.ndarray) -> np.ndarray:
    """Normalised relevance weights; negative relevance counts as zero."""
    rel = np.clip(np.asarray([scores[t] for t in members], dtype=np.float64), 0.0, None)
    if rel.size == 0:
        return rel
    total = rel.sum()
    return rel / total if total > 0 else np.full(rel.size, 1.0 / rel.size)


def merge_into_anchors(tokens, merge_sets: dict[int, list[int]],
                       scores: np.ndarray) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Similarity-weighted anchor update; returns (merged reps, weights) keyed by anchor."""
    tokens = np.asarray(tokens, dtype=np.float64)
    reps, weights = {}, {}
    for h, members in merge_sets.items():
        w = merge_weights(members, scores)
        weights[h] = w
        if len(members) == 0:
            reps[h] = tokens[h].copy()
            continue
        reps[h] = (tokens[h] + w @ tokens[list(members)]) / (1.0 + w.sum())
    return reps, weights


@dataclass
class AudioCompressionResult:
    anchors: list[int]  # retained anchors
    detected_anchors: list[int]
    intervals: list[tuple[int, int]]
    dominant: list[int]
    contextual: list[int]
    assignment: dict[int, int]
    merge_sets: dict[int, list[int]]
    merge_weights: dict[int, np.ndarray]
    dropped: list[int]
    retained_mask: np.ndarray
    retained_index: list[int]
    merged_reps: np.ndarray
    crossmodal: np.ndarray
    m_a: float
    R_a: float
    notes: list[str] = field(default_factory=list)

    @property
    def retained_ratio(self) -> float:
        return len(self.retained_index) / len(self.retained_mask)

    def representative_of(self) -> np.ndarray:
        """Output row each token contributes to, or -1 when dropped."""
        pos = {t: k for k, t in enumerate(self.retained_index)}
        out = np.full(len(self.retained_mask), -1, dtype=np.int64)
        for t, k in pos.items():
            out[t] = k
        for h, members in self.merge_sets.items():
            for t in members:
                out[t] = pos[h]
        return out

    def trace(self) -> dict:
        return {
            "anchors": list(self.anchors),
            "detected_anchors": list(self.detected_anchors),
            "intervals": [list(iv) for iv in self.intervals],
            "assignment": {str(t): h for t, h in sorted(self.assignment.items())},
            "merge_sets": {str(h): list(m) for h, m in sorted(self.merge_sets.items())},
            "weights": {str(h): [float(x) for x in w] for h, w in sorted(self.merge_weights.items())},
            "dropped": list(self.dropped),
            "m_a": self.m_a,
            "R_a": self.R_a,
            "notes": list(self.notes),
        }


def compress_audio_chunk(tokens, scores: ImportanceScores | None, video,
                         params: HyperParams) -> AudioCompressionResult:
    """Compress one chunk's ``(n, d)`` audio tokens given the chunk's video outcome.

    ``video`` needs ``r_v`` and ``merged_reps``; a ``VideoCompressionResult``
    is the usual argument.
    """
    r_v, video_reps = video.r_v, video.merged_reps
    tokens = np.asarray(tokens, dtype=np.float64)
    n = len(tokens)
    scores = scores if scores is not None else ImportanceScores.from_norms(tokens)
    m_a, R_a = audio_budget(params, r_v)
    detected = detect_anchors(tokens, params.theta_anchor)
    intervals = anchor_intervals(detected, n)
    dominant, contextual, residual = select_retained(
        n, scores, detected, m_a, params.contextual_ratio)
    kept = sorted(set(dominant) | set(contextual))
    retained_anchors = sorted(set(detected) & set(kept))
    notes = []
    if not retained_anchors and residual:
        # no detected anchor survived selection: residuals fall back to retained tokens
        retained_anchors = kept
        notes.append("no retained anchor; residuals assigned to nearest retained tokens")
    pi = assign_to_anchors(tokens, residual, retained_anchors, intervals)
    groups: dict[int, list[int]] = {h: [] for h in retained_anchors}
    for t, h in pi.items():
        groups[h].append(t)
    cross = crossmodal_scores(tokens, video_reps)
    merge_sets = crossmodal_merge_candidates(groups, cross, m_a, params.G)
    merged, weights = merge_into_anchors(tokens, merge_sets, cross)
    merged_ids = {t for m in merge_sets.values() for t in m}
    dropped = [t for t in residual if t not in merged_ids]

    mask = np.zeros(n, dtype=bool)
    mask[kept] = True
    reps = np.stack([merged.get(t, tokens[t]) for t in kept]) if kept else np.zeros((0, tokens.shape[1]))
    return AudioCompressionResult(
        anchors=retained_anchors,
        detected_anchors=detected,
        intervals=intervals,
        dominant=dominant,
        contextual=contextual,
        assignment=pi,
        merge_sets=merge_sets,
        merge_weights=weights,
        dropped=dropped,
        retained_mask=mask,
        retained_index=kept,
        merged_reps=reps,
        crossmodal=cross,
        m_a=m_a,
        R_a=R_a,
        notes=notes,
    )

"""Hyperparameter grids over one scenario, with an optional constant-budget mode."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Mapping, Sequence

import numpy as np

from .config import HyperParams
from .errors import AVCompressError, ConfigError
from .pipeline import PipelineResult, run_pipeline, thread_count
from .streams import AudioStream, VideoStream

MAX_BISECTION_STEPS = 40
BUDGET_TOLERANCE = 0.01


class BudgetNotReachedError(AVCompressError):
    exit_code = 2

    def __init__(self, target: float, achieved: list[tuple[float, float]]):
        listing = ", ".join(f"rho_v={r:.4f}->{a:.4f}" for r, a in achieved)
        super().__init__(f"could not reach overall retained ratio {target} within "
                         f"+/-{BUDGET_TOLERANCE}; achieved: {listing}")
        self.target = target
        self.achieved = achieved


def expand_grid(grid: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cartesian product in key order of the mapping."""
    for key, values in grid.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigError(f"grid entry {key!r} must be a non-empty list")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def summarize(result: PipelineResult, overrides: dict[str, Any]) -> dict[str, Any]:
    per = result.report.per_chunk
    return {
        **{f"param.{k}": v for k, v in overrides.items()},
        "config_digest": result.report.config_digest,
        "num_chunks": len(per),
        "overall_retained_ratio": result.report.overall_retained_ratio,
        "flops_proxy_ratio": result.report.flops_proxy_ratio,
        "chunking_score": result.report.chunking_score,
        "mean_r_v": float(np.mean([p["r_v"] for p in per])),
        "mean_m_a": float(np.mean([p["m_a"] for p in per])),
        "mean_R_a": float(np.mean([p["R_a"] for p in per])),
    }


def tune_rho_v(video: VideoStream, audio: AudioStream, params: HyperParams, target: float,
               banded: bool = True) -> tuple[HyperParams, PipelineResult]:
    """Bisect ``rho_v`` until the overall retained ratio is within tolerance of ``target``.

    The overall ratio is non-decreasing in ``rho_v`` because a larger base
    video merging ratio lowers the audio merging ratio.
    """
    achieved: list[tuple[float, float]] = []

    def run(rho_v: float) -> PipelineResult:
        res = run_pipeline(video, audio, params.with_(rho_v=rho_v), banded=banded, threads=1)
        achieved.append((rho_v, res.report.overall_retained_ratio))
        return res

    lo, hi = 0.0, 1.0
    for rho in (lo, hi):
        res = run(rho)
        if abs(res.report.overall_retained_ratio - target) <= BUDGET_TOLERANCE:
            return params.with_(rho_v=rho), res
    if not achieved[0][1] <= target <= achieved[1][1]:
        raise BudgetNotReachedError(target, achieved)
    for _ in range(MAX_BISECTION_STEPS):
        mid = (lo + hi) / 2
        res = run(mid)
        ratio = res.report.overall_retained_ratio
        if abs(ratio - target) <= BUDGET_TOLERANCE:
            return params.with_(rho_v=mid), res
        if ratio < target:
            lo = mid
        else:
            hi = mid
    raise BudgetNotReachedError(target, achieved)


def sweep(video: VideoStream, audio: AudioStream, grid: Mapping[str, Sequence[Any]],
          base: HyperParams | None = None, *, constant_budget: float | None = None,
          banded: bool = True, threads: int | None = None) -> list[dict[str, Any]]:
    """One summary row per grid point, in grid order."""
    base = base or HyperParams()
    points = expand_grid(grid) if grid else [{}]

    def one(overrides: dict[str, Any]) -> dict[str, Any]:
        params = base.with_(**overrides)
        if constant_budget is None:
            return summarize(run_pipeline(video, audio, params, banded=banded, threads=1), overrides)
        tuned, res = tune_rho_v(video, audio, params, constant_budget, banded)
        row = summarize(res, overrides)
        row["tuned_rho_v"] = tuned.rho_v
        row["target_ratio"] = constant_budget
        return row

    threads = threads or thread_count()
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, points))
    return [one(p) for p in points]

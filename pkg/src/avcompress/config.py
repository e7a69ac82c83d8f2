"""Hyperparameters and scenario descriptions."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

from .errors import ConfigError

NEIGHBORHOOD_MODES = ("literal", "one_sided")


@dataclass(frozen=True)
class HyperParams:
    """All knobs of the two-stage compressor.

    Defaults are the published configuration. ``a_min``/``a_max`` bound the
    audio *merging* ratio. ``neighborhood_mode`` and ``alpha_modulation`` are
    switches for behaviour the method leaves open.
    """

    rho_a: float = 0.3
    rho_v: float = 0.6
    tau_s: float = 0.82
    tau_t: float = 0.58
    beta: float = 0.5
    lambda_c: float = 0.02
    theta_anchor: float = 0.4
    contextual_ratio: float = 0.05
    v_min: float = 0.18
    v_max: float = 0.55
    a_min: float = 0.1
    a_max: float = 0.9
    alpha: float = 0.15
    G: int = 3
    sa_min: int = 90
    sa_max: int = 140
    sv_min: int = 3
    sv_max: int = 5
    dp_band_ratio: float = 2.0
    dp_min_window: int = 48
    neighborhood_mode: str = "literal"
    alpha_modulation: bool = True

    _UNIT = (
        "rho_a", "rho_v", "tau_s", "tau_t", "beta", "theta_anchor",
        "contextual_ratio", "v_min", "v_max", "a_min", "a_max",
    )

    def __post_init__(self) -> None:
        for name in self._UNIT:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
        if not (self.lambda_c >= 0 and math.isfinite(self.lambda_c)):
            raise ConfigError(f"lambda_c must be >= 0, got {self.lambda_c!r}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be >= 0, got {self.alpha!r}")
        if not self.dp_band_ratio >= 1:
            raise ConfigError(f"dp_band_ratio must be >= 1, got {self.dp_band_ratio!r}")
        for name in ("G", "sa_min", "sa_max", "sv_min", "sv_max", "dp_min_window"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for lo, hi in (("v_min", "v_max"), ("a_min", "a_max"),
                       ("sa_min", "sa_max"), ("sv_min", "sv_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ConfigError(
                    f"{lo}={getattr(self, lo)} exceeds {hi}={getattr(self, hi)}")
        if self.neighborhood_mode not in NEIGHBORHOOD_MODES:
            raise ConfigError(
                f"neighborhood_mode must be one of {NEIGHBORHOOD_MODES}, "
                f"got {self.neighborhood_mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes: Any) -> "HyperParams":
        return replace(self, **changes)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ScenarioSpec:
    """Synthetic encoder output: latent events over a frame/audio timeline.

    ``num_buckets`` pins the native bucket count; when None the smallest
    count whose bucket sizes fit the hyperparameter chunk ranges is used.
    """

    num_frames: int = 32
    grid_h: int = 8
    grid_w: int = 8
    num_audio_tokens: int = 800
    dim: int = 64
    num_events: int = 4
    boundary_jitter: int = 2
    noise_sigma: float = 0.05
    seed: int = 0
    num_buckets: int | None = None
    orthogonal_latents: bool = True

    def __post_init__(self) -> None:
        for name in ("num_frames", "num_audio_tokens"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("grid_h", "grid_w", "dim", "num_events"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.boundary_jitter < 0:
            raise ConfigError("boundary_jitter must be >= 0")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ConfigError("noise_sigma must be a finite value >= 0")
        if self.num_buckets is not None and self.num_buckets < 1:
            raise ConfigError("num_buckets must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

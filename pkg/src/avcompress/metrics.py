"""Cost proxies: prefill FLOPs ratio and multi-turn KV-cache amortisation.

Costs are in arbitrary units. ``prefill(n) = c_lin * n + c_quad * n**2``
stands in for a transformer forward pass over ``n`` multimodal tokens; the
defaults use the per-layer ratio ``c_lin / c_quad = 6 * d_model`` for a
7B-class model (d_model = 3584).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CostModel:
    c_quad: float = 1.0
    c_lin: float = 6.0 * 3584
    preprocess_cost: float = 1.0e7
    decode_cost_per_turn: float = 5.0e7

    def __post_init__(self) -> None:
        vals = (self.c_quad, self.c_lin, self.preprocess_cost, self.decode_cost_per_turn)
        if min(vals) < 0:
            raise ConfigError("cost coefficients must be >= 0")
        if self.c_quad + self.c_lin <= 0:
            raise ConfigError("c_quad + c_lin must be > 0")

    def prefill(self, n: float) -> float:
        return self.c_lin * n + self.c_quad * n * n

    def to_dict(self) -> dict:
        return asdict(self)


def flops_proxy(n_before: int, n_after: int, model: CostModel | None = None) -> float:
    """Prefill cost after compression relative to before."""
    model = model or CostModel()
    if not 0 < n_after <= n_before:
        raise ConfigError(f"need 0 < n_after <= n_before, got {n_after} and {n_before}")
    denom = model.prefill(n_before)
    if denom == 0:
        raise ConfigError("zero prefill cost for n_before")
    return model.prefill(n_after) / denom


def kv_reuse_amortized(k: int, model: CostModel, n_after: int) -> float:
    """Per-turn cost over ``k`` turns when the compressed KV cache is reused."""
    if k < 1:
        raise ConfigError(f"turn count must be >= 1, got {k}")
    return (model.preprocess_cost + model.prefill(n_after) + k * model.decode_cost_per_turn) / k


def no_reuse_per_turn(k: int, model: CostModel, n_after: int) -> float:
    """Per-turn cost when every turn re-runs preprocessing and prefill."""
    if k < 1:
        raise ConfigError(f"turn count must be >= 1, got {k}")
    return model.preprocess_cost + model.prefill(n_after) + model.decode_cost_per_turn


def amortization_curve(ks, model: CostModel, n_after: int) -> list[dict]:
    return [{"k": k,
             "reuse": kv_reuse_amortized(k, model, n_after),
             "no_reuse": no_reuse_per_turn(k, model, n_after)} for k in ks]

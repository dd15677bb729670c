"""Rule-based rewards: format, marker, reasoning length and schema linking."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import AbstractSet

from .response import ParsedResponse
from .schema import SchemaLinkSet


class RewardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    format: float = 1.0
    marker: float = 1.0
    length: float = 1.0
    schema: float = 1.0


@dataclass(frozen=True)
class RewardConfig:
    r_tmax: float = 2.0
    p_tmax: float = 2.0
    r_cmax: float = 1.0
    p_cmax: float = 1.0
    lower_len: int = 64
    upper_len: int = 512
    weights: RewardWeights = field(default_factory=RewardWeights)
    # Reward |truth - pred| instead of |truth & pred| in the first term.
    literal_set_difference_mode: bool = False
    accept_singular_marker: bool = False

    def __post_init__(self):
        for name in ("r_tmax", "p_tmax", "r_cmax", "p_cmax"):
            if not getattr(self, name) > 0:
                raise RewardConfigError(f"{name} must be positive")
        # Table predictions must weigh more than column predictions.
        if not self.r_tmax > self.r_cmax:
            raise RewardConfigError("r_tmax must exceed r_cmax")
        if not self.p_tmax > self.p_cmax:
            raise RewardConfigError("p_tmax must exceed p_cmax")
        if not 0 < self.lower_len < self.upper_len:
            raise RewardConfigError("need 0 < lower_len < upper_len")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", RewardWeights(**self.weights))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        data = dict(data)
        if "weights" in data:
            data["weights"] = RewardWeights(**data["weights"])
        return cls(**data)


@dataclass(frozen=True)
class RewardBreakdown:
    r_f: float
    r_c: float
    r_l: float
    r_st: float
    r_sc: float
    r_s: float
    total: float
    parse_failed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def format_reward(resp: ParsedResponse) -> int:
    return 1 if resp.format_ok else 0


def marker_reward(resp: ParsedResponse) -> int:
    return int(resp.marker_table_count == 1) + int(resp.marker_columns_count == 1)


def length_reward(token_len: int, cfg: RewardConfig) -> int:
    return 1 if cfg.lower_len <= token_len < cfg.upper_len else 0


def _linking_reward(truth: AbstractSet, pred: AbstractSet, r_max: float, p_max: float, literal: bool) -> float:
    hits = len(truth - pred) if literal else len(truth & pred)
    gain = r_max / len(truth) * hits if truth else 0.0
    # No predictions means nothing wrong to penalise.
    loss = p_max / len(pred) * len(pred - truth) if pred else 0.0
    return gain - loss


def table_reward(truth: AbstractSet, pred: AbstractSet, cfg: RewardConfig) -> float:
    if not truth:
        raise ValueError("table ground truth must be non-empty")
    return _linking_reward(truth, pred, cfg.r_tmax, cfg.p_tmax, cfg.literal_set_difference_mode)


def column_reward(truth: AbstractSet, pred: AbstractSet, cfg: RewardConfig) -> float:
    return _linking_reward(truth, pred, cfg.r_cmax, cfg.p_cmax, cfg.literal_set_difference_mode)


def total_reward(resp: ParsedResponse, truth: SchemaLinkSet, cfg: RewardConfig) -> RewardBreakdown:
    r_f = format_reward(resp)
    r_c = marker_reward(resp)
    r_l = length_reward(resp.token_len, cfg)
    if resp.predicted is None:
        r_st = r_sc = 0.0
    else:
        r_st = table_reward(truth.tables, resp.predicted.tables, cfg)
        r_sc = column_reward(truth.columns, resp.predicted.columns, cfg)
    r_s = r_st + r_sc
    w = cfg.weights
    total = w.format * r_f + w.marker * r_c + w.length * r_l + w.schema * r_s
    return RewardBreakdown(
        r_f=float(r_f),
        r_c=float(r_c),
        r_l=float(r_l),
        r_st=r_st,
        r_sc=r_sc,
        r_s=r_s,
        total=total,
        parse_failed=resp.predicted is None,
    )


def max_total_reward(truth: SchemaLinkSet, cfg: RewardConfig) -> float:
    """Closed-form best total for a well-formed, in-band, exactly correct answer."""
    w = cfg.weights
    col_best = cfg.r_cmax if truth.columns else 0.0
    return w.format + 2 * w.marker + w.length + w.schema * (cfg.r_tmax + col_best)

"""Per-token dynamic decode thresholds.

The threshold for a token mixes a temporal component (its own trailing mean
confidence, or a fixed warm-up constant while history is short) with a
spatial component (the weighted confidence of its neighbors), under a mixing
weight that depends on how much of the sequence is already decoded.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .dynamics import spatial_deviance, temporal_variance
from .errors import ConfigError, StructuralError


class BoundaryMode(Enum):
    """How the spatial component treats tokens near the region edges.

    HARD_EDGES pins the component to 0 when the window reaches into the
    prompt and to 1 when it reaches past the right end. PAD_ONLY always
    computes the weighted neighborhood, padding out-of-range neighbors with
    1 on the left and 0 on the right.
    """

    HARD_EDGES = "hard-edges"
    PAD_ONLY = "pad-only"


@dataclass(frozen=True)
class ThresholdConfig:
    warmup_threshold: float = 0.95
    p_outer: float = 0.6
    p_inner: float = 0.5
    lo: float = 0.20
    hi: float = 0.80
    boundary_mode: BoundaryMode = BoundaryMode.HARD_EDGES

    def __post_init__(self):
        for name in ("warmup_threshold", "p_outer", "p_inner", "lo", "hi"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.lo < self.hi:
            raise ConfigError(f"need lo < hi, got lo={self.lo} hi={self.hi}")


def c_base(
    recent: Sequence[float],
    current: float,
    w_t: int,
    warmup_threshold: float = 0.95,
) -> float:
    """Temporal threshold component.

    Returns the warm-up constant until ``w_t`` prior samples exist; after
    that, current confidence minus its temporal variance, which equals the
    mean of the previous ``w_t`` confidences. Clamped to [0, 1].
    """
    if len(recent) < w_t:
        return warmup_threshold
    var = temporal_variance(list(recent)[-w_t:], current)
    return min(1.0, max(0.0, current - var))


def c_neighbour(
    conf: Sequence[float],
    pos: int,
    w_n: int,
    prompt_len: int,
    seq_len: int,
    boundary_mode: BoundaryMode = BoundaryMode.HARD_EDGES,
    left_bias: float = 1.0,
) -> float:
    """Spatial threshold component for a generation position."""
    if not prompt_len <= pos < seq_len:
        raise StructuralError(
            f"position {pos} outside generation region [{prompt_len}, {seq_len})"
        )
    if boundary_mode is BoundaryMode.HARD_EDGES:
        if pos - w_n < prompt_len:
            return 0.0
        if pos + w_n > seq_len - 1:
            return 1.0
    return spatial_deviance(conf, pos, w_n, left_pad=1.0, right_pad=0.0, left_bias=left_bias)


def p_schedule(decoded_fraction: float, cfg: ThresholdConfig) -> float:
    """Mixing weight by decode progress: outer value below ``lo`` or above
    ``hi``, inner value otherwise (boundaries included in the inner band)."""
    if decoded_fraction < cfg.lo or decoded_fraction > cfg.hi:
        return cfg.p_outer
    return cfg.p_inner


def dynamic_threshold(cb: float, cn: float, p: float) -> float:
    """Convex mix of the temporal and spatial components."""
    return p * cb + (1.0 - p) * cn

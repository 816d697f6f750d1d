"""Per-token trajectory statistics: temporal variance and spatial deviance.

Temporal variance measures how far a token's current confidence sits above or
below its own recent mean. Spatial deviance is an exponentially weighted
average of the neighboring positions' confidences. Summed over a run as
absolute values, the two statistics split tokens into a static / unstable /
normal taxonomy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

from .errors import ConfigError, StructuralError


class WeightScheme(Enum):
    """How neighbor weights decay with distance."""

    EXPONENTIAL_HALVING = "exponential-halving"


@dataclass(frozen=True)
class DynamicsConfig:
    """Window sizes for the temporal and spatial statistics.

    ``left_bias`` optionally over-weights the left half of the neighbor
    window before renormalizing; 1.0 keeps the window symmetric.
    """

    w_t: int = 3
    w_n: int = 3
    weight_scheme: WeightScheme = WeightScheme.EXPONENTIAL_HALVING
    left_bias: float = 1.0

    def __post_init__(self):
        if self.w_t < 1:
            raise ConfigError(f"w_t must be >= 1, got {self.w_t}")
        if self.w_n < 1:
            raise ConfigError(f"w_n must be >= 1, got {self.w_n}")
        if not self.left_bias > 0:
            raise ConfigError(f"left_bias must be > 0, got {self.left_bias}")


class TokenClassKind(Enum):
    STATIC = "static"
    UNSTABLE = "unstable"
    NORMAL = "normal"


@dataclass(frozen=True)
class TokenClass:
    """Classification of one token from its accumulated run statistics."""

    kind: TokenClassKind
    whole_variance: float
    whole_deviance: float


def temporal_variance(recent: Sequence[float], current: float, w_t: int | None = None) -> float:
    """Current confidence minus the mean of the previous window.

    ``recent`` holds the previous confidences in arrival order. When ``w_t``
    is given the window length is checked against it.
    """
    n = len(recent)
    if n == 0:
        raise StructuralError("temporal_variance needs a non-empty window")
    if w_t is not None and n != w_t:
        raise StructuralError(f"window has {n} entries, expected w_t={w_t}")
    mean = math.fsum(recent) / n
    return current - mean


@lru_cache(maxsize=None)
def neighbor_weights(w_n: int) -> tuple[float, ...]:
    """One side of the neighbor weighting, nearest first.

    Distance d gets ``2**-(d+1)`` with the final distance repeated, so each
    side totals exactly 1/2 and both sides together exactly 1. The values are
    dyadic rationals, exact in binary floating point.
    """
    if w_n < 1:
        raise ConfigError(f"w_n must be >= 1, got {w_n}")
    ws = [2.0 ** -(d + 1) for d in range(1, w_n)]
    ws.append(2.0 ** -w_n)
    return tuple(ws)


def spatial_deviance(
    conf: Sequence[float],
    pos: int,
    w_n: int,
    left_pad: float = 1.0,
    right_pad: float = 0.0,
    left_bias: float = 1.0,
) -> float:
    """Weighted average of the confidences around ``pos``, excluding ``pos``.

    Neighbors beyond the vector ends take the pad values. With the default
    symmetric weights the result is a convex combination of the inputs.
    """
    n = len(conf)
    if not 0 <= pos < n:
        raise StructuralError(f"position {pos} outside vector of length {n}")
    side = neighbor_weights(w_n)
    total = 0.0
    for d in range(1, w_n + 1):
        w = side[d - 1]
        li = pos - d
        ri = pos + d
        lc = float(conf[li]) if li >= 0 else left_pad
        rc = float(conf[ri]) if ri < n else right_pad
        total += w * left_bias * lc + w * rc
    if left_bias == 1.0:
        return total
    norm = 0.5 * left_bias + 0.5
    return total / norm


def classify_token(
    whole_variance: float,
    whole_deviance: float,
    cutoffs: tuple[float, float],
) -> TokenClass:
    """Static / unstable / normal split from a token's accumulated statistics.

    High variance plus high deviance reads unstable; low variance with high
    deviance reads static; everything else is normal.
    """
    var_hi, dev_hi = cutoffs
    if var_hi <= 0 or dev_hi <= 0:
        raise ConfigError(f"cutoffs must be positive, got {cutoffs}")
    if whole_deviance >= dev_hi:
        kind = TokenClassKind.UNSTABLE if whole_variance >= var_hi else TokenClassKind.STATIC
    else:
        kind = TokenClassKind.NORMAL
    return TokenClass(kind, whole_variance, whole_deviance)

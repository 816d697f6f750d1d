"""Near-threshold token handling: suspected-fast monitoring and
suspected-slow force decoding.

Tokens that decode barely above their threshold during the warm-in phase get
a fast label and are reverted if their content flips while monitored. Tokens
that keep missing their threshold by a small margin accumulate a slow label
and are force-decoded once the miss streak reaches the patience limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError


@dataclass(frozen=True)
class FeasibilityConfig:
    t_start: int = 10
    c_fast: float = 0.1
    c_slow: float = 0.1
    t_max: int | float = 3

    def __post_init__(self):
        if self.t_start < 0:
            raise ConfigError(f"t_start must be >= 0, got {self.t_start}")
        for name in ("c_fast", "c_slow"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not (self.t_max >= 1 or math.isinf(self.t_max)):
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")


@dataclass(frozen=True)
class FastLabel:
    """A decoded token under content monitoring."""

    labeled_at: int
    content: int


@dataclass(frozen=True)
class SlowLabel:
    """A masked token with a streak of near-miss remasks."""

    consecutive: int


class FastAction(Enum):
    KEEP = "keep"
    REMASK = "remask"
    CLEAR_LABEL = "clear-label"


class SlowAction(Enum):
    NONE = "none"
    LABELED = "labeled"
    FORCE_DECODE = "force-decode"


def maybe_label_fast(
    step: int,
    conf: float,
    tau: float,
    cfg: FeasibilityConfig,
    content: int,
) -> FastLabel | None:
    """Label a token decoded this step if it cleared its threshold by no more
    than ``c_fast`` during the first ``t_start`` steps."""
    if step >= cfg.t_start:
        return None
    margin = conf - tau
    if 0.0 <= margin <= cfg.c_fast:
        return FastLabel(labeled_at=step, content=content)
    return None


def check_fast(
    label: FastLabel,
    observed_content: int,
    step: int,
    cfg: FeasibilityConfig,
) -> FastAction:
    """Monitor a fast-labeled token: remask on content change, drop the label
    once the warm-in phase has passed with the content unchanged."""
    if observed_content != label.content:
        return FastAction.REMASK
    if step >= cfg.t_start:
        return FastAction.CLEAR_LABEL
    return FastAction.KEEP


def update_slow(
    label: SlowLabel | None,
    conf: float,
    tau: float,
    cfg: FeasibilityConfig,
) -> tuple[SlowAction, SlowLabel | None]:
    """Advance the slow-label streak for a token remasked this step.

    Within-margin misses (threshold at most ``c_slow`` above the confidence)
    extend the streak; reaching ``t_max`` fires a force decode. Any wider
    miss resets the streak.
    """
    margin = tau - conf
    if 0.0 <= margin <= cfg.c_slow:
        count = (label.consecutive if label is not None else 0) + 1
        if count >= cfg.t_max:
            return SlowAction.FORCE_DECODE, None
        return SlowAction.LABELED, SlowLabel(consecutive=count)
    return SlowAction.NONE, None

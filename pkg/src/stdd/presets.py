"""Named configuration bundles for the dynamic-threshold strategy."""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import DynamicsConfig
from .errors import ConfigError
from .feasibility import FeasibilityConfig
from .threshold import ThresholdConfig


@dataclass(frozen=True)
class StrategyPreset:
    dynamics: DynamicsConfig
    threshold: ThresholdConfig
    feasibility: FeasibilityConfig


# "default" suits generation budgets around 64-256 steps. "wt5" trades a
# wider temporal window against a narrower spatial one for long, harder
# generations. "slow005" halves the slow margin for more conservative force
# decoding of stalled tokens.
PRESETS: dict[str, StrategyPreset] = {
    "default": StrategyPreset(
        dynamics=DynamicsConfig(w_t=3, w_n=3),
        threshold=ThresholdConfig(),
        feasibility=FeasibilityConfig(),
    ),
    "wt5": StrategyPreset(
        dynamics=DynamicsConfig(w_t=5, w_n=2),
        threshold=ThresholdConfig(),
        feasibility=FeasibilityConfig(),
    ),
    "slow005": StrategyPreset(
        dynamics=DynamicsConfig(w_t=3, w_n=3),
        threshold=ThresholdConfig(),
        feasibility=FeasibilityConfig(c_slow=0.05),
    ),
}


def get_preset(name: str) -> StrategyPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None

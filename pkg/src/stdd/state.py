"""Sequence state, per-step observations, and rolling per-token confidence history.

These are the objects one scheduler loop mutates while driving a run. They are
cheap to create, owned by a single run, and share nothing across runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import temporal_variance
from .errors import ConfigError, IllegalOperationError, StructuralError

MASKED = 0
DECODED = 1


class SequenceState:
    """Mask/decode status for one sequence.

    Positions ``[0, prompt_len)`` are committed before step 0 and never
    change. Generation positions flip Masked -> Decoded on decode events and
    flip back only through an explicit reversion.
    """

    def __init__(
        self,
        prompt_len: int,
        seq_len: int,
        max_steps: int,
        prompt_tokens=None,
    ):
        if not 0 < prompt_len < seq_len:
            raise StructuralError(
                f"need 0 < prompt_len < seq_len, got prompt_len={prompt_len} seq_len={seq_len}"
            )
        if max_steps < 1:
            raise StructuralError(f"max_steps must be >= 1, got {max_steps}")
        self.prompt_len = int(prompt_len)
        self.seq_len = int(seq_len)
        self.max_steps = int(max_steps)
        self.step = 0
        self.status = np.full(seq_len, MASKED, dtype=np.int8)
        self.tokens = np.full(seq_len, -1, dtype=np.int64)
        self.decoded_at = np.full(seq_len, -1, dtype=np.int64)
        self.status[:prompt_len] = DECODED
        self.decoded_at[:prompt_len] = 0
        if prompt_tokens is not None:
            prompt_tokens = np.asarray(prompt_tokens, dtype=np.int64)
            if prompt_tokens.shape != (prompt_len,):
                raise StructuralError(
                    f"prompt_tokens must have length {prompt_len}, got {prompt_tokens.shape}"
                )
            self.tokens[:prompt_len] = prompt_tokens

    @property
    def gen_len(self) -> int:
        return self.seq_len - self.prompt_len

    def is_masked(self, pos: int) -> bool:
        return self.status[pos] == MASKED

    def masked_positions(self) -> list[int]:
        """Masked generation positions, ascending."""
        out = np.nonzero(self.status[self.prompt_len :] == MASKED)[0]
        return [int(p) + self.prompt_len for p in out]

    def decoded_fraction(self) -> float:
        """Fraction of generation positions currently decoded."""
        decoded = int(np.count_nonzero(self.status[self.prompt_len :] == DECODED))
        return decoded / self.gen_len

    def all_decoded(self) -> bool:
        return bool(np.all(self.status == DECODED))

    def commit_decode(self, pos: int, token: int) -> None:
        """Commit ``token`` at a masked generation position at the current step."""
        if pos < self.prompt_len:
            raise IllegalOperationError(f"position {pos} is inside the prompt")
        if self.status[pos] == DECODED:
            raise IllegalOperationError(f"position {pos} is already decoded")
        self.status[pos] = DECODED
        self.tokens[pos] = token
        self.decoded_at[pos] = self.step

    def revert_to_mask(self, pos: int) -> None:
        """Return a decoded generation position to the masked state."""
        if pos < self.prompt_len:
            raise IllegalOperationError(f"position {pos} is inside the prompt")
        if self.status[pos] == MASKED:
            raise IllegalOperationError(f"position {pos} is not decoded")
        self.status[pos] = MASKED
        self.tokens[pos] = -1
        self.decoded_at[pos] = -1


@dataclass
class StepObservation:
    """One denoiser step: per-position argmax token and its confidence.

    Every position carries a value each step, decoded positions included.
    """

    t: int
    token: np.ndarray
    conf: np.ndarray

    def __post_init__(self):
        self.token = np.asarray(self.token, dtype=np.int64)
        self.conf = np.asarray(self.conf, dtype=np.float64)
        if self.token.shape != self.conf.shape or self.token.ndim != 1:
            raise StructuralError(
                f"token and conf must be 1-d vectors of equal length, "
                f"got {self.token.shape} and {self.conf.shape}"
            )
        if np.any(self.conf < 0.0) or np.any(self.conf > 1.0):
            raise StructuralError("confidence values must lie in [0, 1]")

    @property
    def seq_len(self) -> int:
        return self.token.shape[0]


class ConfidenceHistory:
    """Per-position ring of recent confidences plus run-long accumulators.

    ``whole_variance`` accrues ``|current - mean(previous w_t)|`` once a
    position has seen at least ``w_t`` samples; ``whole_deviance`` accrues the
    absolute neighborhood value every step it is fed. ``whole_isolation`` is a
    derived diagnostic, the running sum of ``|conf - deviance|``; it is
    reported but never drives decisions.
    """

    def __init__(self, seq_len: int, capacity: int):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.seq_len = int(seq_len)
        self.capacity = int(capacity)
        self.windows: list[deque] = [deque(maxlen=capacity) for _ in range(seq_len)]
        self.whole_variance = np.zeros(seq_len)
        self.whole_deviance = np.zeros(seq_len)
        self.whole_isolation = np.zeros(seq_len)
        self.samples_seen = np.zeros(seq_len, dtype=np.int64)
        # Variance computed at the most recent record, NaN while warming up.
        self.last_variance = np.full(seq_len, np.nan)

    def record_observation(self, obs: StepObservation, w_t: int) -> None:
        """Fold one observation into the per-position windows.

        The variance term is computed against the window as it stood before
        this observation, so ``last_variance`` always refers to the newest
        sample versus its ``w_t`` predecessors.
        """
        if w_t < 1:
            raise ConfigError(f"w_t must be >= 1, got {w_t}")
        if obs.seq_len != self.seq_len:
            raise StructuralError(
                f"observation has length {obs.seq_len}, history has {self.seq_len}"
            )
        for pos in range(self.seq_len):
            c = float(obs.conf[pos])
            win = self.windows[pos]
            if self.samples_seen[pos] >= w_t:
                if len(win) < w_t:
                    raise StructuralError(
                        f"window capacity {self.capacity} cannot serve w_t={w_t}"
                    )
                recent = list(win)[-w_t:]
                var = temporal_variance(recent, c)
                self.whole_variance[pos] += abs(var)
                self.last_variance[pos] = var
            else:
                self.last_variance[pos] = np.nan
            win.append(c)
            self.samples_seen[pos] += 1

    def accrue_deviance(self, deviance: np.ndarray, conf: np.ndarray) -> None:
        """Add one step's |deviance| and |conf - deviance| to the accumulators."""
        deviance = np.asarray(deviance, dtype=np.float64)
        conf = np.asarray(conf, dtype=np.float64)
        if deviance.shape != (self.seq_len,) or conf.shape != (self.seq_len,):
            raise StructuralError("deviance/conf vectors must match seq_len")
        self.whole_deviance += np.abs(deviance)
        self.whole_isolation += np.abs(conf - deviance)

    def window_values(self, pos: int) -> tuple[float, ...]:
        """Snapshot of the stored window for ``pos`` in arrival order."""
        return tuple(self.windows[pos])

    def prior_samples(self, pos: int) -> int:
        """Samples recorded for ``pos`` before the most recent one."""
        return max(0, int(self.samples_seen[pos]) - 1)

"""The decode/remask loop and the strategies that drive it.

A run draws one observation per step from a confidence source, hands it to a
strategy, validates the returned decision, and applies it to the sequence
state. The loop also owns the uniform bookkeeping every strategy gets for
free: confidence history recording, deviance accrual, the progress fallback
guarantee, and the final-step flush that decodes whatever is left when the
step budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .dynamics import DynamicsConfig, spatial_deviance
from .errors import ContractViolationError, StructuralError
from .feasibility import (
    FastAction,
    FastLabel,
    FeasibilityConfig,
    SlowAction,
    SlowLabel,
    check_fast,
    maybe_label_fast,
    update_slow,
)
from .state import ConfidenceHistory, SequenceState, StepObservation
from .threshold import (
    BoundaryMode,
    ThresholdConfig,
    c_neighbour,
    dynamic_threshold,
    p_schedule,
)


@dataclass(frozen=True)
class StepDecision:
    """What a strategy wants applied this step.

    ``decode`` holds (position, token) pairs for currently masked positions;
    ``remask`` reverts currently decoded positions; ``forced`` flags the
    subset of decode that came from the slow mechanism rather than the
    threshold test; ``tau`` is a per-position threshold snapshot for logging.
    """

    decode: tuple[tuple[int, int], ...] = ()
    remask: tuple[int, ...] = ()
    forced: tuple[int, ...] = ()
    tau: tuple[tuple[int, float], ...] = ()
    fallback_pos: int | None = None


@dataclass(frozen=True)
class StepReport:
    step: int
    decision: StepDecision
    flushed: tuple[int, ...]
    decoded_fraction: float
    masked_remaining: int
    obs_token: tuple[int, ...]
    obs_conf: tuple[float, ...]


@dataclass
class RunResult:
    state: SequenceState
    reports: list[StepReport]
    history: ConfidenceHistory

    @property
    def steps_used(self) -> int:
        return len(self.reports)


class ConfidenceSource(Protocol):
    def observe(self, state: SequenceState, step: int) -> StepObservation: ...


class Strategy(Protocol):
    name: str

    def decide(
        self,
        state: SequenceState,
        obs: StepObservation,
        history: ConfidenceHistory,
    ) -> StepDecision: ...


def with_progress_fallback(
    decision: StepDecision,
    obs: StepObservation,
    masked_positions: list[int],
) -> StepDecision:
    """Decode the single highest-confidence masked position when a decision
    would otherwise change nothing. Ties break toward the lowest index."""
    if decision.decode or decision.remask or not masked_positions:
        return decision
    best = max(masked_positions, key=lambda p: (obs.conf[p], -p))
    return replace(
        decision,
        decode=((best, int(obs.token[best])),),
        fallback_pos=best,
    )


class FixedThresholdStrategy:
    """Classic remasking: decode every masked position at or above a fixed
    confidence cutoff, never remask."""

    name = "fixed"

    def __init__(self, tau: float = 0.95):
        self.tau = float(tau)

    def decide(self, state, obs, history) -> StepDecision:
        masked = state.masked_positions()
        decode = tuple(
            (pos, int(obs.token[pos])) for pos in masked if obs.conf[pos] >= self.tau
        )
        taus = tuple((pos, self.tau) for pos in masked)
        decision = StepDecision(decode=decode, tau=taus)
        return with_progress_fallback(decision, obs, masked)


class DusStrategy:
    """Dilated-group unmasking: generation positions are split into
    non-adjacent groups by index stride, one group decoded per step at its
    current argmax, confidence ignored."""

    name = "dus"

    def __init__(self, groups: int = 8):
        if groups < 1:
            raise StructuralError(f"groups must be >= 1, got {groups}")
        self.groups = int(groups)
        self._cursor = 0

    def decide(self, state, obs, history) -> StepDecision:
        g = self._cursor % self.groups
        self._cursor += 1
        masked = state.masked_positions()
        decode = tuple(
            (pos, int(obs.token[pos]))
            for pos in masked
            if (pos - state.prompt_len) % self.groups == g
        )
        decision = StepDecision(decode=decode)
        return with_progress_fallback(decision, obs, masked)


class StddStrategy:
    """Dynamic per-token thresholds plus the fast/slow feasibility machine.

    Each masked position is tested against a threshold mixed from its own
    trailing confidence mean and its neighborhood confidence. Decoded tokens
    that barely cleared their threshold early on are monitored and reverted
    if their content flips; masked tokens that keep barely missing are
    force-decoded after a fixed streak. Passing ``feasibility=None`` disables
    the labeling machine entirely.
    """

    name = "stdd"

    _DEFAULT_FEASIBILITY = FeasibilityConfig()

    def __init__(
        self,
        dynamics: DynamicsConfig | None = None,
        threshold: ThresholdConfig | None = None,
        feasibility: FeasibilityConfig | None = _DEFAULT_FEASIBILITY,
    ):
        self.dynamics = dynamics or DynamicsConfig()
        self.threshold = threshold or ThresholdConfig()
        self.feasibility = feasibility
        self.labels: dict[int, FastLabel | SlowLabel] = {}

    def decide(self, state, obs, history) -> StepDecision:
        t = state.step
        cfg_d, cfg_t, cfg_f = self.dynamics, self.threshold, self.feasibility
        conf = obs.conf
        masked = state.masked_positions()

        decode: list[tuple[int, int]] = []
        remask: list[int] = []
        forced: list[int] = []
        taus: list[tuple[int, float]] = []

        # Content monitoring for previously decoded near-threshold tokens.
        if cfg_f is not None:
            for pos in sorted(p for p, l in self.labels.items() if isinstance(l, FastLabel)):
                action = check_fast(self.labels[pos], int(obs.token[pos]), t, cfg_f)
                if action is FastAction.REMASK:
                    remask.append(pos)
                    del self.labels[pos]
                elif action is FastAction.CLEAR_LABEL:
                    del self.labels[pos]

        p = p_schedule(state.decoded_fraction(), cfg_t)
        warmup = cfg_t.warmup_threshold
        near_decodes: list[tuple[int, float, float]] = []

        # Threshold test and slow updates over positions masked at step start.
        for pos in masked:
            c = float(conf[pos])
            if history.prior_samples(pos) < cfg_d.w_t:
                cb = warmup
            else:
                var = float(history.last_variance[pos])
                cb = min(1.0, max(0.0, c - var))
            cn = c_neighbour(
                conf,
                pos,
                cfg_d.w_n,
                state.prompt_len,
                state.seq_len,
                cfg_t.boundary_mode,
                cfg_d.left_bias,
            )
            tau = dynamic_threshold(cb, cn, p)
            taus.append((pos, tau))
            if c >= tau:
                decode.append((pos, int(obs.token[pos])))
                if cfg_f is not None:
                    self.labels.pop(pos, None)
                    near_decodes.append((pos, c, tau))
            elif cfg_f is not None:
                prev = self.labels.get(pos)
                if not isinstance(prev, SlowLabel):
                    prev = None
                action, new_label = update_slow(prev, c, tau, cfg_f)
                if action is SlowAction.FORCE_DECODE:
                    decode.append((pos, int(obs.token[pos])))
                    forced.append(pos)
                    self.labels.pop(pos, None)
                elif action is SlowAction.LABELED:
                    self.labels[pos] = new_label
                else:
                    self.labels.pop(pos, None)

        # Fresh fast labels for this step's near-threshold decodes
        # (force decodes are deliberately not labeled).
        if cfg_f is not None:
            for pos, c, tau in near_decodes:
                label = maybe_label_fast(t, c, tau, cfg_f, content=int(obs.token[pos]))
                if label is not None:
                    self.labels[pos] = label

        decision = StepDecision(
            decode=tuple(sorted(decode)),
            remask=tuple(sorted(remask)),
            forced=tuple(sorted(forced)),
            tau=tuple(taus),
        )
        out = with_progress_fallback(decision, obs, masked)
        if out.fallback_pos is not None and cfg_f is not None:
            self.labels.pop(out.fallback_pos, None)
        return out


def _validate_decision(
    decision: StepDecision,
    state: SequenceState,
    masked_before: set[int],
) -> None:
    decode_pos = [pos for pos, _ in decision.decode]
    decode_set = set(decode_pos)
    if len(decode_set) != len(decode_pos):
        raise ContractViolationError("decision decodes a position twice")
    for pos in decode_pos:
        if pos not in masked_before:
            raise ContractViolationError(
                f"decision decodes position {pos} that was not masked at step start"
            )
    remask_set = set(decision.remask)
    if decode_set & remask_set:
        raise ContractViolationError("decision decodes and remasks the same position")
    for pos in decision.remask:
        if pos < state.prompt_len:
            raise ContractViolationError(f"decision remasks prompt position {pos}")
        if pos in masked_before or state.is_masked(pos):
            raise ContractViolationError(
                f"decision remasks position {pos} that is not decoded"
            )
    if not set(decision.forced) <= decode_set:
        raise ContractViolationError("forced positions must be a subset of decode")


def run(
    source: ConfidenceSource,
    strategy: Strategy,
    state: SequenceState,
    max_steps: int | None = None,
    *,
    dynamics: DynamicsConfig | None = None,
) -> RunResult:
    """Drive one sequence to completion.

    Terminates as soon as every generation position is decoded, or at the
    last budgeted step, where all remaining masked positions are decoded at
    their current argmax. ``dynamics`` controls the history bookkeeping that
    runs identically under every strategy; when the strategy carries its own
    dynamics config (the dynamic-threshold one does) that config is used.
    """
    if max_steps is None:
        max_steps = state.max_steps
    else:
        if max_steps < 1:
            raise StructuralError(f"max_steps must be >= 1, got {max_steps}")
        state.max_steps = max_steps
    dyn = dynamics or getattr(strategy, "dynamics", None) or DynamicsConfig()
    history = ConfidenceHistory(state.seq_len, capacity=max(8, dyn.w_t))
    reports: list[StepReport] = []

    for t in range(max_steps):
        state.step = t
        obs = source.observe(state, t)
        if obs.seq_len != state.seq_len:
            raise StructuralError(
                f"observation length {obs.seq_len} does not match seq_len {state.seq_len}"
            )
        if obs.t != t:
            raise StructuralError(f"observation carries step {obs.t}, expected {t}")
        history.record_observation(obs, dyn.w_t)
        dev = np.zeros(state.seq_len)
        for pos in range(state.prompt_len, state.seq_len):
            dev[pos] = spatial_deviance(
                obs.conf, pos, dyn.w_n, left_pad=1.0, right_pad=0.0, left_bias=dyn.left_bias
            )
        history.accrue_deviance(dev, obs.conf)

        masked_before = set(state.masked_positions())
        decision = strategy.decide(state, obs, history)
        _validate_decision(decision, state, masked_before)
        for pos in decision.remask:
            state.revert_to_mask(pos)
        for pos, token in decision.decode:
            state.commit_decode(pos, token)

        flushed: tuple[int, ...] = ()
        if t == max_steps - 1 and not state.all_decoded():
            flushed = tuple(state.masked_positions())
            for pos in flushed:
                state.commit_decode(pos, int(obs.token[pos]))

        reports.append(
            StepReport(
                step=t,
                decision=decision,
                flushed=flushed,
                decoded_fraction=state.decoded_fraction(),
                masked_remaining=len(state.masked_positions()),
                obs_token=tuple(int(x) for x in obs.token),
                obs_conf=tuple(float(x) for x in obs.conf),
            )
        )
        if state.all_decoded():
            break

    return RunResult(state=state, reports=reports, history=history)


def make_strategy(name: str, **params) -> Strategy:
    """Build a fresh strategy instance for one run."""
    if name == "fixed":
        return FixedThresholdStrategy(**params)
    if name == "dus":
        return DusStrategy(**params)
    if name == "stdd":
        return StddStrategy(**params)
    raise StructuralError(f"unknown strategy {name!r}; expected stdd, fixed, or dus")

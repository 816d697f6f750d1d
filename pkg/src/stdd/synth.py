"""Seeded synthetic confidence source.

Each generation position follows one of three trajectory archetypes. Normal
positions ride a logistic confidence rise whose center moves earlier as left
context gets decoded (and later when that context was decoded wrongly).
Static positions sit at a flat sub-threshold confidence with the correct
argmax from the start. Unstable positions spike high at scripted steps while
their argmax cycles through decoy tokens, settling on the truth only after a
given step. The generator is a pure function of (spec, sequence state, step),
so identical runs replay identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, StructuralError
from .state import DECODED, SequenceState, StepObservation

PROMPT_CONF = 0.99
NORMAL_LO = 0.1
NORMAL_HI = 0.98


class ArchetypeKind(Enum):
    NORMAL = "normal"
    STATIC = "static"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class Archetype:
    kind: ArchetypeKind
    onset_step: float = 0.0
    base_conf: float = 0.5
    spike_steps: tuple[int, ...] = ()
    settle_step: int = 0
    decoy_tokens: tuple[int, ...] = ()


@dataclass(frozen=True)
class CouplingSpec:
    """Decode feedback: each decoded left generation neighbor pulls a
    position's onset earlier, each wrongly decoded one pushes it later."""

    advance_on_decode: float = 2.0
    penalty_on_wrong: float = 4.0


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    prompt_len: int
    gen_len: int
    max_steps: int
    archetypes: tuple[Archetype, ...]
    ground_truth: tuple[int, ...]
    prompt_tokens: tuple[int, ...]
    window_speed: float = 1.5
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    noise_sigma: float = 0.02
    rise_scale: float = 1.5
    unstable_floor: float = 0.12
    spike_height: float = 0.97

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if len(self.archetypes) != self.gen_len:
            raise StructuralError("need one archetype per generation position")
        if len(self.ground_truth) != self.gen_len:
            raise StructuralError("need one ground-truth token per generation position")
        if len(self.prompt_tokens) != self.prompt_len:
            raise StructuralError("need one prompt token per prompt position")
        if self.window_speed <= 0:
            raise ConfigError("window_speed must be positive")
        if not 0.9 <= self.spike_height <= 1.0:
            raise ConfigError("spike_height must lie in [0.9, 1.0]")
        for i, arch in enumerate(self.archetypes):
            if arch.kind is ArchetypeKind.NORMAL and not arch.onset_step < self.max_steps:
                raise ConfigError(f"position {i}: onset_step must be < max_steps")
            if arch.kind is ArchetypeKind.STATIC and not 0.0 <= arch.base_conf < 0.95:
                raise ConfigError(f"position {i}: base_conf must be < 0.95")
            if arch.kind is ArchetypeKind.UNSTABLE:
                if not arch.settle_step < self.max_steps:
                    raise ConfigError(f"position {i}: settle_step must be < max_steps")
                if list(arch.spike_steps) != sorted(set(arch.spike_steps)):
                    raise ConfigError(f"position {i}: spike_steps must be strictly increasing")
                if not arch.decoy_tokens:
                    raise ConfigError(f"position {i}: unstable archetype needs decoy tokens")

    @property
    def seq_len(self) -> int:
        return self.prompt_len + self.gen_len


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _onset_effective(spec: SynthSpec, state: SequenceState, pos: int, base: float) -> float:
    """Shift an onset by the decode feedback from left generation neighbors."""
    adv = spec.coupling.advance_on_decode
    pen = spec.coupling.penalty_on_wrong
    if adv == 0.0 and pen == 0.0:
        return base
    decoded = 0
    wrong = 0
    for j in range(state.prompt_len, pos):
        if state.status[j] == DECODED:
            decoded += 1
            if state.tokens[j] != spec.ground_truth[j - state.prompt_len]:
                wrong += 1
    return base - adv * decoded + pen * wrong


def _trajectory(spec: SynthSpec, state: SequenceState, pos: int, step: int) -> tuple[float, int]:
    """Noise-free (confidence, argmax token) for one generation position."""
    gi = pos - state.prompt_len
    arch = spec.archetypes[gi]
    truth = spec.ground_truth[gi]
    if arch.kind is ArchetypeKind.STATIC:
        return arch.base_conf, truth
    if arch.kind is ArchetypeKind.NORMAL:
        onset = _onset_effective(spec, state, pos, arch.onset_step)
        conf = NORMAL_LO + (NORMAL_HI - NORMAL_LO) * _logistic((step - onset) / spec.rise_scale)
        return conf, truth
    # Unstable: scripted spikes with cycling decoys, then a settle-time rise.
    if step >= arch.settle_step:
        # Post-settle rise centered shortly after the settle step.
        onset = arch.settle_step + 2.0
        conf = spec.unstable_floor + (NORMAL_HI - spec.unstable_floor) * _logistic(
            (step - onset) / spec.rise_scale
        )
        if step in arch.spike_steps:
            conf = max(conf, spec.spike_height)
        return conf, truth
    conf = spec.spike_height if step in arch.spike_steps else spec.unstable_floor
    spikes_passed = sum(1 for s in arch.spike_steps if s <= step)
    decoy = arch.decoy_tokens[spikes_passed % len(arch.decoy_tokens)]
    return conf, decoy


def synth_observe(spec: SynthSpec, state: SequenceState, step: int) -> StepObservation:
    """Generate one step's observation. Decoded positions keep emitting their
    trajectory; the noise stream depends only on (seed, step)."""
    if step >= spec.max_steps:
        raise StructuralError(f"step {step} beyond max_steps {spec.max_steps}")
    n = spec.seq_len
    conf = np.empty(n)
    token = np.empty(n, dtype=np.int64)
    conf[: spec.prompt_len] = PROMPT_CONF
    token[: spec.prompt_len] = spec.prompt_tokens
    for pos in range(spec.prompt_len, n):
        c, tok = _trajectory(spec, state, pos, step)
        conf[pos] = c
        token[pos] = tok
    if spec.noise_sigma > 0.0:
        rng = np.random.default_rng((spec.seed, step))
        conf = conf + rng.normal(0.0, spec.noise_sigma, n)
    conf = np.clip(conf, 0.0, 1.0)
    return StepObservation(t=step, token=token, conf=conf)


class SyntheticSource:
    """Confidence source over one synthetic spec."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec

    def observe(self, state: SequenceState, step: int) -> StepObservation:
        return synth_observe(self.spec, state, step)

    def make_state(self) -> SequenceState:
        return SequenceState(
            prompt_len=self.spec.prompt_len,
            seq_len=self.spec.seq_len,
            max_steps=self.spec.max_steps,
            prompt_tokens=self.spec.prompt_tokens,
        )


def fidelity(state: SequenceState, reference: tuple[int, ...] | list[int]) -> float:
    """Fraction of generation positions whose committed token matches the
    reference token at the same position."""
    reference = np.asarray(reference, dtype=np.int64)
    if reference.shape != (state.gen_len,):
        raise StructuralError(
            f"reference must cover the {state.gen_len} generation positions"
        )
    committed = state.tokens[state.prompt_len :]
    return float(np.count_nonzero(committed == reference)) / state.gen_len


@dataclass(frozen=True)
class CorpusTemplate:
    """Corpus-level knobs from which seeded specs are drawn."""

    prompt_len: int = 8
    gen_len: int = 64
    max_steps: int = 64
    vocab_size: int = 1000
    frac_normal: float = 0.70
    frac_static: float = 0.15
    frac_unstable: float = 0.15
    window_speed: float = 1.5
    warm_offset: float = 4.0
    onset_jitter: float = 2.0
    static_conf_lo: float = 0.35
    static_conf_hi: float = 0.75
    spike_period_lo: int = 3
    spike_period_hi: int = 5
    spike_height: float = 0.97
    settle_lo: int = 16
    settle_hi: int = 28
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    noise_sigma: float = 0.02
    rise_scale: float = 1.5
    unstable_floor: float = 0.12

    def __post_init__(self):
        total = self.frac_normal + self.frac_static + self.frac_unstable
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"archetype fractions must sum to 1, got {total}")
        if not 0 < self.prompt_len:
            raise ConfigError("prompt_len must be >= 1")
        if self.gen_len < 1 or self.max_steps < 1:
            raise ConfigError("gen_len and max_steps must be >= 1")


def build_spec(template: CorpusTemplate, seed: int) -> SynthSpec:
    """Materialize one synthetic spec from a template and a seed."""
    t = template
    rng = np.random.default_rng(seed)
    archetypes: list[Archetype] = []
    truth: list[int] = []
    last_step = t.max_steps - 1
    for i in range(t.gen_len):
        tok = int(rng.integers(1, t.vocab_size))
        truth.append(tok)
        base_onset = t.warm_offset + i / t.window_speed + rng.uniform(-t.onset_jitter, t.onset_jitter)
        base_onset = float(min(max(base_onset, 1.0), last_step))
        kind = rng.random()
        if kind < t.frac_normal:
            archetypes.append(Archetype(ArchetypeKind.NORMAL, onset_step=base_onset))
        elif kind < t.frac_normal + t.frac_static:
            base_conf = float(rng.uniform(t.static_conf_lo, t.static_conf_hi))
            archetypes.append(Archetype(ArchetypeKind.STATIC, base_conf=base_conf))
        else:
            settle = int(min(rng.integers(t.settle_lo, t.settle_hi + 1), last_step))
            spikes: list[int] = []
            s = int(rng.integers(2, 7))
            while s < settle:
                spikes.append(s)
                s += int(rng.integers(t.spike_period_lo, t.spike_period_hi + 1))
            if not spikes:
                spikes = [max(1, settle - 2)]
            decoys = []
            while len(decoys) < 3:
                d = int(rng.integers(1, t.vocab_size))
                if d != tok and d not in decoys:
                    decoys.append(d)
            archetypes.append(
                Archetype(
                    ArchetypeKind.UNSTABLE,
                    spike_steps=tuple(spikes),
                    settle_step=settle,
                    decoy_tokens=tuple(decoys),
                )
            )
    prompt_tokens = tuple(int(x) for x in rng.integers(1, t.vocab_size, t.prompt_len))
    return SynthSpec(
        seed=seed,
        prompt_len=t.prompt_len,
        gen_len=t.gen_len,
        max_steps=t.max_steps,
        archetypes=tuple(archetypes),
        ground_truth=tuple(truth),
        prompt_tokens=prompt_tokens,
        window_speed=t.window_speed,
        coupling=t.coupling,
        noise_sigma=t.noise_sigma,
        rise_scale=t.rise_scale,
        unstable_floor=t.unstable_floor,
        spike_height=t.spike_height,
    )


def default_corpus(count: int, seed: int = 0, template: CorpusTemplate | None = None) -> list[SynthSpec]:
    """Specs for seeds seed, seed+1, ..., seed+count-1."""
    template = template or CorpusTemplate()
    return [build_spec(template, seed + k) for k in range(count)]


# ---------------------------------------------------------------------------
# Serialization: one JSON object per file, matching the trace conventions.
# ---------------------------------------------------------------------------

SPEC_TYPE = "synth-spec"
SPEC_VERSION = 1


def spec_to_dict(spec: SynthSpec) -> dict:
    d = {
        "type": SPEC_TYPE,
        "version": SPEC_VERSION,
        "seed": spec.seed,
        "prompt_len": spec.prompt_len,
        "gen_len": spec.gen_len,
        "max_steps": spec.max_steps,
        "window_speed": spec.window_speed,
        "noise_sigma": spec.noise_sigma,
        "rise_scale": spec.rise_scale,
        "unstable_floor": spec.unstable_floor,
        "spike_height": spec.spike_height,
        "coupling": asdict(spec.coupling),
        "prompt_tokens": list(spec.prompt_tokens),
        "ground_truth": list(spec.ground_truth),
        "positions": [
            {
                "kind": a.kind.value,
                "onset_step": a.onset_step,
                "base_conf": a.base_conf,
                "spike_steps": list(a.spike_steps),
                "settle_step": a.settle_step,
                "decoy_tokens": list(a.decoy_tokens),
            }
            for a in spec.archetypes
        ],
    }
    return d


def spec_from_dict(d: dict) -> SynthSpec:
    if d.get("type") != SPEC_TYPE:
        raise StructuralError(f"not a synthetic spec document: type={d.get('type')!r}")
    if d.get("version") != SPEC_VERSION:
        raise StructuralError(f"unknown spec version {d.get('version')!r}")
    archetypes = tuple(
        Archetype(
            kind=ArchetypeKind(p["kind"]),
            onset_step=float(p.get("onset_step", 0.0)),
            base_conf=float(p.get("base_conf", 0.5)),
            spike_steps=tuple(int(x) for x in p.get("spike_steps", ())),
            settle_step=int(p.get("settle_step", 0)),
            decoy_tokens=tuple(int(x) for x in p.get("decoy_tokens", ())),
        )
        for p in d["positions"]
    )
    return SynthSpec(
        seed=int(d["seed"]),
        prompt_len=int(d["prompt_len"]),
        gen_len=int(d["gen_len"]),
        max_steps=int(d["max_steps"]),
        archetypes=archetypes,
        ground_truth=tuple(int(x) for x in d["ground_truth"]),
        prompt_tokens=tuple(int(x) for x in d["prompt_tokens"]),
        window_speed=float(d["window_speed"]),
        coupling=CouplingSpec(**d["coupling"]),
        noise_sigma=float(d["noise_sigma"]),
        rise_scale=float(d["rise_scale"]),
        unstable_floor=float(d["unstable_floor"]),
        spike_height=float(d["spike_height"]),
    )


def write_spec(path, spec: SynthSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(spec_to_dict(spec), separators=(",", ":")))
        fh.write("\n")


def read_spec(path) -> SynthSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.loads(fh.read()))


def with_seed(spec: SynthSpec, seed: int) -> SynthSpec:
    return replace(spec, seed=seed)

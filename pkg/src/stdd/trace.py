"""Line-delimited trace files: one JSON object per line, header first.

A trace records a full run of per-step (argmax token, confidence) vectors so
experiments can be replayed offline. Replay is non-interactive: a recorded
trace cannot react to altered decode orders, which is a documented limitation
of replay-based comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ReplayUnderrunError, StructuralError
from .state import SequenceState, StepObservation

TRACE_VERSION = 1


@dataclass(frozen=True)
class TraceHeader:
    version: int
    prompt_len: int
    seq_len: int
    source: str


def write_trace(path, header: TraceHeader, observations) -> None:
    """Write a header plus one step record per observation.

    Confidences are serialized with the shortest representation that round
    trips exactly, so reading the file back reproduces the originals bit for
    bit.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "type": "header",
                    "version": header.version,
                    "prompt_len": header.prompt_len,
                    "seq_len": header.seq_len,
                    "source": header.source,
                },
                separators=(",", ":"),
            )
        )
        fh.write("\n")
        for obs in observations:
            fh.write(
                json.dumps(
                    {
                        "type": "step",
                        "t": int(obs.t),
                        "token": [int(x) for x in obs.token],
                        "conf": [float(x) for x in obs.conf],
                    },
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_trace(path) -> tuple[TraceHeader, list[StepObservation]]:
    """Strictly parse a trace file, raising on any malformed content."""
    problems = validate_trace(path)
    if problems:
        raise StructuralError(f"invalid trace {path}: {problems[0]}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    head = json.loads(lines[0])
    header = TraceHeader(
        version=head["version"],
        prompt_len=head["prompt_len"],
        seq_len=head["seq_len"],
        source=head["source"],
    )
    observations = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        observations.append(
            StepObservation(
                t=rec["t"],
                token=np.asarray(rec["token"], dtype=np.int64),
                conf=np.asarray(rec["conf"], dtype=np.float64),
            )
        )
    return header, observations


def validate_trace(path) -> list[str]:
    """All invariant violations in a trace file, as line-numbered messages.

    An empty list means the file is valid.
    """
    problems: list[str] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        return [f"line 0: cannot read file: {exc}"]

    lines = [(i + 1, ln) for i, ln in enumerate(raw_lines) if ln.strip()]
    if not lines:
        return ["line 0: empty trace file"]

    lineno, first = lines[0]
    seq_len = None
    try:
        head = json.loads(first)
    except json.JSONDecodeError as exc:
        return [f"line {lineno}: invalid JSON: {exc.msg}"]
    if not isinstance(head, dict) or head.get("type") != "header":
        problems.append(f"line {lineno}: first record must have type 'header'")
    else:
        if head.get("version") != TRACE_VERSION:
            problems.append(
                f"line {lineno}: unknown version {head.get('version')!r}, expected {TRACE_VERSION}"
            )
        prompt_len = head.get("prompt_len")
        seq_len = head.get("seq_len")
        if not isinstance(prompt_len, int) or not isinstance(seq_len, int):
            problems.append(f"line {lineno}: prompt_len and seq_len must be integers")
            seq_len = None
        elif not 0 < prompt_len < seq_len:
            problems.append(
                f"line {lineno}: need 0 < prompt_len < seq_len, "
                f"got prompt_len={prompt_len} seq_len={seq_len}"
            )
        if not isinstance(head.get("source"), str):
            problems.append(f"line {lineno}: source must be a string")

    expected_t = 0
    for lineno, ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: invalid JSON: {exc.msg}")
            continue
        if not isinstance(rec, dict) or rec.get("type") != "step":
            problems.append(f"line {lineno}: expected a record with type 'step'")
            continue
        t = rec.get("t")
        if t != expected_t:
            problems.append(f"line {lineno}: step index {t!r} not contiguous, expected {expected_t}")
        expected_t = (t + 1) if isinstance(t, int) else (expected_t + 1)
        token = rec.get("token")
        conf = rec.get("conf")
        if not isinstance(token, list) or not all(isinstance(x, int) for x in token):
            problems.append(f"line {lineno}: token must be a list of integers")
            token = None
        if not isinstance(conf, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in conf
        ):
            problems.append(f"line {lineno}: conf must be a list of numbers")
            conf = None
        if seq_len is not None:
            if token is not None and len(token) != seq_len:
                problems.append(
                    f"line {lineno}: token has length {len(token)}, expected {seq_len}"
                )
            if conf is not None and len(conf) != seq_len:
                problems.append(
                    f"line {lineno}: conf has length {len(conf)}, expected {seq_len}"
                )
        if conf is not None:
            for j, v in enumerate(conf):
                if not 0.0 <= v <= 1.0:
                    problems.append(f"line {lineno}: conf[{j}] = {v} outside [0, 1]")
    return problems


class ReplaySource:
    """Confidence source that replays a recorded trace verbatim.

    Replay ignores scheduler decisions; it cannot react to a decode order
    that differs from the one recorded.
    """

    def __init__(self, header: TraceHeader, observations: list[StepObservation]):
        self.header = header
        self.observations = observations

    @classmethod
    def from_file(cls, path) -> "ReplaySource":
        header, observations = read_trace(path)
        return cls(header, observations)

    def __len__(self) -> int:
        return len(self.observations)

    def observe(self, state: SequenceState, step: int) -> StepObservation:
        if step >= len(self.observations):
            raise ReplayUnderrunError(
                f"trace holds {len(self.observations)} steps, step {step} requested"
            )
        return self.observations[step]

    def make_state(self, max_steps: int | None = None) -> SequenceState:
        return SequenceState(
            prompt_len=self.header.prompt_len,
            seq_len=self.header.seq_len,
            max_steps=max_steps if max_steps is not None else max(1, len(self.observations)),
        )

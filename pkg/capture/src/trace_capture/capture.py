"""The capture loop: drive a mask predictor, record every step.

The loop runs the conventional fixed-threshold unmasking schedule while
writing one trace record per denoiser invocation. Decode decisions follow the
same rules the downstream replay harness applies to traces under its fixed
strategy (decode at or above the threshold, single highest-confidence decode
when nothing clears it, flush at the final step), so a captured decisions log
replays to the same decode order.

Records are appended and flushed per step; a killed capture leaves a file the
downstream validator rejects at its truncated final line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .predictor import MaskPredictor, load_predictor, tokenize_prompt

TRACE_VERSION = 1


@dataclass(frozen=True)
class CaptureSession:
    model_id: str
    prompt: str
    gen_len: int
    steps: int
    out_path: Path
    tau: float = 0.95
    decisions_path: Path | None = None

    def __post_init__(self):
        if self.gen_len < 1:
            raise ValueError("gen_len must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


def _step_record(t: int, token: np.ndarray, conf: np.ndarray) -> str:
    return json.dumps(
        {
            "type": "step",
            "t": t,
            "token": [int(x) for x in token],
            "conf": [float(x) for x in conf],
        },
        separators=(",", ":"),
    )


def capture(session: CaptureSession, predictor: MaskPredictor | None = None) -> Path:
    """Run the session and write its trace; returns the trace path.

    Exactly ``session.steps`` step records are written, one per predictor
    call, whether or not the sequence finishes decoding earlier.
    """
    prompt_ids = tokenize_prompt(session.prompt)
    if predictor is None:
        predictor = load_predictor(session.model_id, prompt_ids, session.gen_len)
    prompt_len = len(prompt_ids)
    seq_len = prompt_len + session.gen_len
    mask_id = predictor.mask_id

    tokens = np.full(seq_len, mask_id, dtype=np.int64)
    tokens[:prompt_len] = prompt_ids

    header = {
        "type": "header",
        "version": TRACE_VERSION,
        "prompt_len": prompt_len,
        "seq_len": seq_len,
        "source": f"capture model={session.model_id} tau={session.tau} steps={session.steps}",
    }

    decisions_fh = None
    if session.decisions_path is not None:
        decisions_fh = open(session.decisions_path, "w", encoding="utf-8")

    try:
        with open(session.out_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, separators=(",", ":")))
            fh.write("\n")
            fh.flush()
            for t in range(session.steps):
                argmax, conf = predictor.predict(tokens, t)
                fh.write(_step_record(t, argmax, conf))
                fh.write("\n")
                fh.flush()

                masked = [
                    p for p in range(prompt_len, seq_len) if tokens[p] == mask_id
                ]
                decode = [p for p in masked if conf[p] >= session.tau]
                if not decode and masked:
                    # Same progress guarantee the replay harness applies:
                    # highest confidence wins, lowest index on ties.
                    decode = [max(masked, key=lambda p: (conf[p], -p))]
                for p in decode:
                    tokens[p] = argmax[p]
                flushed = []
                if t == session.steps - 1:
                    flushed = [
                        p for p in range(prompt_len, seq_len) if tokens[p] == mask_id
                    ]
                    for p in flushed:
                        tokens[p] = argmax[p]
                if decisions_fh is not None:
                    decisions_fh.write(
                        json.dumps(
                            {
                                "t": t,
                                "decode": [[int(p), int(tokens[p])] for p in decode],
                                "flushed": [[int(p), int(tokens[p])] for p in flushed],
                            },
                            separators=(",", ":"),
                        )
                    )
                    decisions_fh.write("\n")
                    decisions_fh.flush()
    finally:
        if decisions_fh is not None:
            decisions_fh.close()
    return Path(session.out_path)

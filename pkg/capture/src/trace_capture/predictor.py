"""Mask predictors the capture loop can drive.

A predictor maps the current token sequence (masked positions carry the mask
id) to per-position (argmax token, probability) vectors, one call per
denoising step. Real models plug in through the same protocol; the built-in
toy model exists so captures can run without any checkpoint.
"""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np


class CaptureSetupError(Exception):
    """The requested model or tokenizer is not available."""


class MaskPredictor(Protocol):
    mask_id: int
    vocab_size: int

    def predict(self, tokens: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-position (argmax token id, argmax probability) for one step."""
        ...


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class ToyDiffusionModel:
    """Deterministic stand-in for a masked-diffusion denoiser.

    Masked positions gain confidence along a left-to-right logistic schedule,
    sped up by decoded context immediately to their left. Positions already
    committed in the input are echoed back at high confidence, the way a mask
    predictor scores tokens it can see. Everything is a pure function of
    (seed, prompt, step, input tokens).
    """

    MASK_ID = 0

    def __init__(self, seed: int, prompt_ids: list[int], gen_len: int, vocab_size: int = 512):
        self.mask_id = self.MASK_ID
        self.vocab_size = vocab_size
        self.seed = seed
        self.prompt_len = len(prompt_ids)
        self.gen_len = gen_len
        rng = np.random.default_rng((seed, tuple(prompt_ids)))
        self.target = rng.integers(1, vocab_size, gen_len)
        self.onset = 2.0 + np.arange(gen_len) / 2.0 + rng.uniform(-1.0, 1.0, gen_len)
        self.wobble = rng.uniform(0.0, math.pi, gen_len)

    def predict(self, tokens: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
        n = self.prompt_len + self.gen_len
        if tokens.shape != (n,):
            raise ValueError(f"expected {n} tokens, got {tokens.shape}")
        argmax = np.empty(n, dtype=np.int64)
        conf = np.empty(n, dtype=np.float64)
        argmax[: self.prompt_len] = tokens[: self.prompt_len]
        conf[: self.prompt_len] = 0.995
        for gi in range(self.gen_len):
            pos = self.prompt_len + gi
            committed = tokens[pos] != self.mask_id
            if committed:
                argmax[pos] = tokens[pos]
                conf[pos] = 0.97 + 0.02 * math.sin(self.wobble[gi] + 0.7 * step)
                continue
            boost = 0.0
            for d in (1, 2, 3):
                if pos - d >= self.prompt_len and tokens[pos - d] != self.mask_id:
                    boost += 1.5
            x = (step + boost - self.onset[gi]) / 1.2
            conf[pos] = 0.03 + 0.95 * _logistic(x)
            argmax[pos] = self.target[gi]
        return argmax, np.clip(conf, 0.0, 1.0)


def tokenize_prompt(text: str) -> list[int]:
    """Byte-level toy tokenizer; ids are offset past the mask id."""
    return [b + 2 for b in text.encode("utf-8")]


def load_predictor(model_id: str, prompt_ids: list[int], gen_len: int) -> MaskPredictor:
    """Resolve a model identifier.

    ``toy`` or ``toy:<seed>`` builds the in-process toy model. Any other
    identifier refers to an external checkpoint this adapter does not ship;
    plug such models in programmatically through the MaskPredictor protocol.
    """
    if model_id == "toy":
        return ToyDiffusionModel(0, prompt_ids, gen_len)
    if model_id.startswith("toy:"):
        try:
            seed = int(model_id.split(":", 1)[1])
        except ValueError:
            raise CaptureSetupError(f"bad toy model id {model_id!r}, expected toy:<seed>")
        return ToyDiffusionModel(seed, prompt_ids, gen_len)
    raise CaptureSetupError(
        f"model {model_id!r} is not available; use toy:<seed> or provide a "
        f"MaskPredictor implementation"
    )

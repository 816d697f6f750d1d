"""Capture CLI.

Exit codes: 0 success, 2 usage error, 3 setup failure (model or prompt not
usable).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .capture import CaptureSession, capture
from .predictor import CaptureSetupError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="capture",
        description="Record a masked-diffusion sampling run into a trace file.",
    )
    parser.add_argument("--model", required=True, help="model id, e.g. toy:7")
    parser.add_argument("--prompt", required=True, type=Path, help="prompt text file")
    parser.add_argument("--gen-len", required=True, type=int)
    parser.add_argument("--steps", required=True, type=int)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--tau", type=float, default=0.95, help="decode threshold")
    parser.add_argument(
        "--decisions-out", type=Path, help="also log per-step decode decisions"
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        prompt = args.prompt.read_text(encoding="utf-8").strip()
    except OSError as exc:
        print(f"capture: cannot read prompt: {exc}", file=sys.stderr)
        return 3
    try:
        session = CaptureSession(
            model_id=args.model,
            prompt=prompt,
            gen_len=args.gen_len,
            steps=args.steps,
            out_path=args.out,
            tau=args.tau,
            decisions_path=args.decisions_out,
        )
    except ValueError as exc:
        print(f"capture: {exc}", file=sys.stderr)
        return 2
    try:
        path = capture(session)
    except CaptureSetupError as exc:
        print(f"capture: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {args.steps} step records to {path}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

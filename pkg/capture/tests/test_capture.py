"""Capture adapter tests.

The downstream harness is exercised strictly through its command-line
interface and the trace file format; nothing here imports it.
"""

import json
import shutil
import subprocess
import sys

import pytest

from trace_capture.capture import CaptureSession, capture
from trace_capture.predictor import CaptureSetupError, ToyDiffusionModel, load_predictor, tokenize_prompt
from trace_capture.cli import main


def stdd_cmd(*args):
    exe = shutil.which("stdd")
    if exe:
        return [exe, *args]
    return [sys.executable, "-m", "stdd.cli", *args]


def run_stdd(*args):
    return subprocess.run(stdd_cmd(*args), capture_output=True, text=True)


def make_session(tmp_path, steps=24, gen_len=12, **kw):
    return CaptureSession(
        model_id=kw.pop("model_id", "toy:7"),
        prompt=kw.pop("prompt", "compute the sum"),
        gen_len=gen_len,
        steps=steps,
        out_path=tmp_path / "capture.jsonl",
        **kw,
    )


class TestCaptureProducesValidTraces:
    def test_validator_accepts_capture(self, tmp_path):
        path = capture(make_session(tmp_path))
        proc = run_stdd("validate-trace", str(path))
        assert proc.returncode == 0, proc.stderr

    def test_one_contiguous_record_per_step(self, tmp_path):
        steps = 17
        path = capture(make_session(tmp_path, steps=steps))
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines[0]["type"] == "header"
        records = lines[1:]
        assert len(records) == steps
        assert [r["t"] for r in records] == list(range(steps))

    def test_header_carries_geometry_and_source(self, tmp_path):
        session = make_session(tmp_path, gen_len=9)
        path = capture(session)
        head = json.loads(path.read_text().splitlines()[0])
        assert head["seq_len"] == head["prompt_len"] + 9
        assert "toy:7" in head["source"]
        assert "tau=0.95" in head["source"]

    def test_confidences_are_probabilities(self, tmp_path):
        path = capture(make_session(tmp_path))
        for line in path.read_text().splitlines()[1:]:
            rec = json.loads(line)
            assert all(0.0 <= c <= 1.0 for c in rec["conf"])

    def test_truncated_capture_rejected(self, tmp_path):
        path = capture(make_session(tmp_path))
        data = path.read_text()
        cut = tmp_path / "truncated.jsonl"
        cut.write_text(data[: int(len(data) * 0.8)])
        proc = run_stdd("validate-trace", str(cut))
        assert proc.returncode != 0

    def test_capture_is_deterministic(self, tmp_path):
        a = capture(make_session(tmp_path))
        data_a = a.read_bytes()
        b_session = CaptureSession(
            model_id="toy:7",
            prompt="compute the sum",
            gen_len=12,
            steps=24,
            out_path=tmp_path / "again.jsonl",
        )
        assert capture(b_session).read_bytes() == data_a


class TestReplayRoundTrip:
    def test_fixed_replay_reproduces_decode_order(self, tmp_path):
        # Replaying the captured trace under the downstream fixed strategy at
        # the capture-time threshold must reproduce the logged decode order.
        session = make_session(
            tmp_path, steps=32, gen_len=10, decisions_path=tmp_path / "decisions.jsonl"
        )
        path = capture(session)
        report_path = tmp_path / "report.json"
        proc = run_stdd(
            "run",
            "--trace",
            str(path),
            "--strategy",
            f"fixed:tau={session.tau}",
            "--out",
            str(report_path),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(report_path.read_text())
        decisions = [json.loads(l) for l in (tmp_path / "decisions.jsonl").read_text().splitlines()]
        steps = report["steps"]
        for replayed in steps:
            logged = decisions[replayed["step"]]
            assert sorted(map(tuple, replayed["decode"])) == sorted(map(tuple, logged["decode"]))
            assert len(replayed["flushed"]) == 0
        # After the replay terminates, the capture loop had nothing left to decode.
        for extra in decisions[len(steps):]:
            assert extra["decode"] == [] and extra["flushed"] == []


class TestPredictors:
    def test_toy_model_resolution(self):
        ids = tokenize_prompt("abc")
        model = load_predictor("toy:3", ids, 5)
        assert isinstance(model, ToyDiffusionModel)
        assert load_predictor("toy", ids, 5).seed == 0

    def test_unknown_model_is_setup_error(self):
        with pytest.raises(CaptureSetupError):
            load_predictor("open-weights-13b", [1, 2], 4)

    def test_bad_toy_seed_is_setup_error(self):
        with pytest.raises(CaptureSetupError):
            load_predictor("toy:abc", [1, 2], 4)

    def test_session_validation(self, tmp_path):
        with pytest.raises(ValueError):
            CaptureSession("toy", "", 4, 4, tmp_path / "x.jsonl")
        with pytest.raises(ValueError):
            CaptureSession("toy", "hi", 0, 4, tmp_path / "x.jsonl")
        with pytest.raises(ValueError):
            CaptureSession("toy", "hi", 4, 4, tmp_path / "x.jsonl", tau=1.5)


class TestCli:
    def test_end_to_end(self, tmp_path):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("hello world")
        out = tmp_path / "t.jsonl"
        rc = main(
            [
                "--model",
                "toy:1",
                "--prompt",
                str(prompt),
                "--gen-len",
                "8",
                "--steps",
                "16",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        proc = run_stdd("validate-trace", str(out))
        assert proc.returncode == 0

    def test_unknown_model_exit_code(self, tmp_path):
        prompt = tmp_path / "prompt.txt"
        prompt.write_text("hello")
        rc = main(
            [
                "--model",
                "nonexistent-model",
                "--prompt",
                str(prompt),
                "--gen-len",
                "4",
                "--steps",
                "4",
                "--out",
                str(tmp_path / "t.jsonl"),
            ]
        )
        assert rc == 3

    def test_missing_prompt_file(self, tmp_path):
        rc = main(
            [
                "--model",
                "toy",
                "--prompt",
                str(tmp_path / "nope.txt"),
                "--gen-len",
                "4",
                "--steps",
                "4",
                "--out",
                str(tmp_path / "t.jsonl"),
            ]
        )
        assert rc == 3

    def test_bad_args_usage_exit(self, tmp_path):
        assert main(["--model", "toy"]) == 2

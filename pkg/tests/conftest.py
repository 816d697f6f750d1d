"""Shared builders and independent log-scan oracles.

The oracles here deliberately re-derive expected behavior from run logs and
raw definitions (direct summation, explicit state tracking) rather than
calling back into the code paths they check.
"""

from __future__ import annotations

import numpy as np

from stdd.state import StepObservation
from stdd.trace import ReplaySource, TraceHeader


def make_observations(conf_rows, token_rows=None):
    """Observations from a (steps, seq_len) confidence matrix."""
    conf_rows = [list(r) for r in conf_rows]
    n = len(conf_rows[0])
    if token_rows is None:
        token_rows = [[100 + j for j in range(n)] for _ in conf_rows]
    return [
        StepObservation(t=t, token=np.asarray(tok), conf=np.asarray(cf))
        for t, (cf, tok) in enumerate(zip(conf_rows, token_rows))
    ]


def make_replay(conf_rows, token_rows=None, prompt_len=1):
    obs = make_observations(conf_rows, token_rows)
    header = TraceHeader(
        version=1, prompt_len=prompt_len, seq_len=obs[0].seq_len, source="test"
    )
    return ReplaySource(header, obs)


# ---------------------------------------------------------------------------
# Log reconstruction
# ---------------------------------------------------------------------------


class LogScan:
    """Step-by-step reconstruction of a run from its report log."""

    def __init__(self, reports, prompt_len, seq_len):
        self.reports = reports
        self.prompt_len = prompt_len
        self.seq_len = seq_len
        self.gen_len = seq_len - prompt_len

    def masked_at_start(self):
        """Per step: the set of masked generation positions at step start."""
        masked = set(range(self.prompt_len, self.seq_len))
        out = []
        for r in self.reports:
            out.append(set(masked))
            for p in r.decision.remask:
                masked.add(p)
            for p, _ in r.decision.decode:
                masked.discard(p)
            for p in r.flushed:
                masked.discard(p)
        return out

    def decoded_fraction_at_start(self):
        out = []
        for m in self.masked_at_start():
            out.append((self.gen_len - len(m)) / self.gen_len)
        return out


def scan_feasibility_events(reports, prompt_len, seq_len, t_start=10, c_fast=0.1, c_slow=0.1, t_max=3):
    """Independent re-scan of fast-remask and force-decode events.

    Walks the logged steps, replaying the labeling rules directly from the
    logged confidences, thresholds, and events. Returns (expected_remasks,
    logged_remasks, expected_forced, logged_forced) as sets of (step, pos).
    """
    scan = LogScan(reports, prompt_len, seq_len)
    masked_sets = scan.masked_at_start()

    monitored: dict[int, int] = {}  # pos -> content
    streak: dict[int, int] = {}  # pos -> consecutive near-miss count

    expected_remasks = set()
    logged_remasks = set()
    expected_forced = set()
    logged_forced = set()

    for r, masked in zip(reports, masked_sets):
        t = r.step
        taus = dict(r.decision.tau)
        decoded_map = dict(r.decision.decode)
        logged_remasks |= {(t, p) for p in r.decision.remask}
        logged_forced |= {(t, p) for p in r.decision.forced}

        # Monitoring of previously decoded near-threshold tokens.
        for pos in sorted(monitored):
            if r.obs_token[pos] != monitored[pos]:
                expected_remasks.add((t, pos))
                del monitored[pos]
            elif t >= t_start:
                del monitored[pos]

        # Threshold outcomes over positions masked at step start.
        new_monitors = []
        for pos in sorted(masked):
            c = r.obs_conf[pos]
            tau = taus.get(pos)
            if tau is None:
                continue
            if c >= tau:
                streak.pop(pos, None)
                if t < t_start and c - tau <= c_fast:
                    new_monitors.append((pos, decoded_map[pos]))
            else:
                if 0.0 <= tau - c <= c_slow:
                    streak[pos] = streak.get(pos, 0) + 1
                    if streak[pos] >= t_max:
                        expected_forced.add((t, pos))
                        del streak[pos]
                else:
                    streak.pop(pos, None)
        if r.decision.fallback_pos is not None:
            streak.pop(r.decision.fallback_pos, None)
        for pos, content in new_monitors:
            monitored[pos] = content

    return expected_remasks, logged_remasks, expected_forced, logged_forced

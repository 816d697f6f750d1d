"""Run execution, metrics, and report assembly behind the CLI.

Reports are single JSON documents carrying a ``"schema": "stdd-report/1"``
marker, the fully resolved configuration they were produced from, and enough
per-step detail to recompute every aggregate offline. Re-running a report's
embedded config reproduces the report except for its timestamp.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dynamics import classify_token
from .errors import ConfigError
from .presets import get_preset
from .scheduler import (
    DusStrategy,
    FixedThresholdStrategy,
    RunResult,
    StddStrategy,
    Strategy,
    run,
)
from .synth import (
    CorpusTemplate,
    CouplingSpec,
    SyntheticSource,
    build_spec,
    fidelity,
    read_spec,
    spec_from_dict,
    spec_to_dict,
    with_seed,
    write_spec,
)
from .threshold import BoundaryMode
from .trace import ReplaySource

REPORT_SCHEMA = "stdd-report/1"
RUN_CONFIG_TYPE = "run-config"
COMPARE_CONFIG_TYPE = "compare-config"
CONFIG_VERSION = 1

STRATEGY_NAMES = ("stdd", "fixed", "dus")

_STDD_DYNAMICS_KEYS = ("w_t", "w_n", "left_bias")
_STDD_THRESHOLD_KEYS = ("warmup_threshold", "p_outer", "p_inner", "lo", "hi", "boundary_mode")
_STDD_FEASIBILITY_KEYS = ("t_start", "c_fast", "c_slow", "t_max")


@dataclass
class RunMetrics:
    steps_used: int
    mean_decoded_per_step: float
    remask_count: int
    force_decode_count: int
    flush_count: int
    fallback_count: int
    fidelity: float | None = None
    speedup: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def build_strategy(strategy_cfg: dict) -> Strategy:
    """Fresh strategy instance from a resolved strategy config."""
    name = strategy_cfg.get("name")
    params = dict(strategy_cfg.get("params") or {})
    if name == "fixed":
        return FixedThresholdStrategy(tau=float(params.pop("tau", 0.95)))
    if name == "dus":
        return DusStrategy(groups=int(params.pop("groups", 8)))
    if name == "stdd":
        preset = get_preset(strategy_cfg.get("preset") or "default")
        dyn, thr, feas = preset.dynamics, preset.threshold, preset.feasibility
        dyn_over = {k: params.pop(k) for k in list(params) if k in _STDD_DYNAMICS_KEYS}
        if "w_t" in dyn_over:
            dyn_over["w_t"] = int(dyn_over["w_t"])
        if "w_n" in dyn_over:
            dyn_over["w_n"] = int(dyn_over["w_n"])
        if dyn_over:
            dyn = replace(dyn, **dyn_over)
        thr_over = {k: params.pop(k) for k in list(params) if k in _STDD_THRESHOLD_KEYS}
        if "boundary_mode" in thr_over:
            thr_over["boundary_mode"] = BoundaryMode(thr_over["boundary_mode"])
        if thr_over:
            thr = replace(thr, **thr_over)
        feas_over = {k: params.pop(k) for k in list(params) if k in _STDD_FEASIBILITY_KEYS}
        if feas_over:
            feas = replace(feas, **feas_over)
        enabled = params.pop("feasibility", True)
        if params:
            raise ConfigError(f"unknown stdd parameters: {sorted(params)}")
        return StddStrategy(
            dynamics=dyn, threshold=thr, feasibility=feas if enabled else None
        )
    raise ConfigError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")


def _resolve_strategy_cfg(strategy_cfg: dict) -> dict:
    out = {
        "name": strategy_cfg.get("name"),
        "params": dict(strategy_cfg.get("params") or {}),
    }
    if strategy_cfg.get("label"):
        out["label"] = strategy_cfg["label"]
    if strategy_cfg.get("name") == "stdd":
        out["preset"] = strategy_cfg.get("preset") or "default"
    build_strategy(out)  # fail fast on bad names/params
    return out


def metrics_from_result(
    result: RunResult,
    reference: tuple[int, ...] | None = None,
    baseline_steps: int | None = None,
) -> RunMetrics:
    reports = result.reports
    decodes = sum(len(r.decision.decode) + len(r.flushed) for r in reports)
    steps_used = len(reports)
    m = RunMetrics(
        steps_used=steps_used,
        mean_decoded_per_step=decodes / steps_used if steps_used else 0.0,
        remask_count=sum(len(r.decision.remask) for r in reports),
        force_decode_count=sum(len(r.decision.forced) for r in reports),
        flush_count=sum(len(r.flushed) for r in reports),
        fallback_count=sum(1 for r in reports if r.decision.fallback_pos is not None),
    )
    if reference is not None:
        m.fidelity = fidelity(result.state, reference)
    if baseline_steps is not None:
        m.speedup = baseline_steps / steps_used
    return m


def _token_stats(result: RunResult, cutoffs: tuple[float, float] | None) -> dict:
    state = result.state
    hist = result.history
    sl = slice(state.prompt_len, state.seq_len)
    wv = hist.whole_variance[sl]
    wd = hist.whole_deviance[sl]
    wi = hist.whole_isolation[sl]
    if cutoffs is None:
        # 75th percentile of this run's generation positions, floored so the
        # classifier's positivity requirement always holds.
        cutoffs = (
            max(float(np.percentile(wv, 75.0)), 1e-9),
            max(float(np.percentile(wd, 75.0)), 1e-9),
        )
    classes = [classify_token(float(v), float(d), cutoffs).kind.value for v, d in zip(wv, wd)]
    return {
        "whole_variance": [float(x) for x in wv],
        "whole_deviance": [float(x) for x in wd],
        # Derived diagnostic only: running sum of |conf - neighborhood value|.
        "whole_isolation_derived": [float(x) for x in wi],
        "class": classes,
        "cutoffs": {"variance": cutoffs[0], "deviance": cutoffs[1]},
    }


def _steps_payload(result: RunResult) -> list[dict]:
    out = []
    for r in result.reports:
        out.append(
            {
                "step": r.step,
                "decode": [[int(p), int(tok)] for p, tok in r.decision.decode],
                "remask": [int(p) for p in r.decision.remask],
                "forced": [int(p) for p in r.decision.forced],
                "fallback_pos": r.decision.fallback_pos,
                "flushed": [int(p) for p in r.flushed],
                "tau": [[int(p), float(t)] for p, t in r.decision.tau],
                "decoded_fraction": r.decoded_fraction,
                "masked_remaining": r.masked_remaining,
                "obs_token": list(r.obs_token),
                "obs_conf": list(r.obs_conf),
            }
        )
    return out


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


def _build_source_and_state(source_cfg: dict, max_steps: int | None, seed: int | None):
    if max_steps is not None and max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
    if seed is not None and seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    kind = source_cfg.get("kind")
    if kind == "synth":
        spec = spec_from_dict(source_cfg["spec"])
        if seed is not None:
            spec = with_seed(spec, seed)
        if max_steps is not None and max_steps > spec.max_steps:
            spec = replace(spec, max_steps=max_steps)
        source = SyntheticSource(spec)
        state = source.make_state()
        if max_steps is not None:
            state.max_steps = max_steps
        return source, state, tuple(spec.ground_truth), {"kind": "synth", "spec": spec_to_dict(spec)}
    if kind == "trace":
        path = source_cfg["path"]
        source = ReplaySource.from_file(path)
        state = source.make_state(max_steps)
        return source, state, None, {"kind": "trace", "path": str(path)}
    raise ConfigError(f"unknown source kind {kind!r}")


def resolve_run_config(config: dict) -> dict:
    """Normalize a run config, validating strategy and source eagerly."""
    if config.get("type") not in (None, RUN_CONFIG_TYPE):
        raise ConfigError(f"not a run config: type={config.get('type')!r}")
    source_cfg = config.get("source")
    if not isinstance(source_cfg, dict):
        raise ConfigError("run config needs a source")
    max_steps = config.get("max_steps")
    seed = config.get("seed")
    _, state, _, resolved_source = _build_source_and_state(source_cfg, max_steps, seed)
    return {
        "type": RUN_CONFIG_TYPE,
        "version": CONFIG_VERSION,
        "source": resolved_source,
        "strategy": _resolve_strategy_cfg(config.get("strategy") or {"name": "stdd"}),
        "max_steps": max_steps if max_steps is not None else state.max_steps,
        "seed": seed,
    }


def execute_run(config: dict) -> dict:
    """Run one sequence under one strategy and assemble the report."""
    resolved = resolve_run_config(config)
    source, state, reference, _ = _build_source_and_state(
        resolved["source"], resolved["max_steps"], resolved["seed"]
    )
    strategy = build_strategy(resolved["strategy"])
    result = run(source, strategy, state)
    metrics = metrics_from_result(result, reference)
    return {
        "schema": REPORT_SCHEMA,
        "kind": "run",
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": resolved,
        "metrics": metrics.to_dict(),
        "tokens": _token_stats(result, None),
        "steps": _steps_payload(result),
    }


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------


def _strategy_labels(strategy_cfgs: list[dict]) -> list[str]:
    labels: list[str] = []
    for cfg in strategy_cfgs:
        base = cfg.get("label") or cfg["name"]
        label = base
        k = 2
        while label in labels:
            label = f"{base}-{k}"
            k += 1
        labels.append(label)
    return labels


def resolve_compare_config(config: dict) -> dict:
    if config.get("type") not in (None, COMPARE_CONFIG_TYPE):
        raise ConfigError(f"not a compare config: type={config.get('type')!r}")
    corpus = config.get("corpus")
    if not corpus:
        raise ConfigError("compare config needs a non-empty corpus")
    kinds = {entry.get("kind") for entry in corpus}
    if len(kinds) != 1:
        raise ConfigError(f"corpus mixes source kinds: {sorted(kinds)}")
    strategies = [
        _resolve_strategy_cfg(cfg) for cfg in (config.get("strategies") or [])
    ]
    if len(strategies) < 2:
        raise ConfigError("compare needs at least two strategies")
    labels = _strategy_labels(strategies)
    for cfg, label in zip(strategies, labels):
        cfg["label"] = label
    baseline = config.get("baseline") or labels[0]
    if baseline not in labels:
        raise ConfigError(f"baseline {baseline!r} is not among strategies {labels}")
    resolved_corpus = []
    for entry in corpus:
        _, _, _, resolved_source = _build_source_and_state(
            entry, config.get("max_steps"), None
        )
        resolved_corpus.append(resolved_source)
    return {
        "type": COMPARE_CONFIG_TYPE,
        "version": CONFIG_VERSION,
        "corpus": resolved_corpus,
        "strategies": strategies,
        "baseline": baseline,
        "max_steps": config.get("max_steps"),
    }


def execute_compare(config: dict) -> dict:
    """Run every strategy over every corpus sequence and aggregate.

    Speedup is a steps ratio (baseline steps over strategy steps), reported
    as a proxy for throughput: the sources here are simulated, so only step
    counts carry meaning. Fidelity is measured against ground truth for
    synthetic sources and against the baseline's committed tokens for traces.
    """
    resolved = resolve_compare_config(config)
    labels = [cfg["label"] for cfg in resolved["strategies"]]
    baseline_label = resolved["baseline"]
    by_label = {cfg["label"]: cfg for cfg in resolved["strategies"]}
    ordered = [baseline_label] + [l for l in labels if l != baseline_label]

    sequences = []
    per_label_steps: dict[str, list[int]] = {l: [] for l in labels}
    per_label_fid: dict[str, list[float]] = {l: [] for l in labels}
    per_label_speedup: dict[str, list[float]] = {l: [] for l in labels}
    per_label_series: dict[str, list[list[int]]] = {l: [] for l in labels}

    for entry in resolved["corpus"]:
        if entry["kind"] == "synth":
            seq_id = f"seed-{entry['spec']['seed']}"
        else:
            seq_id = Path(entry["path"]).stem
        results: dict[str, RunMetrics] = {}
        baseline_tokens = None
        baseline_steps = None
        seq_payload: dict[str, dict] = {}
        for label in ordered:
            source, state, reference, _ = _build_source_and_state(
                entry, resolved["max_steps"], None
            )
            strategy = build_strategy(by_label[label])
            result = run(source, strategy, state)
            if label == baseline_label:
                baseline_tokens = tuple(
                    int(x) for x in result.state.tokens[result.state.prompt_len :]
                )
                baseline_steps = result.steps_used
            if reference is None:
                reference = baseline_tokens
            metrics = metrics_from_result(
                result,
                reference,
                baseline_steps=None if label == baseline_label else baseline_steps,
            )
            results[label] = metrics
            seq_payload[label] = metrics.to_dict()
            per_label_steps[label].append(metrics.steps_used)
            per_label_fid[label].append(metrics.fidelity)
            if metrics.speedup is not None:
                per_label_speedup[label].append(metrics.speedup)
            per_label_series[label].append(
                [len(r.decision.decode) + len(r.flushed) for r in result.reports]
            )
        sequences.append({"id": seq_id, "results": seq_payload})

    aggregates = {}
    for label in labels:
        agg = {
            "mean_steps": float(np.mean(per_label_steps[label])),
            "mean_fidelity": float(np.mean(per_label_fid[label])),
        }
        if label != baseline_label:
            agg["median_speedup"] = float(np.median(per_label_speedup[label]))
            agg["mean_speedup"] = float(np.mean(per_label_speedup[label]))
            agg["fidelity_delta"] = agg["mean_fidelity"] - float(
                np.mean(per_label_fid[baseline_label])
            )
        aggregates[label] = agg

    series = {}
    for label in labels:
        runs = per_label_series[label]
        width = max(len(r) for r in runs)
        padded = np.zeros((len(runs), width))
        for i, r in enumerate(runs):
            padded[i, : len(r)] = r
        series[label] = [float(x) for x in padded.mean(axis=0)]

    return {
        "schema": REPORT_SCHEMA,
        "kind": "compare",
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": resolved,
        "baseline": baseline_label,
        "sequences": sequences,
        "aggregates": aggregates,
        "series": series,
    }


# ---------------------------------------------------------------------------
# Corpus generation and report IO
# ---------------------------------------------------------------------------

TEMPLATE_TYPE = "corpus-template"


def template_to_dict(t: CorpusTemplate) -> dict:
    d = asdict(t)
    d["coupling"] = asdict(t.coupling)
    return {"type": TEMPLATE_TYPE, "version": CONFIG_VERSION, **d}


def template_from_dict(d: dict) -> CorpusTemplate:
    if d.get("type") not in (None, TEMPLATE_TYPE):
        raise ConfigError(f"not a corpus template: type={d.get('type')!r}")
    d = {k: v for k, v in d.items() if k not in ("type", "version")}
    if "coupling" in d:
        d["coupling"] = CouplingSpec(**d["coupling"])
    return CorpusTemplate(**d)


def gen_corpus(template: CorpusTemplate, count: int, seed: int, out_dir) -> list[Path]:
    """Write ``count`` synthetic spec files under seeds seed..seed+count-1."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        spec = build_spec(template, seed + k)
        path = out_dir / f"spec-{seed + k:05d}.json"
        write_spec(path, spec)
        paths.append(path)
    return paths


def load_corpus_dir(path) -> list[dict]:
    """Corpus source descriptors from a directory of spec files."""
    files = sorted(Path(path).glob("spec-*.json"))
    if not files:
        raise ConfigError(f"no spec-*.json files under {path}")
    return [{"kind": "synth", "spec": spec_to_dict(read_spec(f))} for f in files]


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(report: dict) -> list[str]:
    """Schema-conformance problems in a report document, empty when valid."""
    problems = []
    if report.get("schema") != REPORT_SCHEMA:
        problems.append(f"schema marker must be {REPORT_SCHEMA!r}")
    kind = report.get("kind")
    if kind not in ("run", "compare"):
        problems.append(f"kind must be run or compare, got {kind!r}")
    if "config" not in report:
        problems.append("missing embedded config")
    if kind == "run":
        for key in ("metrics", "tokens", "steps"):
            if key not in report:
                problems.append(f"run report missing {key!r}")
        metrics = report.get("metrics") or {}
        fid = metrics.get("fidelity")
        if fid is not None and not 0.0 <= fid <= 1.0:
            problems.append(f"fidelity {fid} outside [0, 1]")
        max_steps = (report.get("config") or {}).get("max_steps")
        if max_steps is not None and metrics.get("steps_used", 0) > max_steps:
            problems.append("steps_used exceeds max_steps")
    if kind == "compare":
        for key in ("sequences", "aggregates", "series", "baseline"):
            if key not in report:
                problems.append(f"compare report missing {key!r}")
        for seq in report.get("sequences", []):
            for label, m in seq.get("results", {}).items():
                sp = m.get("speedup")
                if sp is not None and not sp > 0:
                    problems.append(f"{seq.get('id')}/{label}: speedup must be > 0")
    return problems


def strip_timestamp(report: dict) -> dict:
    out = dict(report)
    out.pop("created_at", None)
    return out

"""Dynamic per-token remasking scheduler for diffusion LM decoding, with a
synthetic/trace-driven simulation harness."""

from .dynamics import (
    DynamicsConfig,
    TokenClass,
    TokenClassKind,
    classify_token,
    neighbor_weights,
    spatial_deviance,
    temporal_variance,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    IllegalOperationError,
    ReplayUnderrunError,
    StddError,
    StructuralError,
)
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
from .presets import PRESETS, StrategyPreset, get_preset
from .scheduler import (
    DusStrategy,
    FixedThresholdStrategy,
    RunResult,
    StddStrategy,
    StepDecision,
    StepReport,
    make_strategy,
    run,
)
from .state import ConfidenceHistory, SequenceState, StepObservation
from .synth import (
    Archetype,
    ArchetypeKind,
    CorpusTemplate,
    CouplingSpec,
    SyntheticSource,
    SynthSpec,
    build_spec,
    default_corpus,
    fidelity,
    synth_observe,
)
from .threshold import (
    BoundaryMode,
    ThresholdConfig,
    c_base,
    c_neighbour,
    dynamic_threshold,
    p_schedule,
)
from .trace import ReplaySource, TraceHeader, read_trace, validate_trace, write_trace

__version__ = "0.1.0"

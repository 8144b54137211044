"""Co-evolution state machine: a budgeted controller that watches a
research-software workspace, picks the next prompt from a fixed alphabet,
dispatches it to an executor, and enforces grounding discipline through
forced follow-ups, reactive triggers, and an adjacency gate on expansive
steps. Runs checkpoint after every transition and replay bit-exactly.
"""
from .alphabet import (
    ALPHABET,
    EXPANSIVE_FOLLOW_UPS,
    Phase,
    PromptSymbol,
    RenderError,
    Surface,
    follow_up,
    render_prompt,
    symbol,
)
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .controller import (
    AblationSwitches,
    Controller,
    ControllerState,
    GuardConfig,
    Mode,
    WeightTable,
    admissible,
    merge_forced,
    mode_transition,
    score,
    select,
)
from .ledger import AuditReport, ClaimRecord, Ledger, audit_claims
from .obligations import (
    AXES,
    DEFAULT_DECAY,
    ObligationVector,
    PushTable,
    decay_and_push,
    pressure,
    pressure_bound,
)
from .orchestrator import (
    ReplayReport,
    ResumeError,
    RunResult,
    prop1_violations,
    replay,
    resume,
    run,
)
from .workspace import (
    FEATURE_NAMES,
    DeficitTargets,
    FeatureVector,
    WorkspaceSummary,
    extract_features,
    summarize_workspace,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHABET",
    "AXES",
    "AblationSwitches",
    "AuditReport",
    "ClaimRecord",
    "ConfigError",
    "Controller",
    "ControllerState",
    "DEFAULT_DECAY",
    "DeficitTargets",
    "EXPANSIVE_FOLLOW_UPS",
    "FEATURE_NAMES",
    "FeatureVector",
    "GuardConfig",
    "Ledger",
    "Mode",
    "ObligationVector",
    "Phase",
    "PromptSymbol",
    "PushTable",
    "RenderError",
    "ReplayReport",
    "ResumeError",
    "RunConfig",
    "RunResult",
    "Surface",
    "WeightTable",
    "WorkspaceSummary",
    "admissible",
    "audit_claims",
    "config_from_dict",
    "decay_and_push",
    "extract_features",
    "follow_up",
    "load_config",
    "merge_forced",
    "mode_transition",
    "pressure",
    "pressure_bound",
    "prop1_violations",
    "render_prompt",
    "replay",
    "resume",
    "run",
    "score",
    "select",
    "summarize_workspace",
    "symbol",
    "__version__",
]

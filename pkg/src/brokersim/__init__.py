"""Deterministic bilateral freight-rate negotiation engine and experiment
harness: a monotone anchor-and-resume broker with spread-derived concession
speed, fixed-curve and tit-for-tat baselines, five carrier personas, dynamic
target shifts, and a natural-language adapter with a scripted mock endpoint.
"""

from .domain import (
    Load,
    ProtocolConfig,
    Spread,
    SpreadRegime,
    classify_regime,
    make_synthetic_load,
)
from .pricing import ShiftEvent, ShiftSchedule, apply_shift, gen_shift_schedule
from .strategy import (
    STRATEGY_KEYS,
    ConcessionCurve,
    TwoIndexState,
    adaptive_beta,
    apply_shift_two_index,
    broker_score,
    faratin_offer,
    gtft_offer,
    make_strategy,
    two_index_commit,
    two_index_offer,
)
from .carrier import (
    CARRIER_KEYS,
    PERSONAS,
    CarrierAgent,
    CarrierParams,
    CarrierResponse,
    ResponseKind,
    carrier_demand,
    carrier_respond,
)
from .protocol import (
    Outcome,
    OutcomeStatus,
    RoundRecord,
    Transcript,
    detect_retractions,
    run_negotiation,
)
from .metrics import (
    CellMetrics,
    StatTest,
    broker_savings,
    compute_cell_metrics,
    mean_ci,
    two_prop_z,
    wald_ci,
    welch_t,
)
from .harness import (
    ExperimentConfig,
    GridResult,
    emit_results,
    gen_load,
    replay_transcript,
    run_c_sweep,
    run_grid,
)
from .llm_adapter import (
    BROKER_PROMPT_TEMPLATE,
    EndpointConfig,
    ParsedTurn,
    PromptBundle,
    TurnIntent,
    chat_complete,
    parse_turn,
    render_broker_prompt,
    run_llm_negotiation,
)
from .seeding import rng_for, stream_seed

__version__ = "0.1.0"

__all__ = [
    "Load", "ProtocolConfig", "Spread", "SpreadRegime", "classify_regime",
    "make_synthetic_load",
    "ShiftEvent", "ShiftSchedule", "apply_shift", "gen_shift_schedule",
    "STRATEGY_KEYS", "ConcessionCurve", "TwoIndexState", "adaptive_beta",
    "apply_shift_two_index", "broker_score", "faratin_offer", "gtft_offer",
    "make_strategy", "two_index_commit", "two_index_offer",
    "CARRIER_KEYS", "PERSONAS", "CarrierAgent", "CarrierParams",
    "CarrierResponse", "ResponseKind", "carrier_demand", "carrier_respond",
    "Outcome", "OutcomeStatus", "RoundRecord", "Transcript",
    "detect_retractions", "run_negotiation",
    "CellMetrics", "StatTest", "broker_savings", "compute_cell_metrics",
    "mean_ci", "two_prop_z", "wald_ci", "welch_t",
    "ExperimentConfig", "GridResult", "emit_results", "gen_load",
    "replay_transcript", "run_c_sweep", "run_grid",
    "BROKER_PROMPT_TEMPLATE", "EndpointConfig", "ParsedTurn", "PromptBundle",
    "TurnIntent", "chat_complete", "parse_turn", "render_broker_prompt",
    "run_llm_negotiation",
    "rng_for", "stream_seed",
]

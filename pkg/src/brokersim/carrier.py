"""Carrier archetypes.

Each persona demands a fraction of the band [r_min, r_max] that falls over
the rounds.  Power personas follow demand_frac(t) = open - (t/T)^p * (open -
floor); the anchoring persona opens near the ceiling, drops once, then inches
down; the tit-for-tat persona mirrors whatever band fraction the broker
conceded last round.

Response rule for a broker offer: personas with a checkpoint round issue an
ultimatum there, closing at the broker's offer when it has reached their
threshold fraction of the band and walking away otherwise.  Before any
checkpoint a persona accepts an offer at or above its planned demand for the
round (the cooperative persona also takes anything at or above its floor
demand) and counters with the planned demand otherwise.  Carriers never see
the broker's internal band or any target shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .domain import Load, ProtocolConfig, Rate


@dataclass(frozen=True)
class CarrierParams:
    kind: str
    open_frac: float                      # opening demand, fraction of band
    floor_frac: float                     # terminal demand fraction
    curve_exponent: float | None = None   # p in (t/T)^p; None for non-power personas
    walkaway_round: int | None = None     # ultimatum round, inclusive onward
    walkaway_broker_frac: float | None = None
    accepts_floor_offers: bool = False    # cooperative: take anything >= floor demand

    def __post_init__(self) -> None:
        if not (0.0 <= self.floor_frac <= self.open_frac <= 1.0):
            raise ValueError("need 0 <= floor_frac <= open_frac <= 1")
        if (self.walkaway_round is None) != (self.walkaway_broker_frac is None):
            raise ValueError("walkaway round and threshold come together")


PERSONAS: dict[str, CarrierParams] = {
    "cooperative": CarrierParams(
        kind="cooperative", open_frac=0.30, floor_frac=0.02,
        curve_exponent=1.0, accepts_floor_offers=True,
    ),
    "tft": CarrierParams(kind="tft", open_frac=0.60, floor_frac=0.0),
    "deadline": CarrierParams(
        kind="deadline", open_frac=0.70, floor_frac=0.0, curve_exponent=5.0,
    ),
    "anchoring": CarrierParams(
        kind="anchoring", open_frac=0.95, floor_frac=0.0,
        walkaway_round=9, walkaway_broker_frac=0.50,
    ),
    "hardliner": CarrierParams(
        kind="hardliner", open_frac=0.90, floor_frac=0.0,
        curve_exponent=3.0, walkaway_round=8, walkaway_broker_frac=0.60,
    ),
}

CARRIER_KEYS = tuple(PERSONAS)

ANCHORING_STEP_FRAC = 0.02  # per-round concession after the initial drop


def carrier_demand(
    params: CarrierParams,
    round: int,
    load: Load,
    broker_history: list[Rate],
    config: ProtocolConfig,
) -> Rate:
    """Planned demand for `round`, given every broker offer seen so far
    (including this round's).  Pure in its inputs."""
    if round < 1 or round > config.max_rounds:
        raise ValueError(f"round {round} outside [1, {config.max_rounds}]")
    band = load.r_max - load.r_min
    frac = _demand_frac(params, round, broker_history, band, config)
    return load.r_min + frac * band


def _demand_frac(
    params: CarrierParams,
    round: int,
    broker_history: list[Rate],
    band: float,
    config: ProtocolConfig,
) -> float:
    T = config.max_rounds
    if params.kind == "tft":
        # Mirror the broker's band-fraction concessions; a retraction mirrors
        # as zero, demands never rise.
        conceded = 0.0
        for prev, cur in zip(broker_history, broker_history[1:]):
            conceded += max(0.0, cur - prev)
        frac = params.open_frac - conceded / band
    elif params.kind == "anchoring":
        if round == 1:
            frac = params.open_frac
        else:
            frac = (
                params.open_frac
                - config.anchoring_initial_drop_frac
                - ANCHORING_STEP_FRAC * (round - 2)
            )
    else:
        # Power curve; floor + remaining * (1 - alpha) hits the floor exactly
        # at the deadline.
        alpha = (round / T) ** params.curve_exponent
        frac = params.floor_frac + (params.open_frac - params.floor_frac) * (1.0 - alpha)
    return min(params.open_frac, max(params.floor_frac, frac))


class ResponseKind(Enum):
    ACCEPT = "accept"
    COUNTER = "counter"
    WALK_AWAY = "walk_away"


@dataclass(frozen=True)
class CarrierResponse:
    kind: ResponseKind
    rate: Rate | None = None  # agreed rate on accept, demand on counter


@dataclass
class CarrierState:
    round: int = 0
    current_demand: Rate | None = None
    last_broker_offer: Rate | None = None
    broker_offers: list[Rate] = field(default_factory=list)


def carrier_respond(
    params: CarrierParams,
    state: CarrierState,
    round: int,
    broker_offer: Rate,
    load: Load,
    config: ProtocolConfig,
) -> CarrierResponse:
    """Respond to the broker's offer for this round, updating state."""
    if not (load.r_min <= broker_offer <= load.r_max):
        raise ValueError(f"broker offer {broker_offer} outside [{load.r_min}, {load.r_max}]")
    state.round = round
    state.last_broker_offer = broker_offer
    state.broker_offers.append(broker_offer)
    band = load.r_max - load.r_min

    if params.walkaway_round is not None and round >= params.walkaway_round:
        # Ultimatum: close at the broker's number if it reached the threshold
        # share of the band, otherwise leave the table.
        threshold = load.r_min + params.walkaway_broker_frac * band
        if broker_offer >= threshold:
            return CarrierResponse(ResponseKind.ACCEPT, rate=broker_offer)
        return CarrierResponse(ResponseKind.WALK_AWAY)

    demand = carrier_demand(params, round, load, state.broker_offers, config)
    if state.current_demand is not None:
        demand = min(demand, state.current_demand)  # demands never rise
    state.current_demand = demand

    if broker_offer >= demand:
        return CarrierResponse(ResponseKind.ACCEPT, rate=broker_offer)
    if params.accepts_floor_offers:
        floor_demand = load.r_min + params.floor_frac * band
        if broker_offer >= floor_demand:
            return CarrierResponse(ResponseKind.ACCEPT, rate=broker_offer)
    return CarrierResponse(ResponseKind.COUNTER, rate=demand)


class CarrierAgent:
    """Thin stateful wrapper the protocol drives."""

    def __init__(self, key: str, load: Load, config: ProtocolConfig,
                 params: CarrierParams | None = None):
        if params is None:
            if key not in PERSONAS:
                raise ValueError(f"unknown carrier key: {key!r}")
            params = PERSONAS[key]
        self.key = key
        self.params = params
        self.load = load
        self.config = config
        self.state = CarrierState()

    def respond(self, round: int, broker_offer: Rate) -> CarrierResponse:
        return carrier_respond(self.params, self.state, round, broker_offer, self.load, self.config)

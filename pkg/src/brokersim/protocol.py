"""Alternating-offers negotiation over a fixed horizon.

Round order: any scheduled target shift lands first, then the broker compares
the carrier's standing counter against its own next offer and accepts the
better-scoring one, otherwise it sends the offer and the carrier answers with
accept / counter / walk-away.  The broker moves first every round, so its
earliest possible acceptance of a counter is round 2.  No agreement by the
deadline is an expiry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .carrier import CarrierAgent, CarrierParams, ResponseKind
from .domain import Load, ProtocolConfig, Rate
from .pricing import ShiftSchedule, apply_shift
from .strategy import broker_score, make_strategy


class OutcomeStatus(Enum):
    AGREED = "agreed"
    WALKED_AWAY = "walked_away"
    DEADLINE_EXPIRED = "deadline_expired"


@dataclass(frozen=True)
class RoundRecord:
    t: int
    broker_offer: Rate | None          # None when the broker took the standing counter
    carrier_action: str | None         # accept / counter / walk_away; None on broker accept
    carrier_rate: Rate | None          # counter demand or agreed rate
    current_target: Rate               # broker's target after any shift this round
    shift_multiplier: float | None
    case1_hold: bool
    tau: int | None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "broker_offer": self.broker_offer,
            "carrier_action": self.carrier_action,
            "carrier_rate": self.carrier_rate,
            "current_target": self.current_target,
            "shift_multiplier": self.shift_multiplier,
            "case1_hold": self.case1_hold,
            "tau": self.tau,
        }


@dataclass(frozen=True)
class Outcome:
    status: OutcomeStatus
    rounds_used: int
    agreed_rate: Rate | None = None
    accepted_by: str | None = None     # "broker" or "carrier"
    retraction_count: int = 0
    hold_count: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "rounds_used": self.rounds_used,
            "agreed_rate": self.agreed_rate,
            "accepted_by": self.accepted_by,
            "retraction_count": self.retraction_count,
            "hold_count": self.hold_count,
        }


@dataclass(frozen=True)
class Transcript:
    load: Load
    strategy: str
    carrier: str
    schedule: ShiftSchedule | None
    outcome: Outcome
    rounds: tuple
    meta: dict = field(default_factory=dict)

    def broker_offers(self) -> list[Rate]:
        return [r.broker_offer for r in self.rounds if r.broker_offer is not None]

    def to_dict(self) -> dict:
        return {
            "load": self.load.to_dict(),
            "strategy": self.strategy,
            "carrier": self.carrier,
            "schedule": self.schedule.to_dict() if self.schedule else None,
            "outcome": self.outcome.to_dict(),
            "rounds": [r.to_dict() for r in self.rounds],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def detect_retractions(offers: list[Rate], epsilon: float = 0.005) -> int:
    """Count rounds whose offer undercuts the previous one by more than
    epsilon dollars.  Epsilon absorbs float noise, not real concession."""
    count = 0
    for prev, cur in zip(offers, offers[1:]):
        if cur < prev - epsilon:
            count += 1
    return count


def run_negotiation(
    load: Load,
    strategy_key: str,
    carrier_key: str,
    schedule: ShiftSchedule | None,
    config: ProtocolConfig,
    rng=None,
    c: float | None = None,
    carrier_params: CarrierParams | None = None,
    meta: dict | None = None,
) -> Transcript:
    """Play one negotiation to termination and return its transcript.

    `rng` feeds strategy randomness (only gtft draws from it) and must be a
    fresh keyed stream per negotiation.  The carrier sees broker offers only;
    the schedule mutates just the broker's private target.
    """
    broker = make_strategy(strategy_key, load, config, rng=rng, c=c)
    carrier = CarrierAgent(carrier_key, load, config, params=carrier_params)
    current = load
    standing: Rate | None = None
    records: list[RoundRecord] = []
    outcome: Outcome | None = None

    for t in range(1, config.max_rounds + 1):
        event = schedule.event_at(t) if schedule else None
        if event is not None:
            current = apply_shift(current, event)
            broker.apply_shift(t, current.r_target)
        mult = event.multiplier if event else None

        candidate = broker.compute_offer(t)

        if standing is not None:
            rng_range = current.r_target - current.r_min
            if broker_score(standing, current.r_target, rng_range) >= broker_score(
                candidate, current.r_target, rng_range
            ):
                records.append(RoundRecord(
                    t=t, broker_offer=None, carrier_action=None, carrier_rate=standing,
                    current_target=current.r_target, shift_multiplier=mult,
                    case1_hold=broker.hold_active, tau=broker.tau,
                ))
                outcome = _finish(
                    OutcomeStatus.AGREED, t, broker, records, config,
                    agreed_rate=standing, accepted_by="broker",
                )
                break

        broker.commit_offer(t, candidate)
        response = carrier.respond(t, candidate)
        if response.kind == ResponseKind.COUNTER:
            broker.observe_carrier(t, response.rate)
            standing = response.rate

        records.append(RoundRecord(
            t=t, broker_offer=candidate, carrier_action=response.kind.value,
            carrier_rate=response.rate, current_target=current.r_target,
            shift_multiplier=mult, case1_hold=broker.hold_active, tau=broker.tau,
        ))

        if response.kind == ResponseKind.ACCEPT:
            outcome = _finish(
                OutcomeStatus.AGREED, t, broker, records, config,
                agreed_rate=candidate, accepted_by="carrier",
            )
            break
        if response.kind == ResponseKind.WALK_AWAY:
            outcome = _finish(OutcomeStatus.WALKED_AWAY, t, broker, records, config)
            break

    if outcome is None:
        outcome = _finish(
            OutcomeStatus.DEADLINE_EXPIRED, config.max_rounds, broker, records, config
        )

    return Transcript(
        load=load,
        strategy=strategy_key,
        carrier=carrier_key,
        schedule=schedule,
        outcome=outcome,
        rounds=tuple(records),
        meta=dict(meta or {}),
    )


def _finish(status, rounds_used, broker, records, config, agreed_rate=None, accepted_by=None):
    offers = [r.broker_offer for r in records if r.broker_offer is not None]
    return Outcome(
        status=status,
        rounds_used=rounds_used,
        agreed_rate=agreed_rate,
        accepted_by=accepted_by,
        retraction_count=detect_retractions(offers, config.retraction_epsilon),
        hold_count=broker.hold_count,
    )


def transcripts_to_jsonl(transcripts: list[Transcript]) -> str:
    return "".join(t.to_json() + "\n" for t in transcripts)


OFFER_CURVE_COLUMNS = (
    "strategy,carrier,spread_pct,load_id,repetition,t,broker_offer,"
    "carrier_rate,carrier_action,current_target,shift_multiplier,case1_hold,tau"
)


def offer_curve_rows(transcript: Transcript) -> list[str]:
    """Flat per-round rows for offer-curve plotting."""
    meta = transcript.meta
    out = []
    for r in transcript.rounds:
        out.append(",".join(str(v) if v is not None else "" for v in (
            transcript.strategy, transcript.carrier, meta.get("spread_pct"),
            transcript.load.id, meta.get("repetition"), r.t, r.broker_offer,
            r.carrier_rate, r.carrier_action, r.current_target,
            r.shift_multiplier, r.case1_hold, r.tau,
        )))
    return out

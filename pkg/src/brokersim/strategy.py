"""Broker concession strategies.

Three families:

* fixed-beta time-dependent concession (Boulware / Linear / Conceder): the
  offer at round t is r_min + (t/T)^(1/beta) * (r_target - r_min).  Under a
  target shift the curve endpoint moves but beta does not, which is what
  produces offer retractions.
* generous tit-for-tat: mirrors the carrier's last dollar concession, with a
  random generosity bump against stalling, never conceding past the current
  target and never below its own last offer.
* two-index: beta is derived from the spread each time the target moves, and
  after a shift the round clock t and a curve position index tau decouple.
  The curve position re-anchors so the next offer starts at or above the last
  one, which makes the offer sequence monotone under any shift sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .domain import Load, ProtocolConfig, Rate


def adaptive_beta(target_spread_frac: float, c: float) -> float:
    """beta = c / (100 * s) where s = (r_target - r_min) / r_min.

    Thin spreads give beta > 1 (concede early, close fast), wide spreads give
    beta < 1 (hold back, the band is worth fighting over).
    """
    if target_spread_frac <= 0:
        raise ValueError(f"target spread fraction must be positive, got {target_spread_frac}")
    if c <= 0:
        raise ValueError(f"calibration constant must be positive, got {c}")
    return c / (target_spread_frac * 100.0)


@dataclass(frozen=True)
class ConcessionCurve:
    beta: float
    r_min: Rate
    r_target: Rate
    horizon: int

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not (self.r_min < self.r_target):
            raise ValueError("need r_min < r_target")


def faratin_offer(curve: ConcessionCurve, round: int) -> Rate:
    """Time-dependent offer at integer position `round`.

    Exact at the deadline: round == horizon returns r_target with no float
    round-trip.  Positions past the horizon extrapolate the curve (callers
    clamp); position must be >= 1.
    """
    if round < 1:
        raise ValueError(f"round must be >= 1, got {round}")
    if round == curve.horizon:
        return curve.r_target
    alpha = (round / curve.horizon) ** (1.0 / curve.beta)
    return curve.r_min + alpha * (curve.r_target - curve.r_min)


def broker_score(x: Rate, r_target: Rate, concession_range: float) -> float:
    """V(x) = (r_target - x)/R: 1 at the floor, 0 at the target, negative above."""
    if concession_range <= 0:
        raise ValueError("concession range must be positive")
    return (r_target - x) / concession_range


@dataclass(frozen=True)
class GtftParams:
    stall_frac: float = 0.05
    generosity_prob: float = 0.30
    generosity_frac: float = 0.15


def gtft_offer(
    prev_offer: Rate,
    carrier_concession: float,
    ceiling: Rate,
    params: GtftParams,
    rng,
) -> Rate:
    """Mirror the carrier's dollar concession; on a stall, occasionally gift a
    fraction of the remaining room.  Result clamped to [prev_offer, ceiling].
    """
    if prev_offer > ceiling:
        raise ValueError("prev_offer above ceiling; hold instead of calling")
    if carrier_concession < 0:
        raise ValueError("carrier concession cannot be negative")
    room = ceiling - prev_offer
    candidate = prev_offer + carrier_concession
    if carrier_concession < params.stall_frac * room:
        if rng.random() < params.generosity_prob:
            candidate += params.generosity_frac * room
    return min(max(candidate, prev_offer), ceiling)


@dataclass(frozen=True)
class TwoIndexState:
    """Snapshot of the two-index engine after its latest committed round.

    t is the last round played (0 before the first), next_tau the curve
    position the next offer will use.  While no shift has occurred the two
    clocks agree: next_tau == t + 1.
    """

    curve: ConcessionCurve
    t: int = 0
    next_tau: int = 1
    last_offer: Rate | None = None
    hold_active: bool = False
    hold_count: int = 0

    @property
    def tau(self) -> int:
        return self.next_tau - 1


def two_index_offer(state: TwoIndexState) -> Rate:
    """Offer for round state.t + 1; does not advance the state."""
    if state.hold_active:
        return state.last_offer
    raw = faratin_offer(state.curve, state.next_tau)
    # Past the horizon the raw curve keeps climbing; the target is the cap.
    offer = min(raw, state.curve.r_target)
    if state.last_offer is not None:
        # The ceil anchor puts the resumed curve at or above the last offer in
        # real arithmetic; pow roundoff can still dip an ulp below at small
        # beta, so pin the guarantee here.
        offer = max(offer, state.last_offer)
    return offer


def two_index_commit(state: TwoIndexState, offer: Rate) -> TwoIndexState:
    held = state.hold_active
    return replace(
        state,
        t=state.t + 1,
        next_tau=state.next_tau if held else state.next_tau + 1,
        last_offer=offer,
        hold_count=state.hold_count + 1 if held else state.hold_count,
    )


def apply_shift_two_index(state: TwoIndexState, new_target: Rate, c: float) -> TwoIndexState:
    """Re-anchor the engine when the target moves at the start of a round.

    Case 1 (hold): the last offer already exceeds the new target.  Offers
    freeze at the last value; concede further and the money is simply lost,
    retract and the counterparty walks.

    Case 2 (resume): recompute beta from the new spread, find the virtual
    curve position alpha_0 the last offer occupies on the new curve, and
    restart the position clock at tau_0 = ceil(T * alpha_0^beta_new), the
    first integer position whose offer is at or above the last one.  tau may
    pass the horizon; the target cap takes over there.
    """
    if state.last_offer is None:
        raise ValueError("cannot shift before the first offer")
    curve = state.curve
    if state.last_offer > new_target:
        # Keep beta stale on purpose: it is recomputed on the next resume and
        # computing it here would divide by a possibly-zero spread.
        return replace(
            state,
            curve=replace(curve, r_target=new_target),
            hold_active=True,
        )
    beta_new = adaptive_beta((new_target - curve.r_min) / curve.r_min, c)
    new_curve = ConcessionCurve(
        beta=beta_new, r_min=curve.r_min, r_target=new_target, horizon=curve.horizon
    )
    range_new = new_target - curve.r_min
    alpha0 = (state.last_offer - curve.r_min) / range_new
    tau0 = math.ceil(curve.horizon * alpha0 ** beta_new)
    return replace(
        state,
        curve=new_curve,
        next_tau=max(tau0, 1),
        hold_active=False,
    )


class BrokerStrategy:
    """Per-negotiation strategy instance.  The protocol drives it with
    compute_offer / commit_offer / apply_shift / observe_carrier."""

    key = "base"
    uses_rng = False

    def __init__(self, load: Load, config: ProtocolConfig):
        self.load = load
        self.config = config
        self.current_target: Rate = load.r_target
        self.last_offer: Rate | None = None

    def compute_offer(self, round: int) -> Rate:
        raise NotImplementedError

    def commit_offer(self, round: int, offer: Rate) -> None:
        self.last_offer = offer

    def apply_shift(self, round: int, new_target: Rate) -> None:
        self.current_target = new_target

    def observe_carrier(self, round: int, demand: Rate) -> None:
        pass

    @property
    def hold_active(self) -> bool:
        return False

    @property
    def hold_count(self) -> int:
        return 0

    @property
    def tau(self) -> int | None:
        return None


class FixedBetaStrategy(BrokerStrategy):
    def __init__(self, load: Load, config: ProtocolConfig, beta: float, key: str = "fixed"):
        super().__init__(load, config)
        self.key = key
        self.curve = ConcessionCurve(
            beta=beta, r_min=load.r_min, r_target=load.r_target, horizon=config.max_rounds
        )

    def compute_offer(self, round: int) -> Rate:
        return faratin_offer(self.curve, round)

    def apply_shift(self, round: int, new_target: Rate) -> None:
        # Same beta, new endpoint: the whole curve rescales immediately, so a
        # downward shift drops the next offer below the last one (retraction).
        super().apply_shift(round, new_target)
        self.curve = replace(self.curve, r_target=new_target)


class TwoIndexStrategy(BrokerStrategy):
    key = "two-index"

    def __init__(self, load: Load, config: ProtocolConfig, c: float | None = None):
        super().__init__(load, config)
        self.c = config.calibration_constant if c is None else c
        beta = adaptive_beta((load.r_target - load.r_min) / load.r_min, self.c)
        self.state = TwoIndexState(
            curve=ConcessionCurve(
                beta=beta, r_min=load.r_min, r_target=load.r_target, horizon=config.max_rounds
            )
        )

    def compute_offer(self, round: int) -> Rate:
        return two_index_offer(self.state)

    def commit_offer(self, round: int, offer: Rate) -> None:
        self.state = two_index_commit(self.state, offer)
        self.last_offer = offer

    def apply_shift(self, round: int, new_target: Rate) -> None:
        super().apply_shift(round, new_target)
        self.state = apply_shift_two_index(self.state, new_target, self.c)

    @property
    def hold_active(self) -> bool:
        return self.state.hold_active

    @property
    def hold_count(self) -> int:
        return self.state.hold_count

    @property
    def tau(self) -> int | None:
        return self.state.next_tau


class GenerousTitForTatStrategy(BrokerStrategy):
    key = "gtft"
    uses_rng = True

    def __init__(self, load: Load, config: ProtocolConfig, rng):
        super().__init__(load, config)
        if rng is None:
            raise ValueError("gtft needs an rng stream")
        self.rng = rng
        self.params = GtftParams(
            stall_frac=config.gtft_stall_frac,
            generosity_prob=config.gtft_generosity_prob,
            generosity_frac=config.gtft_generosity_frac,
        )
        self.carrier_demands: list[Rate] = []

    def observe_carrier(self, round: int, demand: Rate) -> None:
        self.carrier_demands.append(demand)

    def _last_concession(self) -> float:
        if len(self.carrier_demands) < 2:
            return 0.0
        return max(0.0, self.carrier_demands[-2] - self.carrier_demands[-1])

    def compute_offer(self, round: int) -> Rate:
        if self.last_offer is None:
            return self.load.r_min
        ceiling = self.current_target
        if ceiling < self.last_offer:
            # Target dropped below what is already on the table: hold, never
            # retract.
            return self.last_offer
        return gtft_offer(self.last_offer, self._last_concession(), ceiling, self.params, self.rng)


STRATEGY_BETAS = {"boulware": 0.6, "linear": 1.0, "conceder": 2.0}
STRATEGY_KEYS = ("boulware", "linear", "conceder", "gtft", "two-index")


def make_strategy(
    key: str,
    load: Load,
    config: ProtocolConfig,
    rng=None,
    c: float | None = None,
) -> BrokerStrategy:
    """Build a fresh strategy instance. Keys: boulware, linear, conceder,
    gtft, two-index, or fixed:<beta> for exploration."""
    if key in STRATEGY_BETAS:
        return FixedBetaStrategy(load, config, beta=STRATEGY_BETAS[key], key=key)
    if key == "two-index":
        return TwoIndexStrategy(load, config, c=c)
    if key == "gtft":
        return GenerousTitForTatStrategy(load, config, rng=rng)
    if key.startswith("fixed:"):
        return FixedBetaStrategy(load, config, beta=float(key.split(":", 1)[1]), key=key)
    raise ValueError(f"unknown strategy key: {key!r}")

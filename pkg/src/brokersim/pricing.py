"""Mid-negotiation price shifts.

A shift rescales the broker's target premium over its floor: the new target is
r_min + multiplier * (r_target - r_min), clamped into [r_min, r_max].  One
shift per negotiation in grid experiments; property tests use up to five.
Schedules are pre-generated from a keyed stream so every strategy facing the
same (spread, load, repetition) sees the identical schedule, and carriers
never observe them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .domain import Load
from .seeding import rng_for

SHIFT_ROUND_MIN = 2
SHIFT_ROUND_MAX = 7
SHIFT_MAG_MIN = 0.05
SHIFT_MAG_MAX = 0.40
MAX_EVENTS = 5


@dataclass(frozen=True)
class ShiftEvent:
    round: int          # applied at the start of this round
    multiplier: float   # factor on the target premium, in [0.60,0.95]U[1.05,1.40]

    def __post_init__(self) -> None:
        if not (SHIFT_ROUND_MIN <= self.round <= SHIFT_ROUND_MAX):
            raise ValueError(f"shift round must be in [{SHIFT_ROUND_MIN}, {SHIFT_ROUND_MAX}]")
        mag = abs(self.multiplier - 1.0)
        if not (SHIFT_MAG_MIN <= mag <= SHIFT_MAG_MAX):
            raise ValueError(f"shift magnitude {mag} outside [{SHIFT_MAG_MIN}, {SHIFT_MAG_MAX}]")

    def to_dict(self) -> dict:
        return {"round": self.round, "multiplier": self.multiplier}

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftEvent":
        return cls(round=int(d["round"]), multiplier=float(d["multiplier"]))


@dataclass(frozen=True)
class ShiftSchedule:
    key: tuple          # (spread_pct, load_id, repetition)
    events: tuple       # ShiftEvent, rounds strictly increasing

    def __post_init__(self) -> None:
        if len(self.events) < 1:
            raise ValueError("schedule needs at least one event")
        if len(self.events) > MAX_EVENTS:
            raise ValueError(f"at most {MAX_EVENTS} events per schedule")
        rounds = [e.round for e in self.events]
        if rounds != sorted(set(rounds)):
            raise ValueError("event rounds must be strictly increasing")

    def event_at(self, round: int) -> ShiftEvent | None:
        for e in self.events:
            if e.round == round:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "key": {"spread_pct": self.key[0], "load_id": self.key[1], "repetition": self.key[2]},
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftSchedule":
        k = d["key"]
        return cls(
            key=(float(k["spread_pct"]), str(k["load_id"]), int(k["repetition"])),
            events=tuple(ShiftEvent.from_dict(e) for e in d["events"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "ShiftSchedule":
        return cls.from_dict(json.loads(s))

    def digest(self) -> str:
        """Stable content hash, used to verify controlled comparisons."""
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def gen_shift_schedule(
    key: tuple, master_seed: int, n_events: int = 1
) -> ShiftSchedule:
    """Deterministic schedule for (spread_pct, load_id, repetition).

    Rounds uniform over {2..7} (distinct when n_events > 1), direction a fair
    sign flip, magnitude uniform in [0.05, 0.40].
    """
    if not (1 <= n_events <= MAX_EVENTS):
        raise ValueError(f"n_events must be in [1, {MAX_EVENTS}]")
    spread_pct, load_id, repetition = key
    rng = rng_for(master_seed, "schedule", spread_pct, str(load_id), repetition)
    n_rounds = SHIFT_ROUND_MAX - SHIFT_ROUND_MIN + 1
    if n_events == 1:
        rounds = [int(rng.integers(SHIFT_ROUND_MIN, SHIFT_ROUND_MAX + 1))]
    else:
        perm = rng.permutation(n_rounds)[:n_events]
        rounds = sorted(int(SHIFT_ROUND_MIN + i) for i in perm)
    events = []
    for r in rounds:
        up = bool(rng.integers(0, 2))
        mag = float(rng.uniform(SHIFT_MAG_MIN, SHIFT_MAG_MAX))
        events.append(ShiftEvent(round=r, multiplier=1.0 + mag if up else 1.0 - mag))
    return ShiftSchedule(key=(float(spread_pct), str(load_id), int(repetition)), events=tuple(events))


def apply_shift(load: Load, event: ShiftEvent) -> Load:
    """Return the load with its target premium rescaled by the event.

    r_target' = clamp(r_min + multiplier * (r_target - r_min), r_min, r_max).
    Successive events compound on the current target.
    """
    shifted = load.r_min + event.multiplier * (load.r_target - load.r_min)
    new_target = min(max(shifted, load.r_min), load.r_max)
    return load.with_target(new_target)

"""Core value types: loads, spreads, spread regimes, protocol configuration.

Rates are plain floats internally (dollars); rounding to cents happens only
at serialization boundaries, half-up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

Rate = float

# Regime boundaries on the full spread percentage (r_max - r_min)/r_min * 100.
NARROW_MAX_PCT = 4.0
MEDIUM_MAX_PCT = 8.0


class SpreadRegime(Enum):
    NARROW = "narrow"
    MEDIUM = "medium"
    WIDE = "wide"


def classify_regime(full_spread_pct: float) -> SpreadRegime:
    """Narrow <= 4%, Medium (4%, 8%], Wide > 8%. Boundaries inclusive left."""
    if not full_spread_pct > 0:
        raise ValueError(f"spread percentage must be positive, got {full_spread_pct}")
    if full_spread_pct <= NARROW_MAX_PCT:
        return SpreadRegime.NARROW
    if full_spread_pct <= MEDIUM_MAX_PCT:
        return SpreadRegime.MEDIUM
    return SpreadRegime.WIDE


def rate_to_str(x: Rate) -> str:
    """Serialize a rate as a 2-decimal string, rounding half-up."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def rate_from_str(s: str) -> Rate:
    return float(s)


@dataclass(frozen=True)
class Load:
    """A lane with the broker's private rate band.

    r_min is the broker's floor (best case), r_max the walk-away ceiling,
    r_target the internal goal it concedes toward.
    """

    id: str
    origin: str
    destination: str
    r_min: Rate
    r_max: Rate
    r_target: Rate

    def __post_init__(self) -> None:
        if self.r_min <= 0:
            raise ValueError(f"r_min must be positive, got {self.r_min}")
        if not (self.r_min < self.r_max):
            raise ValueError(f"need r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if not (self.r_min < self.r_target <= self.r_max):
            raise ValueError(
                f"r_target must lie in (r_min, r_max], got {self.r_target} "
                f"for band [{self.r_min}, {self.r_max}]"
            )

    @property
    def band(self) -> float:
        return self.r_max - self.r_min

    @property
    def concession_range(self) -> float:
        """Distance from floor to target; the denominator of offer scoring."""
        return self.r_target - self.r_min

    def with_target(self, new_target: Rate) -> "Load":
        return replace(self, r_target=new_target)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "origin": self.origin,
            "destination": self.destination,
            "r_min": rate_to_str(self.r_min),
            "r_max": rate_to_str(self.r_max),
            "r_target": rate_to_str(self.r_target),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Load":
        return cls(
            id=d["id"],
            origin=d["origin"],
            destination=d["destination"],
            r_min=rate_from_str(d["r_min"]),
            r_max=rate_from_str(d["r_max"]),
            r_target=rate_from_str(d["r_target"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "Load":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class Spread:
    """Spread descriptors for a load."""

    full_spread_pct: float      # (r_max - r_min) / r_min * 100
    target_spread_frac: float   # (r_target - r_min) / r_min, drives beta

    @classmethod
    def from_load(cls, load: Load) -> "Spread":
        return cls(
            full_spread_pct=(load.r_max - load.r_min) / load.r_min * 100.0,
            target_spread_frac=(load.r_target - load.r_min) / load.r_min,
        )

    @property
    def regime(self) -> SpreadRegime:
        return classify_regime(self.full_spread_pct)


def make_synthetic_load(
    r_min: Rate,
    full_spread_pct: float,
    load_id: str = "L0",
    origin: str = "A",
    destination: str = "B",
) -> Load:
    """Build a load with r_max = r_min*(1 + S/100) and the target at the band
    midpoint, so the concession range is half the band."""
    if r_min <= 0:
        raise ValueError(f"r_min must be positive, got {r_min}")
    if full_spread_pct <= 0:
        raise ValueError(f"spread must be positive, got {full_spread_pct}")
    # Quantize to cents at creation so the 2-decimal serialized form is
    # lossless and replayed loads are bit-identical to generated ones.
    r_max = rate_from_str(rate_to_str(r_min * (1.0 + full_spread_pct / 100.0)))
    r_target = rate_from_str(rate_to_str(r_min + (r_max - r_min) / 2.0))
    return Load(
        id=load_id,
        origin=origin,
        destination=destination,
        r_min=float(r_min),
        r_max=float(r_max),
        r_target=float(r_target),
    )


@dataclass(frozen=True)
class ProtocolConfig:
    """Knobs shared by every negotiation."""

    max_rounds: int = 10
    retraction_epsilon: float = 0.005   # dollars; smaller drops are float noise
    calibration_constant: float = 3.0   # c in beta = c / (100 * s)
    gtft_stall_frac: float = 0.05
    gtft_generosity_prob: float = 0.30
    gtft_generosity_frac: float = 0.15
    anchoring_initial_drop_frac: float = 0.10  # of the band, at round 2

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.retraction_epsilon < 0:
            raise ValueError("retraction_epsilon must be >= 0")
        if self.calibration_constant <= 0:
            raise ValueError("calibration_constant must be positive")

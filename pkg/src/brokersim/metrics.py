"""Outcome metrics and the statistics used to compare strategies.

Savings normalize the agreed rate inside the original band: 1 at the floor,
0 at the ceiling.  Agreement CIs are Wald intervals, means get normal-approx
intervals, strategy comparisons use Welch's unequal-variance t-test and the
pooled two-proportion z-test.  The special functions are implemented here
directly (erfc-based normal, continued-fraction incomplete beta for the
t-distribution) so the test suite can check them against an independent
reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import Load, Rate
from .protocol import OutcomeStatus, Transcript

DEFAULT_LEVEL = 0.95


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_ppf(p: float) -> float:
    """Inverse standard normal CDF: coarse bisection, then Newton polish."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    lo, hi = -40.0, 40.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(4):
        err = normal_cdf(x) - p
        d = _normal_pdf(x)
        if d == 0.0:
            break
        x -= err / d
    return x


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta (Lentz's method).
    MAXIT, EPS, FPMIN = 200, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise RuntimeError("incomplete beta did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T_df| >= |t|) via the incomplete beta identity."""
    if df <= 0:
        raise ValueError("df must be positive")
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class StatTest:
    name: str
    statistic: float
    p_value: float
    df: float | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "statistic": self.statistic,
                "p_value": self.p_value, "df": self.df}


def wald_ci(p: float, n: int, level: float = DEFAULT_LEVEL) -> float:
    """Half-width of the Wald interval for a proportion."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"proportion must be in [0, 1], got {p}")
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = normal_ppf(0.5 + level / 2.0)
    return z * math.sqrt(p * (1.0 - p) / n)


def mean_ci(values: list[float], level: float = DEFAULT_LEVEL) -> float:
    """Normal-approximation half-width for a sample mean (sample std)."""
    n = len(values)
    if n < 2:
        return float("nan")
    m = sum(values) / n
    var = sum((v - m) ** 2 for v in values) / (n - 1)
    z = normal_ppf(0.5 + level / 2.0)
    return z * math.sqrt(var / n)


def welch_t(a: list[float], b: list[float]) -> StatTest:
    """Welch's unequal-variance t-test, two-sided, Welch-Satterthwaite df."""
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise ValueError("both samples need size >= 2")
    m1 = sum(a) / n1
    m2 = sum(b) / n2
    v1 = sum((x - m1) ** 2 for x in a) / (n1 - 1)
    v2 = sum((x - m2) ** 2 for x in b) / (n2 - 1)
    se2 = v1 / n1 + v2 / n2
    if se2 <= 0.0:
        raise ValueError("zero variance in both samples")
    t = (m1 - m2) / math.sqrt(se2)
    df = se2 ** 2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
    return StatTest(name="welch_t", statistic=t, p_value=student_t_two_sided_p(t, df), df=df)


def two_prop_z(k1: int, n1: int, k2: int, n2: int) -> StatTest:
    """Two-proportion z-test with pooled variance, two-sided."""
    for k, n in ((k1, n1), (k2, n2)):
        if n <= 0 or not (0 <= k <= n):
            raise ValueError(f"bad counts k={k}, n={n}")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var == 0.0:
        # All successes or all failures on both sides: no evidence of any
        # difference.
        return StatTest(name="two_prop_z", statistic=0.0, p_value=1.0)
    z = (p1 - p2) / math.sqrt(var)
    return StatTest(name="two_prop_z", statistic=z, p_value=math.erfc(abs(z) / math.sqrt(2.0)))


def broker_savings(load: Load, agreed_rate: Rate) -> float:
    """(r_max - agreed) / (r_max - r_min) on the original band."""
    band = load.r_max - load.r_min
    if band <= 0:
        raise ValueError("degenerate band")
    return (load.r_max - agreed_rate) / band


def transcript_savings(t: Transcript) -> float | None:
    if t.outcome.status is not OutcomeStatus.AGREED:
        return None
    return broker_savings(t.load, t.outcome.agreed_rate)


@dataclass(frozen=True)
class CellMetrics:
    """Aggregates for one (strategy, carrier, spread) cell or any pool."""

    n: int
    agreements: int
    agreement_rate: float
    agreement_ci: float
    mean_savings: float | None
    savings_ci: float | None
    mean_rounds: float | None
    rounds_ci: float | None
    retraction_rate: float
    hold_share: float
    mean_holds_per_affected: float | None
    agreement_rate_hold_affected: float | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "agreements": self.agreements,
            "agreement_rate": self.agreement_rate,
            "agreement_ci": self.agreement_ci,
            "mean_savings": self.mean_savings,
            "savings_ci": self.savings_ci,
            "mean_rounds": self.mean_rounds,
            "rounds_ci": self.rounds_ci,
            "retraction_rate": self.retraction_rate,
            "hold_share": self.hold_share,
            "mean_holds_per_affected": self.mean_holds_per_affected,
            "agreement_rate_hold_affected": self.agreement_rate_hold_affected,
        }


def compute_cell_metrics(transcripts: list[Transcript], level: float = DEFAULT_LEVEL) -> CellMetrics:
    if not transcripts:
        raise ValueError("no transcripts to aggregate")
    n = len(transcripts)
    savings = []
    rounds = []
    agreements = 0
    retractions = 0
    hold_affected = 0
    holds_total = 0
    hold_agreements = 0
    for t in transcripts:
        retractions += t.outcome.retraction_count
        held = t.outcome.hold_count > 0
        if held:
            hold_affected += 1
            holds_total += t.outcome.hold_count
        if t.outcome.status is OutcomeStatus.AGREED:
            agreements += 1
            savings.append(broker_savings(t.load, t.outcome.agreed_rate))
            rounds.append(float(t.outcome.rounds_used))
            if held:
                hold_agreements += 1
    rate = agreements / n
    return CellMetrics(
        n=n,
        agreements=agreements,
        agreement_rate=rate,
        agreement_ci=wald_ci(rate, n, level),
        mean_savings=sum(savings) / len(savings) if savings else None,
        savings_ci=mean_ci(savings, level) if len(savings) >= 2 else None,
        mean_rounds=sum(rounds) / len(rounds) if rounds else None,
        rounds_ci=mean_ci(rounds, level) if len(rounds) >= 2 else None,
        retraction_rate=retractions / n,
        hold_share=hold_affected / n,
        mean_holds_per_affected=holds_total / hold_affected if hold_affected else None,
        agreement_rate_hold_affected=hold_agreements / hold_affected if hold_affected else None,
    )

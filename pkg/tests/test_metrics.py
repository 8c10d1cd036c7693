import math

import numpy as np
import pytest
import scipy.stats
from statsmodels.stats.proportion import proportions_ztest

from brokersim.domain import Load
from brokersim.metrics import (
    CellMetrics,
    broker_savings,
    compute_cell_metrics,
    mean_ci,
    normal_cdf,
    normal_ppf,
    reg_inc_beta,
    student_t_two_sided_p,
    transcript_savings,
    two_prop_z,
    wald_ci,
    welch_t,
)
from brokersim.protocol import Outcome, OutcomeStatus, Transcript

LOAD = Load(id="L1", origin="A", destination="B",
            r_min=1800.0, r_max=2400.0, r_target=2100.0)


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


class TestSpecialFunctions:
    PS = [1e-10, 1e-6, 0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1 - 1e-6]

    def test_normal_ppf_against_reference(self):
        for p in self.PS:
            assert close(normal_ppf(p), scipy.stats.norm.ppf(p))

    def test_normal_ppf_round_trips_cdf(self):
        for p in self.PS:
            assert close(normal_cdf(normal_ppf(p)), p, tol=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.1])
    def test_normal_ppf_domain(self, p):
        with pytest.raises(ValueError):
            normal_ppf(p)

    def test_reg_inc_beta_against_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a = float(rng.uniform(0.5, 80.0))
            b = float(rng.uniform(0.5, 80.0))
            x = float(rng.uniform(0.0, 1.0))
            assert close(reg_inc_beta(a, b, x), scipy.stats.beta.cdf(x, a, b))
        assert reg_inc_beta(2.0, 3.0, 0.0) == 0.0
        assert reg_inc_beta(2.0, 3.0, 1.0) == 1.0

    def test_student_t_p_against_reference(self):
        for t in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]:
            for df in [1.0, 2.5, 10.0, 30.0, 147.3]:
                ref = 2.0 * scipy.stats.t.sf(abs(t), df)
                assert close(student_t_two_sided_p(t, df), ref)
        assert student_t_two_sided_p(0.0, 10.0) == 1.0
        with pytest.raises(ValueError):
            student_t_two_sided_p(1.0, 0.0)


class TestWaldCi:
    def test_headline_example(self):
        # agreement proportion 0.66 over a full 21k-run grid
        half = wald_ci(0.66, 21000)
        assert 0.0063 <= half <= 0.0065
        z = scipy.stats.norm.ppf(0.975)
        assert close(half, z * math.sqrt(0.66 * 0.34 / 21000))

    def test_against_reference_randomized(self):
        rng = np.random.default_rng(11)
        z = scipy.stats.norm.ppf(0.975)
        for _ in range(100):
            p = float(rng.uniform(0.0, 1.0))
            n = int(rng.integers(1, 100000))
            assert close(wald_ci(p, n), z * math.sqrt(p * (1 - p) / n))

    def test_validation(self):
        with pytest.raises(ValueError):
            wald_ci(1.2, 100)
        with pytest.raises(ValueError):
            wald_ci(0.5, 0)
        with pytest.raises(ValueError):
            wald_ci(0.5, 100, level=1.0)


class TestMeanCi:
    def test_nan_below_two(self):
        assert math.isnan(mean_ci([]))
        assert math.isnan(mean_ci([1.0]))

    def test_two_point_sample(self):
        # mean 2, sample var 2, se 1 -> half-width is just z
        assert close(mean_ci([1.0, 3.0]), scipy.stats.norm.ppf(0.975))

    def test_against_reference_randomized(self):
        rng = np.random.default_rng(13)
        z = scipy.stats.norm.ppf(0.975)
        for _ in range(50):
            xs = rng.normal(0.7, 0.2, size=int(rng.integers(2, 300))).tolist()
            ref = z * np.std(xs, ddof=1) / math.sqrt(len(xs))
            assert close(mean_ci(xs), float(ref))


class TestWelchT:
    def test_against_reference_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n1 = int(rng.integers(5, 200))
            n2 = int(rng.integers(5, 200))
            a = rng.normal(0.0, 1.0, n1) + rng.uniform(-0.5, 0.5)
            b = rng.normal(0.0, float(rng.uniform(0.5, 2.0)), n2)
            got = welch_t(a.tolist(), b.tolist())
            ref = scipy.stats.ttest_ind(a, b, equal_var=False)
            assert close(got.statistic, float(ref.statistic))
            assert close(got.p_value, float(ref.pvalue))

    def test_df_is_welch_satterthwaite(self):
        a = [1.0, 2.0, 3.0, 4.0]
        b = [1.0, 3.0, 5.0, 7.0, 9.0]
        got = welch_t(a, b)
        v1, v2 = np.var(a, ddof=1), np.var(b, ddof=1)
        se2 = v1 / 4 + v2 / 5
        df = se2**2 / ((v1 / 4) ** 2 / 3 + (v2 / 5) ** 2 / 4)
        assert close(got.df, float(df))

    def test_validation(self):
        with pytest.raises(ValueError):
            welch_t([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            welch_t([2.0, 2.0], [3.0, 3.0])


class TestTwoPropZ:
    def test_against_reference_randomized(self):
        rng = np.random.default_rng(19)
        done = 0
        while done < 100:
            n1 = int(rng.integers(20, 5000))
            n2 = int(rng.integers(20, 5000))
            k1 = int(rng.integers(0, n1 + 1))
            k2 = int(rng.integers(0, n2 + 1))
            if k1 + k2 == 0 or k1 + k2 == n1 + n2:
                continue  # degenerate pool has its own convention
            got = two_prop_z(k1, n1, k2, n2)
            z_ref, p_ref = proportions_ztest([k1, k2], [n1, n2])
            assert close(got.statistic, float(z_ref))
            assert close(got.p_value, float(p_ref))
            done += 1

    def test_grid_scale_comparison(self):
        # two-index agreements vs a baseline on a 6750-negotiation arm
        got = two_prop_z(5117, 6750, 145, 225)
        z_ref, p_ref = proportions_ztest([5117, 145], [6750, 225])
        assert close(got.statistic, float(z_ref))
        assert close(got.p_value, float(p_ref))
        assert got.statistic > 3.0 and got.p_value < 0.001

    def test_degenerate_pool_convention(self):
        assert two_prop_z(0, 10, 0, 20) == two_prop_z(10, 10, 20, 20)
        t = two_prop_z(0, 10, 0, 20)
        assert t.statistic == 0.0 and t.p_value == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            two_prop_z(5, 4, 1, 10)
        with pytest.raises(ValueError):
            two_prop_z(-1, 4, 1, 10)
        with pytest.raises(ValueError):
            two_prop_z(1, 0, 1, 10)


def _transcript(status, rate=None, rounds_used=5, holds=0, retractions=0):
    outcome = Outcome(
        status=status,
        rounds_used=rounds_used,
        agreed_rate=rate,
        accepted_by="carrier" if rate is not None else None,
        retraction_count=retractions,
        hold_count=holds,
    )
    return Transcript(load=LOAD, strategy="two-index", carrier="tft",
                      schedule=None, outcome=outcome, rounds=())


class TestSavings:
    def test_normalized_inside_original_band(self):
        assert broker_savings(LOAD, 2100.0) == pytest.approx(0.5)
        assert broker_savings(LOAD, 1800.0) == 1.0
        assert broker_savings(LOAD, 2400.0) == 0.0

    def test_transcript_savings_only_on_agreement(self):
        agreed = _transcript(OutcomeStatus.AGREED, rate=2010.0)
        assert transcript_savings(agreed) == pytest.approx(0.65)
        assert transcript_savings(_transcript(OutcomeStatus.WALKED_AWAY)) is None
        assert transcript_savings(_transcript(OutcomeStatus.DEADLINE_EXPIRED)) is None


class TestCellMetrics:
    def build(self):
        return [
            _transcript(OutcomeStatus.AGREED, rate=2100.0, rounds_used=3),
            _transcript(OutcomeStatus.AGREED, rate=1950.0, rounds_used=5, holds=2),
            _transcript(OutcomeStatus.AGREED, rate=2250.0, rounds_used=9),
            _transcript(OutcomeStatus.WALKED_AWAY, rounds_used=8, holds=3),
            _transcript(OutcomeStatus.DEADLINE_EXPIRED, rounds_used=10, retractions=1),
        ]

    def test_aggregates(self):
        m = compute_cell_metrics(self.build())
        assert m.n == 5 and m.agreements == 3
        assert m.agreement_rate == pytest.approx(0.6)
        assert m.agreement_ci == pytest.approx(wald_ci(0.6, 5))
        assert m.mean_savings == pytest.approx((0.5 + 0.75 + 0.25) / 3)
        assert m.mean_rounds == pytest.approx((3 + 5 + 9) / 3)
        assert m.retraction_rate == pytest.approx(0.2)
        assert m.hold_share == pytest.approx(0.4)
        assert m.mean_holds_per_affected == pytest.approx(2.5)
        assert m.agreement_rate_hold_affected == pytest.approx(0.5)

    def test_no_holds_gives_none(self):
        m = compute_cell_metrics([_transcript(OutcomeStatus.AGREED, rate=2100.0)])
        assert m.hold_share == 0.0
        assert m.mean_holds_per_affected is None
        assert m.agreement_rate_hold_affected is None
        assert m.savings_ci is None  # single agreement, no spread to estimate

    def test_no_agreements(self):
        m = compute_cell_metrics([_transcript(OutcomeStatus.WALKED_AWAY)])
        assert m.agreement_rate == 0.0
        assert m.mean_savings is None and m.mean_rounds is None

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_cell_metrics([])

    def test_round_trip_dict(self):
        m = compute_cell_metrics(self.build())
        d = m.to_dict()
        assert d["n"] == 5 and d["agreement_rate"] == pytest.approx(0.6)
        assert set(d) == {f.name for f in __import__("dataclasses").fields(CellMetrics)}

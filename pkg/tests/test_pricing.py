import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokersim.domain import make_synthetic_load
from brokersim.pricing import (
    MAX_EVENTS,
    SHIFT_MAG_MAX,
    SHIFT_MAG_MIN,
    SHIFT_ROUND_MAX,
    SHIFT_ROUND_MIN,
    ShiftEvent,
    ShiftSchedule,
    apply_shift,
    gen_shift_schedule,
)


class TestShiftEvent:
    @pytest.mark.parametrize("rnd", [2, 5, 7])
    def test_valid_rounds(self, rnd):
        ShiftEvent(round=rnd, multiplier=0.8)

    @pytest.mark.parametrize("rnd", [1, 0, 8, 11])
    def test_round_out_of_window(self, rnd):
        with pytest.raises(ValueError):
            ShiftEvent(round=rnd, multiplier=0.8)

    @pytest.mark.parametrize("mult", [0.60, 0.95, 1.05, 1.40])
    def test_magnitude_bounds_inclusive(self, mult):
        ShiftEvent(round=3, multiplier=mult)

    @pytest.mark.parametrize("mult", [1.0, 0.99, 1.04, 0.59, 1.41, 0.0])
    def test_magnitude_out_of_window(self, mult):
        with pytest.raises(ValueError):
            ShiftEvent(round=3, multiplier=mult)

    def test_dict_round_trip(self):
        e = ShiftEvent(round=4, multiplier=1.173)
        assert ShiftEvent.from_dict(e.to_dict()) == e


class TestShiftSchedule:
    KEY = (6.0, "S6-L0001", 0)

    def test_requires_events(self):
        with pytest.raises(ValueError):
            ShiftSchedule(key=self.KEY, events=())

    def test_caps_events(self):
        events = tuple(ShiftEvent(round=r, multiplier=1.1) for r in range(2, 8))
        assert len(events) == 6 > MAX_EVENTS
        with pytest.raises(ValueError):
            ShiftSchedule(key=self.KEY, events=events)

    def test_rounds_strictly_increasing(self):
        dup = (ShiftEvent(3, 1.1), ShiftEvent(3, 0.9))
        with pytest.raises(ValueError):
            ShiftSchedule(key=self.KEY, events=dup)
        unordered = (ShiftEvent(5, 1.1), ShiftEvent(3, 0.9))
        with pytest.raises(ValueError):
            ShiftSchedule(key=self.KEY, events=unordered)

    def test_event_at(self):
        s = ShiftSchedule(key=self.KEY, events=(ShiftEvent(3, 1.1), ShiftEvent(6, 0.8)))
        assert s.event_at(3).multiplier == 1.1
        assert s.event_at(6).multiplier == 0.8
        assert s.event_at(4) is None

    def test_json_round_trip(self):
        s = gen_shift_schedule(self.KEY, master_seed=2)
        assert ShiftSchedule.from_json(s.to_json()) == s

    def test_digest_stable_and_content_addressed(self):
        a = gen_shift_schedule(self.KEY, master_seed=2)
        b = gen_shift_schedule(self.KEY, master_seed=2)
        c = gen_shift_schedule((6.0, "S6-L0002", 0), master_seed=2)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert len(a.digest()) == 16
        int(a.digest(), 16)  # hex


class TestGenShiftSchedule:
    def test_deterministic_per_key(self):
        a = gen_shift_schedule((3.0, "x", 1), 7)
        assert a == gen_shift_schedule((3.0, "x", 1), 7)
        assert a != gen_shift_schedule((3.0, "x", 2), 7)
        assert a != gen_shift_schedule((3.0, "x", 1), 8)

    def test_single_event_window(self):
        for i in range(200):
            s = gen_shift_schedule((6.0, f"L{i}", 0), 11)
            (e,) = s.events
            assert SHIFT_ROUND_MIN <= e.round <= SHIFT_ROUND_MAX
            assert SHIFT_MAG_MIN <= abs(e.multiplier - 1.0) <= SHIFT_MAG_MAX

    def test_multi_event_rounds_distinct_sorted(self):
        for i in range(50):
            s = gen_shift_schedule((6.0, f"L{i}", 0), 11, n_events=4)
            rounds = [e.round for e in s.events]
            assert rounds == sorted(set(rounds))
            assert len(rounds) == 4

    def test_both_directions_occur(self):
        mults = [gen_shift_schedule((6.0, f"L{i}", 0), 11).events[0].multiplier
                 for i in range(100)]
        assert any(m > 1 for m in mults) and any(m < 1 for m in mults)

    @pytest.mark.parametrize("n", [0, 6])
    def test_n_events_bounds(self, n):
        with pytest.raises(ValueError):
            gen_shift_schedule((6.0, "L", 0), 11, n_events=n)


class TestApplyShift:
    LOAD = make_synthetic_load(1800, 6.0)  # 1800 / 1908, target 1854, premium 54

    def test_downward_rescales_premium(self):
        shifted = apply_shift(self.LOAD, ShiftEvent(3, 0.8))
        assert shifted.r_target == pytest.approx(1843.2)
        assert shifted.r_min == 1800.0 and shifted.r_max == 1908.0

    def test_upward_rescales_premium(self):
        shifted = apply_shift(self.LOAD, ShiftEvent(3, 1.25))
        assert shifted.r_target == pytest.approx(1867.5)

    def test_ceiling_clamp_under_compounding(self):
        load = self.LOAD
        for _ in range(5):
            load = apply_shift(load, ShiftEvent(3, 1.4))
        assert load.r_target == 1908.0  # premium 54 * 1.4^5 > band, clamped

    @given(
        spread=st.sampled_from([1.0, 4.0, 8.0, 20.0]),
        mults=st.lists(
            st.one_of(st.floats(0.60, 0.95), st.floats(1.05, 1.40)),
            min_size=1, max_size=5,
        ),
    )
    @settings(max_examples=200, deadline=None)
    def test_target_stays_inside_band(self, spread, mults):
        load = make_synthetic_load(2000, spread)
        for m in mults:
            load = apply_shift(load, ShiftEvent(3, m))
            assert load.r_min < load.r_target <= load.r_max

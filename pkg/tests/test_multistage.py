import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oampump.errors import Unrepresentable
from oampump.model import RiceMeleParams
from oampump.multistage import StagePlan, execute_plan, plan_bounds, plan_switch


class TestPlanSwitch:
    def test_512_base_10(self):
        plan = plan_switch(512, 10)
        assert plan.digits == (2, 1, 5)  # least significant first
        assert plan.as_dict()["digits_msb_first"] == [5, 1, 2]
        assert plan.total_time == 4.0
        assert plan.cycles == (1.0, 0.5, 2.5)
        assert plan.steps == (1, 10, 100)

    def test_zero(self):
        plan = plan_switch(0, 10, q=3)
        assert plan.digits == (0, 0, 0)
        assert plan.total_time == 0

    @pytest.mark.parametrize("q", range(1, 7))
    def test_powers_of_ten(self, q):
        plan = plan_switch(10**q, 10)
        assert plan.total_time <= 5 * q
        assert plan.stages <= q + 1

    def test_negative_digits_reverse(self):
        plan = plan_switch(-512, 10)
        assert plan.digits == (-2, -1, -5)
        assert plan.total_time == 4.0

    def test_balanced_beats_unsigned(self):
        u = plan_switch(99, 10)
        b = plan_switch(99, 10, mode="balanced")
        assert u.total_time == 9.0
        assert b.digits == (-1, 0, 1)
        assert b.total_time == 1.0

    def test_unrepresentable(self):
        with pytest.raises(Unrepresentable):
            plan_switch(1000, 10, q=3)
        with pytest.raises(Unrepresentable):
            plan_switch(999, 10, q=2, mode="balanced")

    @pytest.mark.parametrize("N", [0, 1, 2.5])
    def test_bad_base(self, N):
        with pytest.raises(ValueError):
            plan_switch(5, N)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            plan_switch(5, 10, mode="gray")

    def test_stageplan_validates(self):
        with pytest.raises(ValueError):
            StagePlan(12, 10, (3, 1))
        with pytest.raises(ValueError):
            StagePlan(12, 10, (12,))


class TestPlanProperties:
    @settings(max_examples=200)
    @given(st.integers(-10**6, 10**6), st.integers(2, 16), st.sampled_from(["unsigned", "balanced"]))
    def test_digits_sum(self, dl, N, mode):
        plan = plan_switch(dl, N, mode=mode)
        assert sum(c * N**n for n, c in enumerate(plan.digits)) == dl
        assert all(abs(c) <= N - 1 for c in plan.digits)
        assert plan.total_time == sum(abs(c) for c in plan.digits) / 2

    @settings(max_examples=200)
    @given(st.integers(-10**6, 10**6), st.integers(2, 16))
    def test_balanced_not_slower(self, dl, N):
        assert plan_switch(dl, N, mode="balanced").total_time <= plan_switch(dl, N).total_time

    @settings(max_examples=200)
    @given(st.integers(-10**6, 10**6), st.integers(2, 16))
    def test_balanced_digit_size(self, dl, N):
        plan = plan_switch(dl, N, mode="balanced")
        assert all(abs(c) <= math.ceil(N / 2) for c in plan.digits)

    @settings(max_examples=50)
    @given(st.integers(0, 3000), st.integers(2, 12))
    def test_balanced_is_optimal_small(self, dl, N):
        # brute force over carry choices: every digit is r or r - N
        best = None
        stack = [(dl, 0, 0)]
        while stack:
            rem, cost, depth = stack.pop()
            if rem == 0:
                best = cost if best is None else min(best, cost)
                continue
            if depth > 14:
                continue
            r = rem % N
            stack.append(((rem - r) // N, cost + r, depth + 1))
            if r:
                stack.append(((rem - r + N) // N, cost + N - r, depth + 1))
        assert sum(abs(c) for c in plan_switch(dl, N, mode="balanced").digits) == best


class TestBounds:
    def test_l_max_1000(self):
        stages, time = plan_bounds(1000, 10)
        assert stages == 3
        assert time == pytest.approx(15.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            plan_bounds(0, 10)
        with pytest.raises(ValueError):
            plan_bounds(10, 1)

    @settings(max_examples=60)
    @given(st.integers(2, 10**5), st.integers(2, 12), st.data())
    def test_plans_respect_bounds(self, l_max, N, data):
        stages, time = plan_bounds(l_max, N)
        for _ in range(20):
            dl = data.draw(st.integers(1, l_max - 1))
            plan = plan_switch(dl, N)
            assert plan.stages <= stages
            assert plan.total_time <= time + 1e-12

    def test_random_below_1000(self, rng):
        stages, time = plan_bounds(1000, 10)
        for dl in rng.integers(1, 1000, size=1000):
            plan = plan_switch(int(dl), 10)
            assert plan.stages <= stages and plan.total_time <= time


@pytest.mark.slow
class TestExecution:
    def test_single_stage(self):
        run = execute_plan(plan_switch(4, 10), RiceMeleParams(20.0, 1.0))
        assert run.center_of_mass == pytest.approx(4.0, abs=0.05)

    def test_two_stage_negative(self):
        run = execute_plan(plan_switch(-12, 10), RiceMeleParams(20.0, 1.0))
        assert run.center_of_mass == pytest.approx(-12.0, abs=0.1)
        assert [o.step for o in run.outcomes] == [1, 10]

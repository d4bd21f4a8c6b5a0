import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knoblab import rng

SEEDS = st.integers(min_value=0, max_value=2**63 - 1)
INDICES = st.integers(min_value=0, max_value=2**31)


@given(SEEDS, INDICES)
def test_mix64_in_range_and_deterministic(seed, index):
    value = rng.mix64(seed, index)
    assert 0 <= value < 2**64
    assert value == rng.mix64(seed, index)


@given(SEEDS, INDICES)
def test_uniform_in_unit_interval(seed, index):
    u = rng.uniform(seed, index)
    assert 0.0 <= u < 1.0


def test_mix64_distinct_counters_distinct_values():
    seen = {rng.mix64(42, i) for i in range(10_000)}
    assert len(seen) == 10_000


def test_uniform_mean_and_spread():
    draws = np.array([rng.uniform(9, i) for i in range(20_000)])
    assert abs(draws.mean() - 0.5) < 0.01
    assert abs(draws.var() - 1.0 / 12.0) < 0.005


def test_gaussian_moments():
    draws = np.array([rng.gaussian(5, 2 * i) for i in range(20_000)])
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 1.0) < 0.02


def test_gaussian_matches_box_muller_oracle():
    seed, index = 77, 10
    u1, u2 = rng.uniform(seed, index), rng.uniform(seed, index + 1)
    expected = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    assert rng.gaussian(seed, index) == expected


def test_counter_stream_matches_raw_counters():
    stream = rng.CounterStream(3)
    assert stream.next_uniform() == rng.uniform(3, 0)
    assert stream.next_gaussian() == rng.gaussian(3, 1)
    assert stream.next_uniform() == rng.uniform(3, 3)


def test_shuffle_is_permutation_and_deterministic():
    a = list(range(50))
    rng.CounterStream(11).shuffle(a)
    b = list(range(50))
    rng.CounterStream(11).shuffle(b)
    assert a == b
    assert sorted(a) == list(range(50))
    assert a != list(range(50))


def test_halton_first_points_match_radical_inverse_oracle():
    # van der Corput base 2: 1/2, 1/4, 3/4, ...; base 3: 1/3, 2/3, 1/9, ...
    zero = (0.0, 0.0, 0.0, 0.0)
    assert rng.halton4(0, zero) == pytest.approx((1 / 2, 1 / 3, 1 / 5, 1 / 7))
    assert rng.halton4(1, zero) == pytest.approx((1 / 4, 2 / 3, 2 / 5, 2 / 7))
    assert rng.halton4(2, zero) == pytest.approx((3 / 4, 1 / 9, 3 / 5, 3 / 7))


@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.0, max_value=1.0, exclude_max=True))
@settings(max_examples=50)
def test_halton_shift_wraps_into_unit_cube(index, shift):
    point = rng.halton4(index, (shift,) * 4)
    assert all(0.0 <= x < 1.0 for x in point)

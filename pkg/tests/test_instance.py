import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxvrp import instance as inst
from ctxvrp.rng import stream

DEPOT_ONLY = """TOY

VEHICLE
NUMBER     CAPACITY
  3         50

CUSTOMER
CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME

    0      0         0          0          0       100          0
"""


def test_c101_shape(c101):
    assert c101.name == "C101"
    assert len(c101.nodes) == 101
    assert c101.capacity == 200
    assert c101.nodes[0].tw_open == 0
    assert all(n.tw_open <= n.tw_close for n in c101.nodes)
    assert sum(n.demand for n in c101.nodes) == 1810


def test_depot_only():
    parsed = inst.parse_solomon(DEPOT_ONLY)
    assert parsed.n_customers == 0
    assert len(parsed.nodes) == 1


@pytest.mark.parametrize("mutate, line", [
    (lambda t: t.replace("  3         50", "  3"), 5),
    (lambda t: t.replace("    0      0         0          0          0       100          0",
                         "    0      0         zero       0          0       100          0"), 10),
    (lambda t: t.replace("    0      0         0          0          0       100          0",
                         "    1      0         0          0          0       100          0"), 10),
    (lambda t: t + "    1      1         1          5          0       100          0\n"
                   "    1      2         2          5          0       100          0\n", 12),
])
def test_parse_errors_carry_line_numbers(mutate, line):
    with pytest.raises(inst.SolomonFormatError) as err:
        inst.parse_solomon(mutate(DEPOT_ONLY))
    assert err.value.lineno == line


def test_missing_vehicle_section():
    with pytest.raises(inst.SolomonFormatError):
        inst.parse_solomon("TOY\n\nCUSTOMER\n0 0 0 0 0 1 0\n")


def test_travel_matrix_basics(c101):
    toy = inst.parse_solomon(DEPOT_ONLY + "    1      3         4          5          0       100          0\n")
    assert inst.build_travel_matrix(toy)[0, 1] == 5.0
    t = inst.build_travel_matrix(c101)
    assert np.all(np.diag(t) == 0)
    assert np.array_equal(t, t.T)
    with pytest.raises(ValueError):
        t[0, 1] = 1.0


def test_triangle_inequality_first_25(c101):
    t = inst.build_travel_matrix(c101)[:26, :26]
    assert np.all(t[:, None, :] <= t[:, :, None] + t[None, :, :].transpose(1, 0, 2) + 1e-9)


def test_mixture_weights_examples():
    assert np.allclose(inst.mixture_weights([7, 0.3, 0.3, 0.3, 0.3, 0.3]), 0.2, atol=1e-15)
    p = inst.mixture_weights([0, 1, 0, 0, 0, 0])
    assert math.isclose(p[0], math.e / (math.e + 4), rel_tol=1e-12)
    assert math.isclose(p[1], 1 / (math.e + 4), rel_tol=1e-12)
    assert round(p[0], 5) == 0.40461 and round(p[1], 5) == 0.14885


@given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.floats(-5, 5))
def test_mixture_weights_shift_invariant(f, c):
    p = inst.mixture_weights([0] + f)
    q = inst.mixture_weights([0] + [x + c for x in f])
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all((p > 0) & (p < 1))
    assert np.allclose(p, q, atol=1e-12)


def test_augment(c101):
    aug = inst.augment(c101, 11)
    assert aug.capacity == 100 and aug.original_capacity == 200
    assert aug.feature(1)[0] == c101.nodes[1].demand == 10
    assert aug.features[:, 1:].min() >= 0 and aug.features[:, 1:].max() <= 1
    assert aug == inst.augment(c101, 11)
    assert inst.to_json(aug) == inst.to_json(inst.augment(c101, 11))
    assert aug != inst.augment(c101, 12)
    assert inst.from_json(inst.to_json(aug)) == aug


def test_sampler_non_negative_and_centred(c101_aug):
    # customer 63 has nominal demand 50; flatten its mixture to equal weights
    aug = c101_aug
    w = np.array(aug.mixture_weights)
    w[62] = 0.2
    flat = inst.AugmentedInstance(aug.base, np.array(aug.features), w, aug.seed, aug.original_capacity)
    draws = inst.sample_demands(flat, 63, 10_000, stream(0, 99))
    assert draws.min() >= 0
    assert abs(draws.mean() - 50) <= 0.5
    assert draws.min() >= 50 - 10 - 5 and draws.max() <= 50 + 10 + 5


def test_sampler_multimodal(c101_aug):
    draws = inst.sample_demands(c101_aug, 63, 10_000, stream(1, 99))
    hist, _ = np.histogram(draws, bins=np.arange(30, 71, 2.5))
    peaks = [k for k in range(1, len(hist) - 1) if hist[k] > hist[k - 1] and hist[k] >= hist[k + 1]]
    assert len(peaks) >= 2


def test_scalar_sampler_matches_mean(c101_aug):
    g = stream(3, 99)
    draws = [inst.sample_demand(c101_aug, 5, g) for _ in range(4000)]
    # customer 5 has nominal demand 10, so truncation is active
    assert min(draws) >= 0
    assert abs(np.mean(draws) - inst.truncated_mixture_mean(c101_aug, 5)) < 0.3


def test_rejection_cap():
    aug = inst.augment(inst.parse_solomon(DEPOT_ONLY + "    1      3         4          0          0       100          0\n"), 0)
    feats = np.array(aug.features)
    feats[0, 0] = -1000.0
    bad = inst.AugmentedInstance(aug.base, feats, aug.mixture_weights, 0, aug.original_capacity)
    with pytest.raises(RuntimeError):
        inst.sample_demand(bad, 1, stream(0, 1))
    with pytest.raises(RuntimeError):
        inst.sample_demands(bad, 1, 3, stream(0, 1))


def test_history_settings(c101_aug):
    h = inst.generate_history(c101_aug, "all", 30, 5)
    assert h.record_count == 3000
    q = inst.generate_history(c101_aug, "quar", 1, 5)
    assert all(len(q.values[i]) == 1 for i in range(76, 101))
    assert all(len(q.values.get(i, ())) == 0 for i in range(1, 76))
    half = inst.generate_history(c101_aug, "half", 10, 5)
    assert set(half.observed()) == set(range(51, 101))
    assert all(v >= 0 for vals in h.values.values() for v in vals)
    assert inst.history_to_json(h) == inst.history_to_json(inst.generate_history(c101_aug, "all", 30, 5))
    assert inst.history_from_json(inst.history_to_json(q)) == q


def test_history_prefix_nesting(c101_aug):
    h1 = inst.generate_history(c101_aug, "all", 1, 9)
    h30 = inst.generate_history(c101_aug, "all", 30, 9)
    assert all(h30.values[i][:1] == h1.values[i] for i in range(1, 101))


def test_history_split_needs_divisible_count(c101_aug):
    with pytest.raises(ValueError):
        inst.generate_history(inst.take_first(c101_aug, 25), "half", 10, 0)


def test_take_first(c101_aug):
    sub = inst.take_first(c101_aug, 25)
    assert sub.n_customers == 25 and sub.base.nodes[0] == c101_aug.base.nodes[0]
    assert np.array_equal(sub.features, c101_aug.features[:25])
    assert inst.take_first(c101_aug, 100) == c101_aug
    assert inst.take_first(c101_aug, 1).n_customers == 1
    with pytest.raises(ValueError):
        inst.take_first(c101_aug, 0)
    with pytest.raises(ValueError):
        inst.take_first(c101_aug, 101)


def test_select_customers_renumbers(c101_aug):
    sub = inst.select_customers(c101_aug, [40, 3])
    assert [n.id for n in sub.base.nodes] == [0, 1, 2]
    assert sub.base.nodes[1].x == c101_aug.base.nodes[40].x
    assert np.array_equal(sub.features[1], c101_aug.features[2])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(inst.SETTINGS), st.sampled_from(inst.OBS_COUNTS))
def test_history_is_pure(c101_aug, seed, setting, n):
    a = inst.generate_history(c101_aug, setting, n, seed)
    b = inst.generate_history(c101_aug, setting, n, seed)
    assert a == b

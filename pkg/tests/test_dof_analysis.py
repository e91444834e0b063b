import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from andnet.dof_analysis import (
    SCHEMES,
    MimoProfile,
    baseline_table,
    dof_formula,
    estimate_dof_slope,
    mimo_reduction,
    mimo_region_contains,
    mimo_relay_diagonalization,
    multihop_dof,
    neutralization_order,
)


def test_formula_examples():
    assert dof_formula("x-channel", 3) == Fraction(9, 5)
    assert dof_formula("neutralization", 3) == 2
    assert (dof_formula("and", 7), dof_formula("neutralization", 7)) == (7, 3)
    assert dof_formula("interference-channel", 5) == Fraction(5, 2)
    with pytest.raises(ValueError):
        dof_formula("relaying", 2)
    with pytest.raises(ValueError):
        dof_formula("and", 0)


def test_neutralization_wins_only_at_three():
    wins = [K for K in range(2, 11)
            if dof_formula("neutralization", K) > max(dof_formula("interference-channel", K),
                                                     dof_formula("x-channel", K))]
    assert wins == [3]


def test_neutralization_order_by_enumeration():
    for K in range(1, 60):
        assert neutralization_order(K) == max(N for N in range(1, K + 1) if N * (N - 1) + 1 <= K)


def test_single_pair_values():
    for s in ("tdma", "x-channel", "neutralization", "and"):
        assert dof_formula(s, 1) == 1
    assert dof_formula("interference-channel", 1) == Fraction(1, 2)


def test_and_dominates():
    for row in baseline_table(20, 2):
        others = [row[s] for s in SCHEMES if s != "and"]
        assert row["and"] > max(others)
    assert [r["K"] for r in baseline_table(4)] == [1, 2, 3, 4]


def test_slope_of_exact_line():
    P = np.logspace(0, 8, 9)
    rates = 1.7 + 0.64 * 0.5 * np.log2(P)
    est = estimate_dof_slope(P, rates)
    assert abs(est.slope - 0.64) < 1e-10
    assert est.half_width < 1e-9
    assert est.points == 5


def test_slope_of_constant_rates():
    est = estimate_dof_slope(np.logspace(1, 7, 7), np.full(7, 3.0))
    assert abs(est.slope) < 1e-12


def test_slope_uses_upper_grid_only():
    P = np.logspace(0, 8, 9)
    rates = 0.5 * np.log2(P)
    rates[:4] = 100.0  # the lower half must not enter the fit
    assert estimate_dof_slope(P[::-1], rates[::-1]).slope == pytest.approx(1.0)


def test_slope_interval_covers():
    rng = np.random.default_rng(0)
    P = np.logspace(0, 10, 21)
    hits = 0
    for _ in range(400):
        rates = 2.0 * 0.5 * np.log2(P) + rng.normal(0, 0.3, P.size)
        est = estimate_dof_slope(P, rates)
        hits += abs(est.slope - 2.0) <= est.half_width
    assert 0.92 <= hits / 400 <= 0.98


def test_slope_grid_requirements():
    with pytest.raises(ValueError):
        estimate_dof_slope([1, 10, 100], [1, 2, 3])
    with pytest.raises(ValueError):
        estimate_dof_slope([1, 10, 100, 1000], [1, 2, 3, 4])  # only 3 decades
    with pytest.raises(ValueError):
        estimate_dof_slope([0, 10, 100, 1e5], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        estimate_dof_slope([1, 10, 100, 1e5], [1, 2, 3])


def test_region_examples():
    prof = MimoProfile((2, 2), (2, 1), (3,))
    assert mimo_region_contains(prof, (0, 0)) == (True, [])
    assert mimo_region_contains(prof, (2, 1))[0]
    ok, why = mimo_region_contains(prof, (2, 1.5))
    assert not ok and len(why) == 2
    assert any("d[1]" in v for v in why) and any("sum" in v for v in why)
    with pytest.raises(ValueError):
        mimo_region_contains(prof, (1,))


profiles = st.builds(
    lambda k, ms, md, mv: MimoProfile(ms[:k], md[:k], mv),
    st.integers(1, 4),
    st.lists(st.integers(1, 4), min_size=4, max_size=4),
    st.lists(st.integers(1, 4), min_size=4, max_size=4),
    st.lists(st.integers(1, 4), min_size=1, max_size=4),
)


@given(prof=profiles, data=st.data())
def test_region_is_downward_closed(prof, data):
    d = data.draw(st.lists(st.floats(0, 5), min_size=prof.K, max_size=prof.K))
    shrink = data.draw(st.lists(st.floats(0, 1), min_size=prof.K, max_size=prof.K))
    if mimo_region_contains(prof, d)[0]:
        assert mimo_region_contains(prof, [a * s for a, s in zip(d, shrink)])[0]


def test_reduction_examples():
    one = mimo_reduction(MimoProfile((1,), (1,), (1,)), (1,))
    assert one.K == 1
    assert one.discarded_sources == [0] and one.discarded_relays == [0]
    assert one.discarded_destinations == [0]
    four = mimo_reduction(MimoProfile((2, 2), (2, 2), (2, 2)), (2, 2))
    assert four.K == 4 and len(four.relays) == 4 and sum(four.discarded_relays) == 0
    three = mimo_reduction(MimoProfile((2, 2), (2, 2), (2, 2)), (2, 1))
    assert three.K == 3 and three.discarded_relays == [0, 1]
    assert three.relays == [(0, 0), (0, 1), (1, 0)]
    assert three.discarded_sources == [0, 1]
    with pytest.raises(ValueError):
        mimo_reduction(MimoProfile((2, 2), (2, 1), (3,)), (2, 2))
    with pytest.raises(ValueError):
        mimo_reduction(MimoProfile((2, 2), (2, 1), (3,)), (1.5, 1))


@given(prof=profiles, data=st.data())
def test_reduction_is_balanced(prof, data):
    d = [data.draw(st.integers(0, min(s, t))) for s, t in zip(prof.M_S, prof.M_D)]
    if sum(d) > prof.relay_antennas:
        return
    red = mimo_reduction(prof, d)
    assert red.K == len(red.sources) == len(red.relays) == len(red.destinations) == sum(d)
    assert sum(red.discarded_relays) == prof.relay_antennas - sum(d)
    assert len(set(red.relays)) == red.K


def test_multihop_examples():
    assert multihop_dof((5, 3), 4) == 3
    assert multihop_dof((7,), 2) == 2
    assert multihop_dof((5, 5, 5), 5) == 5
    assert multihop_dof((), 3) == 3
    with pytest.raises(ValueError):
        multihop_dof((0, 2), 2)


def test_relay_diagonalization():
    x = np.array([1.0, -2.0, 3.0])
    assert np.allclose(mimo_relay_diagonalization(np.eye(3), np.eye(3), x), x)
    rng = np.random.default_rng(4)
    for _ in range(20):
        A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        if min(np.linalg.cond(A), np.linalg.cond(B)) > 1e6:
            continue
        out = mimo_relay_diagonalization(A, B, x)
        assert np.max(np.abs(out - x)) <= 1e-10 * max(np.linalg.cond(A) * np.linalg.cond(B), 1.0)
    with pytest.raises(ValueError):
        mimo_relay_diagonalization(np.ones((2, 2)), np.eye(2), [1, 1])
    with pytest.raises(ValueError):
        mimo_relay_diagonalization(np.eye(2), np.ones((2, 3)), [1, 1])


def test_relay_diagonalization_noise_passes_through():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    z = np.array([0.1, -0.2])
    out = mimo_relay_diagonalization(A, np.eye(2), [0.0, 0.0], relay_noise=z)
    assert np.allclose(out, np.linalg.solve(A, z))
    assert math.isclose(mimo_relay_diagonalization(A, A, [0, 0], dest_noise=[0.5, 0])[0], 0.5)

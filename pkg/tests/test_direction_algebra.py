import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from andnet.direction_algebra import (
    EnvelopeError,
    build_direction_matrix,
    check_monomial_independence,
    check_tilde_independence,
    compute_u,
    enumerate_delta,
    eval_direction,
    eval_tilde_direction,
    is_singular,
    log_abs_det,
    monomials,
    relay_sum_aligned,
    relay_sum_factored,
    shift,
    shift_map,
    support,
    tilde_gains,
)

KN = st.sampled_from([(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (3, 1)])
gain = st.floats(0.5, 2.0)


def gains_for(K):
    return arrays(float, (K, K), elements=gain)


def naive_monomial(s, H):
    """Product over (i, j) of H[j, i] ** s[i*K + j], written out directly."""
    K = H.shape[0]
    out = 1.0
    for i in range(K):
        for j in range(K):
            out *= H[j, i] ** int(s[i * K + j])
    return out


@pytest.mark.parametrize("K, N", [(1, 1), (1, 4), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_enumeration_is_a_lexicographic_bijection(K, N):
    D = enumerate_delta(K, N)
    assert len(D) == N ** (K * K)
    assert len({tuple(m) for m in D.members}) == len(D)
    assert all(D.index(m) == k for k, m in enumerate(D.members))
    expected = list(itertools.product(range(N), repeat=K * K))
    assert [tuple(m) for m in D.members] == expected


def test_enumeration_membership_and_cap():
    D = enumerate_delta(2, 2)
    assert [0, 1, 1, 0] in D and [0, 2, 0, 0] not in D
    with pytest.raises(KeyError):
        D.index([0, 2, 0, 0])
    with pytest.raises(EnvelopeError):
        enumerate_delta(4, 3)
    with pytest.raises(ValueError):
        enumerate_delta(0, 1)


def test_direction_examples():
    H = np.array([[2.0, 3.0], [5.0, 7.0]])  # H[j, i]: gain i -> j
    # exponent order (11, 12, 21, 22) = (h_S1V1, h_S1V2, h_S2V1, h_S2V2)
    assert eval_direction([0, 0, 0, 0], H) == 1.0
    assert eval_direction([1, 0, 0, 0], H) == 2.0
    assert eval_direction([0, 1, 0, 0], H) == 5.0
    assert eval_direction([0, 0, 1, 0], H) == 3.0
    assert eval_direction([1, 1, 1, 1], H) == 210.0
    assert eval_direction([2, 0, 0, 1], H) == 28.0


@given(data=st.data(), KN=KN)
def test_monomials_match_direct_products(data, KN):
    K, N = KN
    H = data.draw(arrays(float, (K, K), elements=st.floats(-3.0, 3.0)))
    D = enumerate_delta(K, N + 1)
    vals = monomials(D.members, H)
    for s, v in zip(D.members, vals):
        ref = naive_monomial(s, H)
        assert v == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_log_domain_path_agrees():
    rng = np.random.default_rng(0)
    H = rng.uniform(-30, 30, size=(5, 2, 2))  # large gains take the log path
    D = enumerate_delta(2, 3)
    vals = monomials(D.members, H)
    ref = np.array([[naive_monomial(s, h) for s in D.members] for h in H])
    np.testing.assert_allclose(vals, ref, rtol=1e-12)
    H0 = H.copy()
    H0[0, 0, 0] = 0.0
    vals0 = monomials(D.members, H0)
    ref0 = np.array([naive_monomial(s, H0[0]) for s in D.members])
    np.testing.assert_allclose(vals0[0], ref0, rtol=1e-12)


@given(data=st.data(), KN=KN)
def test_shift_law(data, KN):
    K, N = KN
    H = data.draw(gains_for(K))
    i, j = data.draw(st.integers(0, K - 1)), data.draw(st.integers(0, K - 1))
    inner = enumerate_delta(K, N)
    s = inner.members[data.draw(st.integers(0, len(inner) - 1))]
    lhs = eval_direction(shift(s, i, j), H)
    rhs = H[j, i] * eval_direction(s, H)
    assert abs(lhs - rhs) <= 4 * np.spacing(abs(rhs))


@given(data=st.data(), KN=KN)
def test_tilde_shift_law(data, KN):
    K, N = KN
    G = data.draw(gains_for(K))
    if is_singular(G):
        return
    B = tilde_gains(G)
    i, j = data.draw(st.integers(0, K - 1)), data.draw(st.integers(0, K - 1))
    inner = enumerate_delta(K, N)
    s = inner.members[data.draw(st.integers(0, len(inner) - 1))]
    lhs = eval_tilde_direction(shift(s, i, j), B)
    rhs = B[j, i] * eval_tilde_direction(s, B)
    assert abs(lhs - rhs) <= 4 * np.spacing(abs(rhs))


def test_cofactor_oracle():
    rng = np.random.default_rng(1)
    for K in (1, 2, 3):
        G = rng.uniform(0.5, 2.0, size=(K, K))
        B = tilde_gains(G)
        det = np.linalg.det(G)
        for i in range(K):
            for j in range(K):
                minor = np.delete(np.delete(G, i, axis=0), j, axis=1)
                cof = (-1) ** (i + j) * (np.linalg.det(minor) if K > 1 else 1.0)
                # b_ij sits at B[j, i]; adjugate identity inv(G)[j, i] = C_ij / det
                assert B[j, i] == pytest.approx(cof / det, rel=1e-12)


@pytest.mark.parametrize("K, N", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_shift_map_and_support(K, N):
    inner, outer = enumerate_delta(K, N), enumerate_delta(K, N + 1)
    smap = shift_map(K, N)
    for i in range(K):
        for j in range(K):
            for k, s in enumerate(inner.members):
                assert smap[i, j, k] == outer.index(shift(s, i, j))
    for j in range(K):
        sup = support(K, N, j)
        assert len(sup) <= K * len(inner)
        assert set(sup) == set(smap[:, j, :].ravel())
        if N == 1:
            assert len(sup) == K


@given(data=st.data(), KN=KN)
def test_alignment_identity(data, KN):
    K, N = KN
    H = data.draw(gains_for(K))
    inner, outer = enumerate_delta(K, N), enumerate_delta(K, N + 1)
    c = data.draw(arrays(float, (K, len(inner)), elements=st.floats(-5, 5)))
    T_in, T_out = monomials(inner.members, H), monomials(outer.members, H)
    for j in range(K):
        direct = sum(H[j, i] * (T_in @ c[i]) for i in range(K))
        aligned = T_out @ compute_u(c, j, N)
        scale = sum(abs(H[j, i]) * (np.abs(T_in) @ np.abs(c[i])) for i in range(K))
        assert abs(direct - aligned) <= 1e-12 * max(scale, 1e-300)


@given(data=st.data(), KN=KN)
def test_relay_forms_agree(data, KN):
    K, N = KN
    G = data.draw(gains_for(K))
    if is_singular(G, 1e-8):
        return
    B = tilde_gains(G)
    inner, outer = enumerate_delta(K, N), enumerate_delta(K, N + 1)
    c = data.draw(arrays(float, (K, len(inner)), elements=st.floats(-5, 5)))
    j = data.draw(st.integers(0, K - 1))
    aligned = relay_sum_aligned(compute_u(c, j, N), B, outer)
    factored = relay_sum_factored(c, B, j, inner)
    scale = np.abs(monomials(outer.members, B)) @ np.abs(compute_u(c, j, N))
    assert abs(aligned - factored) <= 1e-10 * max(scale, 1e-300)


def test_compute_u_counts_contributions():
    K, N = 2, 2
    c = np.ones((K, N ** 4))
    u = compute_u(c, 0, N)
    assert u.sum() == K * N ** 4
    assert u.max() <= K


def test_direction_matrix_shape_checks():
    D = enumerate_delta(2, 2)
    with pytest.raises(ValueError):
        build_direction_matrix(D, np.ones((15, 2, 2)), square=True)
    with pytest.raises(ValueError):
        build_direction_matrix(D, np.ones((16, 3, 3)))


def test_singularity_detection():
    A = np.random.default_rng(2).normal(size=(6, 6))
    assert not is_singular(A)
    A[:, 3] = A[:, 0] + A[:, 1]
    assert is_singular(A)
    assert log_abs_det(np.zeros((3, 3))) == -math.inf
    # badly scaled but perfectly conditioned after balancing
    assert not is_singular(np.diag([1e-100, 1.0, 1e100]))


def test_independence_surveys():
    outer = enumerate_delta(2, 2)
    rep = check_monomial_independence(2, outer, 20, seed=0)
    assert rep.failures == 0 and rep.trials == 20
    rep = check_tilde_independence(2, outer, 20, seed=0)
    assert rep.failures == 0
    # without time diversity every row is identical
    rep = check_monomial_independence(2, outer, 5, seed=0, constant=True)
    assert rep.failures == 5

"""Exponent sets, monomial directions and the alignment bookkeeping.

An exponent vector ``s`` has K*K entries; entry ``i*K + j`` is the power of
the gain from transmitter ``i`` to receiver ``j``, i.e. of ``H[j, i]`` in the
hop-matrix layout of :mod:`andnet.channel_model`.  Exponent sets
{0..N-1}^(K*K) are always enumerated in lexicographic order, so the position
of ``s`` is its base-N value.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .channel_model import DEFAULT_DIST, GainDistribution, stream_rng
from .linalg import scaled_rcond

MAX_DIRECTIONS = 10**6
SINGULAR_RTOL = 1e-12
_LOG_GAIN_LIMIT = np.log(10.0)
_LOG_EXPONENT_LIMIT = 64


class EnvelopeError(ValueError):
    """Configuration is beyond the supported desk-scale envelope."""


@dataclass(frozen=True)
class DirectionSet:
    """The exponent set {0, ..., N-1}^(K*K) in lexicographic order."""

    K: int
    N: int
    members: np.ndarray

    def __len__(self) -> int:
        return len(self.members)

    @cached_property
    def _weights(self) -> np.ndarray:
        return self.N ** np.arange(self.K * self.K - 1, -1, -1, dtype=np.int64)

    def index(self, s) -> int:
        s = np.asarray(s, dtype=np.int64)
        if s.shape != (self.K * self.K,) or np.any(s < 0) or np.any(s >= self.N):
            raise KeyError(f"{s.tolist()} is not in Delta_{self.N}")
        return int(s @ self._weights)

    def __contains__(self, s) -> bool:
        s = np.asarray(s)
        return s.shape == (self.K * self.K,) and bool(np.all((s >= 0) & (s < self.N)))


def enumerate_delta(K: int, N: int, cap: int = MAX_DIRECTIONS) -> DirectionSet:
    if K < 1 or N < 1:
        raise ValueError(f"need K >= 1 and N >= 1, got K={K}, N={N}")
    n_vars = K * K
    if n_vars * np.log(N) > np.log(cap):
        raise EnvelopeError(f"|Delta_{N}| = {N}^{n_vars} exceeds the cap {cap}")
    size = N**n_vars
    powers = N ** np.arange(n_vars - 1, -1, -1, dtype=np.int64)
    members = (np.arange(size, dtype=np.int64)[:, None] // powers) % N
    members.setflags(write=False)
    return DirectionSet(K, N, members)


def flatten_gains(gains: np.ndarray) -> np.ndarray:
    """Reorder ``(..., K, K)`` hop matrices into exponent order (i*K + j)."""
    gains = np.asarray(gains, dtype=float)
    K = gains.shape[-1]
    return np.swapaxes(gains, -1, -2).reshape(*gains.shape[:-2], K * K)


def monomials(exponents: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Evaluate every exponent row on every gain matrix.

    ``exponents`` is (M, K*K), ``gains`` is (..., K, K); the result has
    shape (..., M).  Large gains or high total degree switch to
    log-domain accumulation.
    """
    exponents = np.asarray(exponents)
    x = flatten_gains(gains)
    big = np.abs(x).max(initial=0.0) > np.exp(_LOG_GAIN_LIMIT)
    if not big and exponents.sum(axis=-1).max(initial=0) <= _LOG_EXPONENT_LIMIT:
        # table[..., v, e] = x_v ** e by repeated multiplication
        top = int(exponents.max(initial=0))
        table = np.ones(x.shape + (top + 1,))
        for e in range(1, top + 1):
            table[..., e] = table[..., e - 1] * x
        picked = table[..., np.arange(x.shape[-1]), exponents]  # (..., M, V)
        return np.prod(picked, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(np.abs(x))
        # 0 ** 0 == 1: zero-exponent terms must not see log(0)
        terms = np.where(exponents > 0, logs[..., None, :] * exponents, 0.0)
    negative = (exponents % 2 == 1) & (x[..., None, :] < 0)
    sign = np.where(np.sum(negative, axis=-1) % 2 == 1, -1.0, 1.0)
    return sign * np.exp(terms.sum(axis=-1))


def eval_direction(s, gains) -> float:
    """Monomial T_s on one gain matrix, correctly rounded.

    The product is formed exactly in rational arithmetic and rounded once,
    so ``T_shift(s,i,j) = H[j, i] * T_s`` holds to about one ulp.  Use
    :func:`monomials` for bulk evaluation.
    """
    s = np.asarray(s, dtype=np.int64)
    x = flatten_gains(gains)
    if s.shape != x.shape:
        raise ValueError(f"exponent vector needs {x.size} entries, got {s.size}")
    out = Fraction(1)
    for v, e in zip(x.tolist(), s.tolist()):
        if e:
            out *= Fraction(v) ** e
    return float(out)


def tilde_gains(second_hop: np.ndarray) -> np.ndarray:
    """Inverse of the second-hop matrix, b_ij at ``[j, i]``.

    The relay directions are the first-hop monomials evaluated on this
    matrix instead of on the first hop.
    """
    return np.linalg.inv(second_hop)


def eval_tilde_direction(s, b) -> float:
    """Monomial in the entries of ``b`` (an inverted second-hop matrix)."""
    return eval_direction(s, b)


def shift(s, i: int, j: int) -> np.ndarray:
    s = np.array(s, dtype=np.int64)
    K = int(round(np.sqrt(s.size)))
    s[i * K + j] += 1
    return s


def shift_map(K: int, N: int) -> np.ndarray:
    """Positions in Delta_{N+1} of shift(s, i, j) for every s in Delta_N.

    Returns an int array of shape (K, K, N**(K*K)) indexed ``[i, j, k]``.
    """
    inner = enumerate_delta(K, N)
    outer_w = (N + 1) ** np.arange(K * K - 1, -1, -1, dtype=np.int64)
    base = inner.members @ outer_w
    out = np.empty((K, K, len(inner)), dtype=np.int64)
    for i in range(K):
        for j in range(K):
            out[i, j] = base + outer_w[i * K + j]
    return out


def support(K: int, N: int, j: int) -> np.ndarray:
    """Sorted positions in Delta_{N+1} that can carry energy at relay ``j``."""
    return np.unique(shift_map(K, N)[:, j, :])


def compute_u(c: np.ndarray, j: int, N: int) -> np.ndarray:
    """Aligned coefficients at relay ``j``.

    ``c`` has shape (K, N**(K*K)) (sources by streams); the result is
    indexed by Delta_{N+1} and holds sum_i c[i, s - e_ij].
    """
    c = np.asarray(c)
    K = c.shape[0]
    smap = shift_map(K, N)
    u = np.zeros((N + 1) ** (K * K), dtype=np.result_type(c, float))
    for i in range(K):
        np.add.at(u, smap[i, j], c[i])
    return u


def build_direction_matrix(directions: DirectionSet, gain_matrices: np.ndarray,
                           square: bool = False) -> np.ndarray:
    """Row r holds every direction of ``directions`` evaluated at gains r."""
    gain_matrices = np.asarray(gain_matrices, dtype=float)
    if gain_matrices.ndim != 3 or gain_matrices.shape[1:] != (directions.K, directions.K):
        raise ValueError(f"expected (rows, {directions.K}, {directions.K}) gains, got {gain_matrices.shape}")
    if square and gain_matrices.shape[0] != len(directions):
        raise ValueError(f"square matrix needs {len(directions)} rows, got {gain_matrices.shape[0]}")
    return monomials(directions.members, gain_matrices)


def relay_sum_aligned(u: np.ndarray, b: np.ndarray, outer: DirectionSet) -> float:
    """sum over Delta_{N+1} of T~_s u_s (the relay re-modulation)."""
    return float(monomials(outer.members, b) @ u)


def relay_sum_factored(c: np.ndarray, b: np.ndarray, j: int, inner: DirectionSet) -> float:
    """sum over Delta_N of T~_s * sum_i b_ij c[i, s]; equals the aligned form."""
    return float(monomials(inner.members, b) @ (b[j, :] @ c))


def log_abs_det(matrix: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(matrix)
    return float(logdet) if sign != 0 else -np.inf


def log_hadamard_ratio(matrix: np.ndarray) -> float:
    """log(|det| / product of column norms); 0 for orthogonal columns."""
    norms = np.linalg.norm(matrix, axis=0)
    if np.any(norms == 0):
        return -np.inf
    return log_abs_det(matrix) - float(np.sum(np.log(norms)))


def is_singular(matrix: np.ndarray, rtol: float = SINGULAR_RTOL) -> bool:
    """Numerically singular: equilibrated reciprocal condition below ``rtol``.

    Row and column scaling never change whether a determinant vanishes, so
    the test is taken after both are balanced.  The Hadamard ratio is not
    used here; for these positive, highly correlated columns it sits near
    1e-22 even at condition numbers around 1e5.
    """
    return scaled_rcond(matrix) < rtol


@dataclass(frozen=True)
class IndependenceReport:
    trials: int
    failures: int
    min_log_abs_det: float
    min_log_hadamard: float
    min_scaled_rcond: float

    @property
    def min_abs_det(self) -> float:
        return float(np.exp(self.min_log_abs_det))


def _independence(matrices) -> IndependenceReport:
    dets, ratios, rconds = [], [], []
    for m in matrices:
        dets.append(log_abs_det(m))
        ratios.append(log_hadamard_ratio(m))
        rconds.append(scaled_rcond(m))
    failures = sum(rc < SINGULAR_RTOL for rc in rconds)
    return IndependenceReport(len(dets), int(failures), min(dets), min(ratios), min(rconds))


def check_monomial_independence(K: int, directions: DirectionSet, trials: int, seed: int,
                                dist: GainDistribution = DEFAULT_DIST,
                                constant: bool = False) -> IndependenceReport:
    """Determinant survey of the direction matrix over random first hops.

    With ``constant`` every row reuses the same gains (the no-diversity case).
    """
    rows = len(directions)

    def gen():
        for trial in range(trials):
            rng = stream_rng(seed, trial)
            n = 1 if constant else rows
            gains = dist.sample(rng, (n, K, K))
            yield build_direction_matrix(directions, np.broadcast_to(gains, (rows, K, K)))

    return _independence(gen())


def check_tilde_independence(K: int, directions: DirectionSet, trials: int, seed: int,
                             dist: GainDistribution = DEFAULT_DIST) -> IndependenceReport:
    """As :func:`check_monomial_independence` with relay directions on
    independently drawn, inverted second-hop matrices."""
    rows = len(directions)

    def gen():
        for trial in range(trials):
            gains = dist.sample(stream_rng(seed, trial), (rows, K, K))
            yield build_direction_matrix(directions, tilde_gains(gains))

    return _independence(gen())

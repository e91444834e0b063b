"""Aligned network diagonalization over constant channels.

Time diversity is replaced by rational dimensions: each source sends integer
symbols on the real directions ``T_s`` (monomials of the fixed first-hop
gains), relays map their received scalar to the nearest point of the aligned
integer constellation and re-modulate it on the ``T~_s`` directions, and each
destination decodes the nearest point of its own interference-free
constellation.

Decoding is exhaustive: a constellation is enumerated once, sorted, and
queried with a binary search.  Ties go to the lexicographically smallest
integer tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import stats

from .channel_model import DEFAULT_DIST, GainDistribution, sample_constant, stream_rng
from .direction_algebra import compute_u, enumerate_delta, monomials, shift_map
from .linalg import scaled_rcond

ENUM_BUDGET = 10**8
REJECT_RATIO = 1e-9
MAX_DRAWS = 1000
_SIGN_ENUM_LIMIT = 20


class BudgetError(RuntimeError):
    """An exhaustive enumeration would exceed its point budget."""


def power_exponent(d: int, epsilon: float) -> float:
    """Exponent of P in the scalings: (d - 1 + 2 eps) / (2 (d + eps))."""
    return (d - 1 + 2 * epsilon) / (2 * (d + epsilon))


def alphabet_exponent(d: int, epsilon: float) -> float:
    """Exponent of P in the symbol bound: (1 - eps) / (2 (d + eps))."""
    return (1 - epsilon) / (2 * (d + epsilon))


def alphabet_bound(P: float, d: int, epsilon: float) -> int:
    """Q = floor(P ** ((1 - eps) / (2 (d + eps)))), robust to float rounding."""
    x = alphabet_exponent(d, epsilon)
    q = math.floor(P**x)
    # P ** x may land just below an integer; accept q + 1 when (q+1)^(1/x) <= P
    if (q + 1) > 0 and (1 / x) * math.log(q + 1) <= math.log(P) * (1 + 1e-14):
        q += 1
    return q


def per_pair_dof(K: int, N: int, epsilon: float) -> float:
    """(1 - eps) N^(K^2) / ((N + 1)^(K^2) + eps)."""
    return (1 - epsilon) * N ** (K * K) / ((N + 1) ** (K * K) + epsilon)


def dof_from_exponents(K: int, N: int, epsilon: float) -> float:
    """Per-pair DoF read off the code construction.

    Each pair carries L integers per channel use from an alphabet of about
    P^x points, so the rate is L x log P = 2 L x (0.5 log P).
    """
    d = (N + 1) ** (K * K)
    return 2 * N ** (K * K) * alphabet_exponent(d, epsilon)


class Constellation:
    """Points ``scale * sum_k directions[k] * a_k`` over integers |a_k| <= bound.

    Tuples are enumerated in lexicographic order (first coordinate most
    significant), so a smaller flat index means a lexicographically smaller
    tuple.
    """

    def __init__(self, directions, bound: int, scale: float, budget: int = ENUM_BUDGET):
        self.directions = np.asarray(directions, dtype=float).ravel()
        self.bound = int(bound)
        self.scale = float(scale)
        if self.bound < 0:
            raise ValueError("bound must be non-negative")
        self.size = (2 * self.bound + 1) ** len(self.directions)
        if self.size > budget:
            raise BudgetError(f"constellation has {self.size} points, budget is {budget}")

    @cached_property
    def _table(self):
        values = lattice_values(self.directions, self.bound, self.scale)
        order = np.argsort(values, kind="stable")
        return values[order], order

    @property
    def values(self) -> np.ndarray:
        """Point values in enumeration order."""
        sorted_vals, order = self._table
        out = np.empty_like(sorted_vals)
        out[order] = sorted_vals
        return out

    def tuple_at(self, flat: int) -> np.ndarray:
        shape = (2 * self.bound + 1,) * len(self.directions)
        return np.array(np.unravel_index(flat, shape), dtype=np.int64) - self.bound

    def point(self, a) -> float:
        a = np.asarray(a)
        if a.shape != self.directions.shape or np.any(np.abs(a) > self.bound):
            raise ValueError("tuple is outside the constellation alphabet")
        return float(self.scale * (self.directions @ a))

    def decode(self, y: float) -> np.ndarray:
        """Nearest tuple to ``y``; equidistant points go to the smallest tuple."""
        sorted_vals, order = self._table
        pos = int(np.searchsorted(sorted_vals, y))
        near = [p for p in (pos - 1, pos) if 0 <= p < len(sorted_vals)]
        best = min(abs(sorted_vals[p] - y) for p in near)
        tol = 8 * np.finfo(float).eps * max(abs(y), abs(sorted_vals[0]), abs(sorted_vals[-1]))
        lo = np.searchsorted(sorted_vals, y - best - tol, side="left")
        hi = np.searchsorted(sorted_vals, y + best + tol, side="right")
        return self.tuple_at(int(order[lo:hi].min()))

    def min_gap(self) -> float:
        """Smallest gap between distinct-tuple neighbors in sorted order."""
        sorted_vals, _ = self._table
        if len(sorted_vals) < 2:
            return math.inf
        return float(np.min(np.diff(sorted_vals)))


def lattice_values(directions, bound: int, scale: float) -> np.ndarray:
    """``scale * sum_k directions[k] a_k`` for every tuple in lexicographic order."""
    steps = np.arange(-bound, bound + 1, dtype=float)
    values = np.zeros(1)
    for t in np.asarray(directions, dtype=float).ravel():
        values = (values[:, None] + (scale * t) * steps[None, :]).ravel()
    return values


def min_distance_oracle(directions, bound: int, scale: float, budget: int = ENUM_BUDGET) -> float:
    """Exact min of |scale * sum_k directions[k] delta_k| over nonzero |delta_k| <= 2 bound.

    Brute force over every difference tuple; independent of the sorted-table
    decoder.
    """
    directions = np.asarray(directions, dtype=float).ravel()
    n_tuples = (4 * bound + 1) ** len(directions)
    if n_tuples > budget:
        raise BudgetError(f"{n_tuples} difference tuples exceed the budget {budget}")
    if n_tuples == 1:
        return math.inf
    values = np.abs(lattice_values(directions, 2 * bound, scale))
    values[n_tuples // 2] = math.inf  # the all-zero tuple sits at the center
    return float(values.min())


@dataclass(frozen=True)
class SchemeInstanceC:
    """Constant-channel scheme at one power level on one channel draw.

    ``first[j, i]`` and ``second[k, j]`` are the fixed hop gains.  ``beta``
    and ``beta_prime`` depend only on the gains.
    """

    K: int
    N: int
    epsilon: float
    P: float
    sigma2: float
    Q: int
    beta: float
    beta_prime: float
    gamma: float
    gamma_prime: float
    first: np.ndarray = field(repr=False)
    second: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.N ** (self.K * self.K)

    @property
    def d(self) -> int:
        return (self.N + 1) ** (self.K * self.K)

    @cached_property
    def inner(self):
        return enumerate_delta(self.K, self.N)

    @cached_property
    def outer(self):
        return enumerate_delta(self.K, self.N + 1)

    @cached_property
    def supports(self) -> list[np.ndarray]:
        """Positions in Delta_{N+1} reachable at each relay."""
        smap = shift_map(self.K, self.N)
        return [np.unique(smap[:, j, :]) for j in range(self.K)]

    @cached_property
    def b(self) -> np.ndarray:
        return np.linalg.inv(self.second)

    @cached_property
    def T_inner(self) -> np.ndarray:
        return monomials(self.inner.members, self.first)

    @cached_property
    def T_outer(self) -> np.ndarray:
        return monomials(self.outer.members, self.first)

    @cached_property
    def Tt_inner(self) -> np.ndarray:
        return monomials(self.inner.members, self.b)

    @cached_property
    def Tt_outer(self) -> np.ndarray:
        return monomials(self.outer.members, self.b)

    def with_power(self, P: float, sigma2: float | None = None) -> "SchemeInstanceC":
        return make_instance(self.K, self.N, self.epsilon, P,
                             self.sigma2 if sigma2 is None else sigma2, self.first, self.second)

    def relay_constellation(self, j: int, budget: int = ENUM_BUDGET) -> Constellation:
        """Aligned points seen by relay ``j``: alphabet K*Q on its support."""
        return Constellation(self.T_outer[self.supports[j]], self.K * self.Q, self.gamma, budget)

    def dest_constellation(self, budget: int = ENUM_BUDGET) -> Constellation:
        return Constellation(self.Tt_inner, self.Q, self.gamma_prime, budget)


def make_instance(K: int, N: int, epsilon: float, P: float, sigma2: float,
                  first: np.ndarray, second: np.ndarray) -> SchemeInstanceC:
    """Assemble Q, the power constants and the scalings for fixed gains.

    ``beta = 1 / sum_s |T_s|`` bounds the source amplitude by
    ``P^a * Q <= sqrt(P)``; ``beta_prime`` does the same for the relays, whose
    coefficients reach K*Q on their support.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not P > 1:
        raise ValueError(f"need P > 1, got {P}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    first = np.array(first, dtype=float)
    second = np.array(second, dtype=float)
    if first.shape != (K, K) or second.shape != (K, K):
        raise ValueError(f"hop matrices must be ({K}, {K})")
    if scaled_rcond(second) < 1e-12:
        raise ValueError("second-hop matrix is singular")
    d = (N + 1) ** (K * K)
    Q = alphabet_bound(P, d, epsilon)
    if Q < 1:
        raise ValueError(f"P = {P} gives an empty alphabet (Q = 0) at d = {d}, eps = {epsilon}")
    first.setflags(write=False)
    second.setflags(write=False)
    inner, outer = enumerate_delta(K, N), enumerate_delta(K, N + 1)
    smap = shift_map(K, N)
    beta = 1.0 / np.abs(monomials(inner.members, first)).sum()
    Tt = np.abs(monomials(outer.members, np.linalg.inv(second)))
    worst = max(Tt[np.unique(smap[:, j, :])].sum() for j in range(K))
    beta_prime = 1.0 / (K * worst)
    scale = P ** power_exponent(d, epsilon)
    return SchemeInstanceC(K, N, epsilon, P, sigma2, Q, beta, beta_prime,
                           beta * scale, beta_prime * scale, first, second)


def check_symbols(inst: SchemeInstanceC, c) -> np.ndarray:
    c = np.asarray(c)
    if c.shape != (inst.K, inst.L):
        raise ValueError(f"symbols must be ({inst.K}, {inst.L}), got {c.shape}")
    if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
        raise ValueError("symbols must be integers")
    if np.any(np.abs(c) > inst.Q):
        raise ValueError(f"symbol outside the alphabet [-{inst.Q}, {inst.Q}]")
    return c.astype(np.int64)


def encode_sources_const(inst: SchemeInstanceC, c) -> np.ndarray:
    """Source transmit values (K,): gamma * sum_s T_s c[i, s]."""
    c = check_symbols(inst, c)
    return inst.gamma * (c @ inst.T_inner)


def relay_received(inst: SchemeInstanceC, X: np.ndarray, noise=None) -> np.ndarray:
    Y = inst.first @ X
    return Y if noise is None else Y + noise


def aligned_coefficients(inst: SchemeInstanceC, c) -> np.ndarray:
    """True relay coefficients (K, |support|) for source symbols ``c``."""
    c = np.asarray(c)
    return np.array([compute_u(c, j, inst.N)[inst.supports[j]] for j in range(inst.K)])


def relay_decode_nearest(inst: SchemeInstanceC, y: float, j: int,
                         budget: int = ENUM_BUDGET) -> np.ndarray:
    """Nearest aligned tuple on relay ``j``'s support (alphabet K*Q)."""
    return inst.relay_constellation(j, budget).decode(y)


def relay_reencode(inst: SchemeInstanceC, u) -> np.ndarray:
    """Relay transmit values (K,): gamma' * sum over the support of T~_s u_j,s."""
    u = np.asarray(u, dtype=float)
    return inst.gamma_prime * np.array(
        [inst.Tt_outer[inst.supports[j]] @ u[j] for j in range(inst.K)])


def relay_reencode_factored(inst: SchemeInstanceC, c) -> np.ndarray:
    """Same values from the source symbols: gamma' * sum_s T~_s sum_i b_ij c[i, s]."""
    c = np.asarray(c, dtype=float)
    return inst.gamma_prime * (inst.b @ c) @ inst.Tt_inner


def destination_received(inst: SchemeInstanceC, X_relay: np.ndarray, noise=None) -> np.ndarray:
    Y = inst.second @ X_relay
    return Y if noise is None else Y + noise


def destination_decode_nearest(inst: SchemeInstanceC, y: float,
                               budget: int = ENUM_BUDGET) -> np.ndarray:
    """Nearest tuple of own-source symbols (alphabet Q over Delta_N)."""
    return inst.dest_constellation(budget).decode(y)


def max_amplitudes(inst: SchemeInstanceC) -> tuple[float, float]:
    """Worst-case |X| at sources and relays over their symbol alphabets.

    Extremes of a linear form over a box sit at its corners, so only tuples
    with every coefficient at +-bound are enumerated; past 2**20 corners the
    maximizing corner (signs of the directions) is used directly.
    """
    def worst(directions, bound, scale):
        directions = np.asarray(directions, dtype=float)
        n = len(directions)
        if n <= _SIGN_ENUM_LIMIT:
            corners = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1) * 2 - 1
            return float(np.max(np.abs(scale * bound * (corners @ directions))))
        return float(abs(scale * bound * (np.sign(directions) @ directions)))

    source = worst(inst.T_inner, inst.Q, inst.gamma)
    relay = max(worst(inst.Tt_outer[s], inst.K * inst.Q, inst.gamma_prime)
                for s in inst.supports)
    return source, relay


def min_distances(inst: SchemeInstanceC, budget: int = ENUM_BUDGET) -> tuple[float, float]:
    """Oracle minimum distances of the relay (worst relay) and destination constellations."""
    relay = min(min_distance_oracle(inst.T_outer[s], inst.K * inst.Q, inst.gamma, budget)
                for s in inst.supports)
    dest = min_distance_oracle(inst.Tt_inner, inst.Q, inst.gamma_prime, budget)
    return relay, dest


def accepted(inst: SchemeInstanceC, budget: int = ENUM_BUDGET) -> bool:
    """Whether both constellations keep oracle distance >= REJECT_RATIO * scale."""
    relay, dest = min_distances(inst, budget)
    return relay >= REJECT_RATIO * inst.gamma and dest >= REJECT_RATIO * inst.gamma_prime


def draw_instance(K: int, N: int, epsilon: float, p_grid, sigma2: float = 1.0,
                  dist: GainDistribution = DEFAULT_DIST, seed: int = 0,
                  budget: int = ENUM_BUDGET) -> tuple[SchemeInstanceC, int]:
    """First channel draw accepted at every P of ``p_grid``, and the rejection count."""
    p_grid = sorted(p_grid)
    for draw in range(MAX_DRAWS):
        real = sample_constant(K, dist, seed=int(stream_rng(seed, draw).integers(2**31)))
        first, second = real.hop("first")[0], real.hop("second")[0]
        if scaled_rcond(second) < 1e-12:
            continue
        base = make_instance(K, N, epsilon, p_grid[0], sigma2, first, second)
        if all(accepted(base.with_power(P), budget) for P in p_grid):
            return base, draw
    raise RuntimeError(f"no acceptable channel draw in {MAX_DRAWS} attempts")


def binomial_ci(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Two-sided Clopper-Pearson interval."""
    ci = stats.binomtest(errors, trials).proportion_ci(confidence_level=level)
    return float(ci.low), float(ci.high)


def run_trials(inst: SchemeInstanceC, trials: int, seed: int, point: int = 0,
               budget: int = ENUM_BUDGET) -> dict:
    """Monte Carlo over uniform symbols at one power level.

    A trial counts as a relay-stage error when any relay decodes a wrong
    tuple, a destination-stage error when relays were right but some
    destination is wrong, and an end-to-end error when any decoded symbol
    differs from what was sent.
    """
    relays = [inst.relay_constellation(j, budget) for j in range(inst.K)]
    dest = inst.dest_constellation(budget)
    sigma = math.sqrt(inst.sigma2)
    relay_err = dest_err = e2e_err = sym_err = 0
    for trial in range(trials):
        rng = stream_rng(seed, point, trial)
        c = rng.integers(-inst.Q, inst.Q + 1, size=(inst.K, inst.L))
        X = encode_sources_const(inst, c)
        Y_V = relay_received(inst, X, sigma * rng.standard_normal(inst.K))
        u_hat = np.array([relays[j].decode(Y_V[j]) for j in range(inst.K)])
        relay_wrong = not np.array_equal(u_hat, aligned_coefficients(inst, c))
        Y_D = destination_received(inst, relay_reencode(inst, u_hat),
                                   sigma * rng.standard_normal(inst.K))
        c_hat = np.array([dest.decode(Y_D[k]) for k in range(inst.K)])
        wrong = c_hat != c
        relay_err += relay_wrong
        dest_err += (not relay_wrong) and bool(wrong.any())
        e2e_err += bool(wrong.any())
        sym_err += int(wrong.sum())
    lo, hi = binomial_ci(e2e_err, trials)
    relay_d, dest_d = min_distances(inst, budget)
    return {
        "P": inst.P,
        "Q": inst.Q,
        "gamma": inst.gamma,
        "gamma_prime": inst.gamma_prime,
        "relay_min_distance": relay_d,
        "dest_min_distance": dest_d,
        "trials": trials,
        "relay_error_rate": relay_err / trials,
        "dest_error_rate": dest_err / trials,
        "error_rate": e2e_err / trials,
        "symbol_error_rate": sym_err / (trials * inst.K * inst.L),
        "ci_low": lo,
        "ci_high": hi,
    }


@dataclass
class SweepReport:
    K: int
    N: int
    epsilon: float
    sigma2: float
    first: list
    second: list
    rejections: int
    rows: list

    @property
    def monotone(self) -> bool:
        """Error rate non-increasing in P up to overlapping 95% intervals."""
        rows = sorted(self.rows, key=lambda r: r["P"])
        return all(b["ci_low"] <= a["ci_high"] for a, b in zip(rows, rows[1:]))

    @property
    def error_rates(self) -> list[float]:
        return [r["error_rate"] for r in sorted(self.rows, key=lambda r: r["P"])]


def _sweep_cell(args):
    inst, P, trials, seed, point, budget = args
    return run_trials(inst.with_power(P), trials, seed, point, budget)


def symbol_error_sweep(K: int, N: int, epsilon: float, p_grid, trials: int, seed: int = 0,
                       sigma2: float = 1.0, dist: GainDistribution = DEFAULT_DIST,
                       budget: int = ENUM_BUDGET, pool=None) -> SweepReport:
    """Error rates over ``p_grid`` on one accepted channel draw.

    ``pool`` may be any executor with an ordered ``map``; cells are seeded by
    their grid position so the result does not depend on it.
    """
    p_grid = sorted(float(P) for P in p_grid)
    base, rejections = draw_instance(K, N, epsilon, p_grid, sigma2, dist, seed, budget)
    cells = [(base, P, trials, seed, k, budget) for k, P in enumerate(p_grid)]
    rows = list((pool.map if pool is not None else map)(_sweep_cell, cells))
    return SweepReport(K, N, epsilon, sigma2, base.first.tolist(), base.second.tolist(),
                       rejections, rows)

"""Degrees-of-freedom formulas, slope estimation and the MIMO extensions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .linalg import RCOND_TOL, scaled_rcond

SCHEMES = ("tdma", "interference-channel", "x-channel", "neutralization", "and")


def neutralization_order(K: int) -> int:
    """max{N : N(N-1) + 1 <= K}."""
    N = 1
    while (N + 1) * N + 1 <= K:
        N += 1
    return N


def dof_formula(scheme: str, K: int) -> Fraction:
    """Exact sum DoF of a named scheme on the K x K x K network.

    ``tdma`` serves one pair at a time, ``interference-channel`` and
    ``x-channel`` treat the two hops separately, ``neutralization`` is the
    aligned interference neutralization count and ``and`` the cut-set value.
    """
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if scheme == "tdma":
        return Fraction(1)
    if scheme == "interference-channel":
        return Fraction(K, 2)
    if scheme == "x-channel":
        return Fraction(K * K, 2 * K - 1)
    if scheme == "neutralization":
        return Fraction(neutralization_order(K))
    if scheme == "and":
        return Fraction(K)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def baseline_table(k_max: int, k_min: int = 1) -> list[dict]:
    """One row per K with every scheme's DoF as a Fraction."""
    return [{"K": K, **{s: dof_formula(s, K) for s in SCHEMES}} for K in range(k_min, k_max + 1)]


@dataclass(frozen=True)
class SlopeEstimate:
    slope: float
    half_width: float
    intercept: float
    points: int


def estimate_dof_slope(p_grid, rates, fraction: float = 0.5, level: float = 0.95) -> SlopeEstimate:
    """Least-squares slope of rate (bits) against 0.5 * log2 P.

    Only the top ``fraction`` of the grid (by P, at least 3 points) enters
    the fit.  The half-width is the Student-t interval at ``level``.
    """
    P = np.asarray(p_grid, dtype=float)
    R = np.asarray(rates, dtype=float)
    if P.shape != R.shape or P.ndim != 1:
        raise ValueError("p_grid and rates must be 1-D and of equal length")
    if len(P) < 4:
        raise ValueError(f"need at least 4 grid points, got {len(P)}")
    if np.any(P <= 0) or math.log10(P.max() / P.min()) < 4:
        raise ValueError("grid must be positive and span at least 4 decades")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    order = np.argsort(P)
    n = max(3, math.ceil(fraction * len(P)))
    used = order[-n:]
    fit = stats.linregress(0.5 * np.log2(P[used]), R[used])
    t = stats.t.ppf(0.5 + level / 2, n - 2)
    return SlopeEstimate(float(fit.slope), float(t * fit.stderr), float(fit.intercept), n)


@dataclass(frozen=True)
class MimoProfile:
    """Antenna counts: per-pair source and destination, per relay."""

    M_S: tuple
    M_D: tuple
    M_V: tuple

    def __post_init__(self):
        object.__setattr__(self, "M_S", tuple(int(m) for m in self.M_S))
        object.__setattr__(self, "M_D", tuple(int(m) for m in self.M_D))
        object.__setattr__(self, "M_V", tuple(int(m) for m in self.M_V))
        if len(self.M_S) != len(self.M_D) or not self.M_S or not self.M_V:
            raise ValueError("need matching non-empty source and destination counts and >= 1 relay")
        if min(self.M_S + self.M_D + self.M_V) < 1:
            raise ValueError("every node needs at least one antenna")

    @property
    def K(self) -> int:
        return len(self.M_S)

    @property
    def relay_antennas(self) -> int:
        return sum(self.M_V)


def mimo_region_contains(profile: MimoProfile, d) -> tuple[bool, list[str]]:
    """Membership of ``d`` in the MIMO DoF region, with the violated constraints.

    The region is d_i >= 0, d_i <= min(M_S_i, M_D_i) and
    sum d_i <= total relay antennas.
    """
    d = [float(x) for x in d]
    if len(d) != profile.K:
        raise ValueError(f"tuple needs {profile.K} entries, got {len(d)}")
    violations = []
    for i, di in enumerate(d):
        if di < 0:
            violations.append(f"d[{i}] = {di} < 0")
        cap = min(profile.M_S[i], profile.M_D[i])
        if di > cap:
            violations.append(f"d[{i}] = {di} > min(M_S[{i}], M_D[{i}]) = {cap}")
    if sum(d) > profile.relay_antennas:
        violations.append(f"sum(d) = {sum(d)} > relay antennas = {profile.relay_antennas}")
    return not violations, violations


@dataclass(frozen=True)
class ReducedNetwork:
    """Single-antenna network left after discarding antennas.

    Each list holds (node, antenna) pairs, one per virtual node, in order.
    """

    K: int
    sources: list
    relays: list
    destinations: list
    discarded_sources: list
    discarded_relays: list
    discarded_destinations: list


def mimo_reduction(profile: MimoProfile, d) -> ReducedNetwork:
    """Keep d_i antennas at source and destination i and sum(d) relay antennas.

    The highest-indexed antennas are discarded, at the relays starting from
    the last relay.
    """
    if any(int(x) != x for x in d):
        raise ValueError("reduction needs an integer tuple")
    d = [int(x) for x in d]
    ok, violations = mimo_region_contains(profile, d)
    if not ok:
        raise ValueError("tuple outside the region: " + "; ".join(violations))
    sources = [(i, a) for i in range(profile.K) for a in range(d[i])]
    destinations = list(sources)
    relay_all = [(r, a) for r, m in enumerate(profile.M_V) for a in range(m)]
    Kp = sum(d)
    return ReducedNetwork(
        Kp, sources, relay_all[:Kp], destinations,
        [profile.M_S[i] - d[i] for i in range(profile.K)],
        [sum(1 for r, _ in relay_all[Kp:] if r == j) for j in range(len(profile.M_V))],
        [profile.M_D[i] - d[i] for i in range(profile.K)],
    )


def multihop_dof(layers, K: int) -> int:
    """min over all layer sizes, with the source and destination layers of size K."""
    if K < 1 or any(int(a) < 1 for a in layers):
        raise ValueError("layer sizes must be positive")
    return min([K, *(int(a) for a in layers)])


def mimo_relay_diagonalization(first: np.ndarray, second: np.ndarray, inputs,
                               relay_noise=None, dest_noise=None) -> np.ndarray:
    """Destination outputs when a joint relay applies inv(second) @ inv(first).

    With no noise the outputs equal ``inputs``.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    for name, H in (("first", first), ("second", second)):
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"{name}-hop matrix must be square")
        if scaled_rcond(H) < RCOND_TOL:
            raise ValueError(f"{name}-hop matrix is singular")
    y_relay = first @ np.asarray(inputs, dtype=float)
    if relay_noise is not None:
        y_relay = y_relay + relay_noise
    x_relay = np.linalg.solve(second, np.linalg.solve(first, y_relay))
    out = second @ x_relay
    return out if dest_noise is None else out + dest_noise

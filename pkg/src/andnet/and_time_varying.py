"""Linear aligned network diagonalization over time-varying channels.

One scheme block spans ``d = (N+1)**(K*K)`` time steps.  Sources send block
``m`` on the first hop during steps ``m*d .. (m+1)*d - 1`` and the relays
forward it during the following ``d`` steps, so a :class:`ChannelBlock`
pairs first-hop gains of block ``m`` with second-hop gains of block ``m+1``.

All relays see the same first-hop direction matrix (channel state is global),
so relay-side solves are done once with one right-hand side per relay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import stats

from .channel_model import DEFAULT_DIST, ChannelRealization, GainDistribution, stream_rng
from .direction_algebra import (
    DirectionSet,
    build_direction_matrix,
    enumerate_delta,
    log_abs_det,
    monomials,
    shift_map,
)
from .linalg import Factored

NUMERICAL_RESIDUAL = 1e-6
POWER_MARGIN = 1.1
MAX_BLOCK_LENGTH = 512

RELAY_DET, FEW_GOOD_TIMES, DEST_DET = "relay-det", "few-good-times", "dest-det"


@dataclass(frozen=True)
class SchemeInstanceTV:
    """Parameters of one time-varying scheme.

    Determinant thresholds for the d x d and L x L direction matrices are kept
    as natural logs because those determinants under- or overflow quickly;
    ``delta_prime`` bounds ``|det H_VD[t]|`` directly.
    """

    K: int
    N: int
    epsilon: float
    P: float = 1.0
    sigma2: float = 1.0
    gamma: float = 1.0
    gamma_prime: float = 1.0
    log_delta: float = -math.inf
    delta_prime: float = 0.0
    log_delta_dblprime: float = -math.inf
    relay_noise_gain: float = 0.0
    dist: str = DEFAULT_DIST.describe()

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.gamma <= 0 or self.gamma_prime <= 0:
            raise ValueError("gamma and gamma_prime must be positive")
        if self.P <= 0 or self.sigma2 < 0:
            raise ValueError("need P > 0 and sigma2 >= 0")

    @property
    def L(self) -> int:
        return self.N ** (self.K * self.K)

    @property
    def d(self) -> int:
        return (self.N + 1) ** (self.K * self.K)

    @property
    def delta(self) -> float:
        return math.exp(self.log_delta)

    @property
    def delta_dblprime(self) -> float:
        return math.exp(self.log_delta_dblprime)

    @cached_property
    def inner(self) -> DirectionSet:
        return enumerate_delta(self.K, self.N)

    @cached_property
    def outer(self) -> DirectionSet:
        return enumerate_delta(self.K, self.N + 1)

    @cached_property
    def smap(self) -> np.ndarray:
        return shift_map(self.K, self.N)

    @property
    def min_power(self) -> float:
        """Smallest P at which ``gamma_prime`` alone keeps relays within P.

        At ``gamma_prime`` the relay power is P/POWER_MARGIN for the signal
        plus a P-free forwarded-noise term; the noise term gets the remaining
        budget, again with POWER_MARGIN slack.
        """
        noise = self.gamma_prime**2 * self.sigma2 * self.relay_noise_gain / self.gamma**2
        return POWER_MARGIN * noise / (1.0 - 1.0 / POWER_MARGIN)

    @property
    def relay_gain(self) -> float:
        """Relay scaling actually used at power P.

        Equals the P-free ``gamma_prime`` once P >= min_power; below that the
        forwarded noise would break the relay power limit, so the gain is
        reduced in proportion to sqrt(P / min_power).
        """
        floor = self.min_power
        if self.P >= floor:
            return self.gamma_prime
        return self.gamma_prime * math.sqrt(self.P / floor)

    def with_power(self, P: float, sigma2: float | None = None) -> "SchemeInstanceTV":
        return replace(self, P=P, sigma2=self.sigma2 if sigma2 is None else sigma2)


@dataclass(frozen=True)
class ChannelBlock:
    """First-hop gains of one block and second-hop gains of the next."""

    first: np.ndarray
    second: np.ndarray


def channel_block(real: ChannelRealization, m: int, d: int) -> ChannelBlock:
    from .channel_model import FIRST, SECOND

    return ChannelBlock(real.block(m * d, d, FIRST), real.block((m + 1) * d, d, SECOND))


def random_block(K: int, d: int, rng: np.random.Generator,
                 dist: GainDistribution = DEFAULT_DIST) -> ChannelBlock:
    return ChannelBlock(dist.sample(rng, (d, K, K)), dist.sample(rng, (d, K, K)))


def _lower_quantile(samples: np.ndarray, q: float) -> float:
    """Largest threshold whose empirical mass at or below it is at most ``q``.

    When even the smallest sample would exceed the budget (atoms), the
    threshold drops below all samples.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    k = int(math.floor(q * n))  # samples allowed at or below the threshold
    while 0 < k < n and s[k] == s[k - 1]:
        k -= 1
    if k == 0:
        return float(s[0] - math.log(2.0)) if np.isfinite(s[0]) else -math.inf
    return float(s[k - 1])


def _bad_time_probability(d: int, L: int, epsilon: float) -> float:
    """Largest per-step bad probability p with Pr[Bin(d, 1-p) <= L] < epsilon."""
    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if stats.binom.cdf(L, d, 1.0 - mid) < epsilon:
            lo = mid
        else:
            hi = mid
    return lo


def _det_abs(H: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.det(H))


def calibrate(K: int, N: int, epsilon: float, dist: GainDistribution = DEFAULT_DIST,
              trials: int = 5000, seed: int = 0, P: float = 1.0, sigma2: float = 1.0,
              noise_trials: int = 200) -> SchemeInstanceTV:
    """Monte Carlo thresholds and power normalizations.

    ``delta`` and ``delta''`` are epsilon-quantiles of the relay and
    destination determinant magnitudes.  ``delta'`` is the quantile of
    ``|det H_VD[t]|`` at the per-step level that makes "at most L usable
    steps in a block" rarer than epsilon.  ``gamma`` and ``gamma'`` come
    from sample second moments of the directions with a 10% margin.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if trials < 1000:
        raise ValueError(f"calibration needs at least 1000 trials, got {trials}")
    inner, outer = enumerate_delta(K, N), enumerate_delta(K, N + 1)
    L, d = len(inner), len(outer)
    if d > MAX_BLOCK_LENGTH:
        raise ValueError(f"block length {d} exceeds {MAX_BLOCK_LENGTH}")

    log_det_T = np.empty(trials)
    source_moment = np.zeros(L)
    for trial in range(trials):
        gains = dist.sample(stream_rng(seed, 0, trial), (d, K, K))
        log_det_T[trial] = log_abs_det(build_direction_matrix(outer, gains))
        source_moment += np.sum(monomials(inner.members, gains) ** 2, axis=0)
    source_moment /= trials * d
    if not np.isfinite(log_det_T).any() or np.all(log_det_T == -math.inf):
        raise ValueError("degenerate gain distribution: direction matrices are singular")
    log_delta = _lower_quantile(log_det_T, epsilon)

    p_bad = _bad_time_probability(d, L, epsilon)
    n_h = min(trials * d, 200_000)
    H2 = dist.sample(stream_rng(seed, 1), (n_h, K, K))
    dets = _det_abs(H2)
    if np.all(dets == 0):
        raise ValueError("degenerate gain distribution: second hop is singular")
    delta_prime = max(math.exp(_lower_quantile(np.log(dets), p_bad)), 0.0) if p_bad > 0 else 0.0

    good = dets > delta_prime
    relay_moment = np.zeros(d)
    n_good = 0
    for chunk in np.array_split(np.flatnonzero(good), max(1, n_h * d // 2_000_000)):
        if len(chunk):
            relay_moment += np.sum(monomials(outer.members, np.linalg.inv(H2[chunk])) ** 2, axis=0)
            n_good += len(chunk)
    relay_moment /= max(n_good, 1)

    log_det_Tt = []
    for trial in range(trials):
        H = dist.sample(stream_rng(seed, 2, trial), (d, K, K))
        idx = np.flatnonzero(_det_abs(H) > delta_prime)
        if len(idx) >= L:
            sel = idx[:L]
            log_det_Tt.append(log_abs_det(monomials(inner.members, np.linalg.inv(H[sel]))))
    if not log_det_Tt:
        raise ValueError("degenerate gain distribution: no usable destination blocks")
    log_delta_dblprime = _lower_quantile(np.array(log_det_Tt), epsilon)

    gamma = 1.0 / math.sqrt(POWER_MARGIN * source_moment.sum())
    gamma_prime = 1.0 / math.sqrt(POWER_MARGIN * K * relay_moment.sum())
    inst = SchemeInstanceTV(K, N, epsilon, P, sigma2, gamma, gamma_prime, log_delta,
                            delta_prime, log_delta_dblprime, 0.0, dist.describe())
    return replace(inst, relay_noise_gain=_relay_noise_gain(inst, dist, noise_trials, seed))


def _relay_noise_gain(inst: SchemeInstanceTV, dist: GainDistribution, trials: int,
                      seed: int) -> float:
    """E[(sum_s T~_s[t] (T^-1 z)_s)^2] for unit white z, over usable blocks."""
    total, count = 0.0, 0
    for trial in range(trials):
        block = random_block(inst.K, inst.d, stream_rng(seed, 3, trial), dist)
        ops = _BlockOps(inst, block)
        if ops.relay_silent:
            continue
        # Tt @ T^-1 = (T^-T @ Tt^T)^T; E over white z is the squared row norm
        G = ops.forward_map()
        total += np.sum(G**2) / inst.d
        count += 1
    return total / count if count else 0.0


class _BlockOps:
    """Per-block direction matrices, thresholds and factorizations."""

    def __init__(self, inst: SchemeInstanceTV, block: ChannelBlock):
        self.inst = inst
        self.block = block
        self.T = build_direction_matrix(inst.outer, block.first, square=True)
        self.log_det_T = log_abs_det(self.T)
        self.relay_silent = not self.log_det_T > inst.log_delta
        self.active = _det_abs(block.second) > inst.delta_prime
        self.n_low_det = int(np.sum(~self.active))
        good = np.flatnonzero(self.active)
        self.sel = good[: inst.L] if len(good) >= inst.L else None
        self.Tt_full = np.zeros((inst.d, inst.d))
        if self.active.any():
            B = np.linalg.inv(block.second[self.active])
            self.Tt_full[self.active] = monomials(inst.outer.members, B)
        self.Tt_sel = None
        self.log_det_Tt = -math.inf
        if self.sel is not None:
            self.Tt_sel = monomials(inst.inner.members, np.linalg.inv(block.second[self.sel]))
            self.log_det_Tt = log_abs_det(self.Tt_sel)

    @cached_property
    def relay_lu(self) -> Factored:
        return Factored.of(self.T)

    @cached_property
    def dest_lu(self) -> Factored:
        return Factored.of(self.Tt_sel)

    @property
    def erasure_reason(self) -> str | None:
        if self.relay_silent:
            return RELAY_DET
        if self.sel is None:
            return FEW_GOOD_TIMES
        if not self.log_det_Tt > self.inst.log_delta_dblprime:
            return DEST_DET
        return None

    def forward_map(self) -> np.ndarray:
        """d x d map from relay received samples to relay output, per unit gains.

        Equals ``Tt_full @ T^-1``; formed by solving with the transpose.
        """
        X, _ = Factored.of(self.T.T).solve(self.Tt_full.T)
        return X.T


def erasure_reason(inst: SchemeInstanceTV, block: ChannelBlock) -> str | None:
    """Why the block would be erased under the calibrated thresholds, or None."""
    return _BlockOps(inst, block).erasure_reason


@dataclass(frozen=True)
class RelayOutput:
    signals: np.ndarray
    silent: bool
    active: np.ndarray
    log_det_T: float
    residual: float
    u_hat: np.ndarray | None = None

    @property
    def numerical(self) -> bool:
        return self.residual > NUMERICAL_RESIDUAL


@dataclass(frozen=True)
class BlockOutcome:
    """Destination output for one block.

    ``estimates`` is (K, L) or ``None`` for an erasure.
    """

    estimates: np.ndarray | None
    reason: str | None
    log_det_T: float
    log_det_Tt: float
    n_low_det: int
    residual: float = 0.0

    @property
    def erased(self) -> bool:
        return self.estimates is None

    @property
    def numerical(self) -> bool:
        return self.residual > NUMERICAL_RESIDUAL


def encode_sources(inst: SchemeInstanceTV, c: np.ndarray, first: np.ndarray) -> np.ndarray:
    """Transmit signals (K, d): gamma * sum_s T_s[t] c[i, s]."""
    c = np.asarray(c, dtype=float)
    if c.shape != (inst.K, inst.L):
        raise ValueError(f"symbols must be ({inst.K}, {inst.L}), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("source symbols must be finite")
    directions = monomials(inst.inner.members, first)  # (d, L)
    return inst.gamma * c @ directions.T


def first_hop(X: np.ndarray, first: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    """Relay received signals (K, d) for source signals X (K, d)."""
    Y = np.einsum("tji,it->jt", first, X)
    return Y if noise is None else Y + noise


def second_hop(X: np.ndarray, second: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    return first_hop(X, second, noise)


def relay_process(inst: SchemeInstanceTV, received: np.ndarray, first: np.ndarray,
                  second_next: np.ndarray) -> RelayOutput:
    """Estimate the aligned coefficients and re-modulate them on relay directions.

    Relays stay silent for the whole next block when ``|det T| <= delta`` and
    at individual steps where ``|det H_VD[t]| <= delta'``.
    """
    received = np.asarray(received, dtype=float)
    if received.shape != (inst.K, inst.d):
        raise ValueError(f"received must be ({inst.K}, {inst.d}), got {received.shape}")
    T = build_direction_matrix(inst.outer, first, square=True)
    log_det_T = log_abs_det(T)
    active = _det_abs(second_next) > inst.delta_prime
    if not log_det_T > inst.log_delta:
        return RelayOutput(np.zeros((inst.K, inst.d)), True, active, log_det_T, 0.0)
    u_hat, residual = Factored.of(T).solve(received.T / inst.gamma)  # (d, K)
    Tt = np.zeros((inst.d, inst.d))
    if active.any():
        Tt[active] = monomials(inst.outer.members, np.linalg.inv(second_next[active]))
    signals = inst.relay_gain * (Tt @ u_hat).T
    return RelayOutput(signals, False, active, log_det_T, residual, u_hat.T)


def destination_decode(inst: SchemeInstanceTV, received: np.ndarray, second: np.ndarray,
                       relay: RelayOutput) -> BlockOutcome:
    """Invert the relay directions on the first L usable steps, or erase."""
    received = np.asarray(received, dtype=float)
    active = _det_abs(second) > inst.delta_prime
    n_low = int(np.sum(~active))
    if relay.silent:
        return BlockOutcome(None, RELAY_DET, relay.log_det_T, -math.inf, n_low, relay.residual)
    good = np.flatnonzero(active)
    if len(good) < inst.L:
        return BlockOutcome(None, FEW_GOOD_TIMES, relay.log_det_T, -math.inf, n_low, relay.residual)
    sel = good[: inst.L]
    Tt = monomials(inst.inner.members, np.linalg.inv(second[sel]))
    log_det_Tt = log_abs_det(Tt)
    if not log_det_Tt > inst.log_delta_dblprime:
        return BlockOutcome(None, DEST_DET, relay.log_det_T, log_det_Tt, n_low, relay.residual)
    c_hat, residual = Factored.of(Tt).solve(received[:, sel].T / inst.relay_gain)
    return BlockOutcome(c_hat.T, None, relay.log_det_T, log_det_Tt, n_low,
                        max(residual, relay.residual))


@dataclass(frozen=True)
class EndToEnd:
    matrix: np.ndarray | None
    reason: str | None
    log_det_T: float = math.nan
    log_det_Tt: float = math.nan

    @property
    def erased(self) -> bool:
        return self.matrix is None

    def deviation(self) -> float:
        """Largest |M - I| entry relative to the identity's unit diagonal."""
        return float(np.max(np.abs(self.matrix - np.eye(len(self.matrix)))))


def end_to_end_map(inst: SchemeInstanceTV, block: ChannelBlock) -> EndToEnd:
    """Noiseless linear map from stacked source symbols to stacked estimates.

    Row and column ``i*L + k`` refer to source/destination ``i``, stream
    ``k``.  Built by composing source precoding, the first hop, relay
    inversion and redirection, the second hop and destination inversion.
    """
    ops = _BlockOps(inst, block)
    if ops.erasure_reason:
        return EndToEnd(None, ops.erasure_reason, ops.log_det_T, ops.log_det_Tt)
    K, L, d = inst.K, inst.L, inst.d
    A_S = inst.gamma * monomials(inst.inner.members, block.first)  # (d, L)
    # relay j receives sum_i diag(h_ji) A_S c_i
    Y_V = np.zeros((K, d, K * L))
    for j in range(K):
        for i in range(K):
            Y_V[j][:, i * L:(i + 1) * L] = block.first[:, j, i, None] * A_S
    X_V = np.empty_like(Y_V)
    for j in range(K):
        U, _ = ops.relay_lu.solve(Y_V[j] / inst.gamma)
        X_V[j] = inst.relay_gain * ops.Tt_full @ U
    M = np.empty((K * L, K * L))
    for k in range(K):
        Y_D = np.einsum("tj,jtc->tc", block.second[:, k, :], X_V)
        C, _ = ops.dest_lu.solve(Y_D[ops.sel] / inst.relay_gain)
        M[k * L:(k + 1) * L] = C
    return EndToEnd(M, None, ops.log_det_T, ops.log_det_Tt)


@dataclass(frozen=True)
class EffectiveChannel:
    """Noise covariance of the stream estimates, per destination.

    ``relay_part`` is the forwarded relay noise and ``dest_part`` the
    destination noise at unit relay gain; the latter scales with
    ``1 / relay_gain**2``.
    """

    relay_part: np.ndarray | None
    dest_part: np.ndarray | None
    relay_gain: float
    reason: str | None

    @property
    def erased(self) -> bool:
        return self.relay_part is None

    def covariance(self, relay_gain: float | None = None) -> np.ndarray:
        g = self.relay_gain if relay_gain is None else relay_gain
        return self.relay_part + self.dest_part / g**2

    def variances(self, relay_gain: float | None = None) -> np.ndarray:
        return np.diagonal(self.covariance(relay_gain), axis1=1, axis2=2)

    def stream_rates(self, P: float, relay_gain: float | None = None) -> np.ndarray:
        """Gaussian-input rate 0.5*log2(1 + P/var) per (destination, stream)."""
        with np.errstate(divide="ignore"):
            return 0.5 * np.log2(1.0 + P / self.variances(relay_gain))


def effective_noise(inst: SchemeInstanceTV, block: ChannelBlock) -> EffectiveChannel:
    """Covariance of the estimate noise from relay and destination noise.

    Relay noise enters through T^-1, the relay directions, the second hop
    and the destination inversion; destination noise only through the last
    step.  The relay gain cancels on the relay path, so once P >= min_power
    nothing here depends on P.
    """
    ops = _BlockOps(inst, block)
    if ops.erasure_reason:
        return EffectiveChannel(None, None, inst.relay_gain, ops.erasure_reason)
    K, L, d = inst.K, inst.L, inst.d
    F = ops.forward_map()[ops.sel]  # (L, d) relay forward map at the used steps
    eye_sel = np.zeros((L, d))
    eye_sel[np.arange(L), ops.sel] = 1.0
    G_D, _ = ops.dest_lu.solve(eye_sel)
    relay_part = np.empty((K, L, L))
    for k in range(K):
        blocks = [block.second[ops.sel, k, j, None] * F for j in range(K)]
        G_V, _ = ops.dest_lu.solve(np.hstack(blocks) / inst.gamma)
        relay_part[k] = inst.sigma2 * G_V @ G_V.T
    dest_part = np.broadcast_to(inst.sigma2 * G_D @ G_D.T, (K, L, L)).copy()
    return EffectiveChannel(relay_part, dest_part, inst.relay_gain, None)


def per_pair_rate(inst: SchemeInstanceTV, channel: EffectiveChannel) -> np.ndarray:
    """(1 - 3 eps) * sum of stream rates / d, bits per time step, per pair."""
    rates = channel.stream_rates(inst.P, inst.relay_gain)
    return (1.0 - 3.0 * inst.epsilon) * rates.sum(axis=1) / inst.d


@dataclass
class TVReport:
    """Outcome of a run of consecutive blocks."""

    records: list = field(default_factory=list)

    @property
    def n_blocks(self) -> int:
        return len(self.records)

    def _where(self, key):
        return [r for r in self.records if r[key]]

    @property
    def erasure_rate(self) -> float:
        return sum(r["erased"] for r in self.records) / self.n_blocks

    @property
    def numerical_erasures(self) -> int:
        return sum(r["numerical"] for r in self.records)

    @property
    def mse(self) -> float:
        vals = [r["mse"] for r in self.records if not r["erased"]]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_sum_rate(self) -> float:
        vals = [r["sum_rate"] for r in self.records if not r["erased"]]
        return float(np.mean(vals)) if vals else 0.0

    def aggregates(self) -> dict:
        log_t = [r["log_det_T"] for r in self.records]
        return {
            "blocks": self.n_blocks,
            "erasure_rate": self.erasure_rate,
            "numerical_erasures": self.numerical_erasures,
            "mse": self.mse,
            "mean_sum_rate": self.mean_sum_rate,
            "min_log_det_T": float(np.min(log_t)),
            "median_log_det_T": float(np.median(log_t)),
            "source_power": float(np.mean([r["source_power"] for r in self.records])),
            "relay_power": float(np.mean([r["relay_power"] for r in self.records])),
        }


def simulate_blocks(inst: SchemeInstanceTV, real: ChannelRealization, n_blocks: int,
                    seed: int, rates: bool = True) -> TVReport:
    """Run ``n_blocks`` pipelined blocks with Gaussian symbols of variance P.

    Block ``m`` uses first-hop gains of block ``m`` and second-hop gains of
    block ``m + 1``; the realization needs ``(n_blocks + 1) * d`` steps.
    """
    d = inst.d
    if real.T_total < (n_blocks + 1) * d:
        raise ValueError(f"realization has {real.T_total} steps, need {(n_blocks + 1) * d}")
    report = TVReport()
    sigma = math.sqrt(inst.sigma2)
    for m in range(n_blocks):
        rng = stream_rng(seed, m)
        block = channel_block(real, m, d)
        c = rng.normal(0.0, math.sqrt(inst.P), size=(inst.K, inst.L))
        X = encode_sources(inst, c, block.first)
        Y_V = first_hop(X, block.first, sigma * rng.standard_normal((inst.K, d)))
        relay = relay_process(inst, Y_V, block.first, block.second)
        Y_D = second_hop(relay.signals, block.second, sigma * rng.standard_normal((inst.K, d)))
        out = destination_decode(inst, Y_D, block.second, relay)
        rec = {
            "block": m,
            "erased": out.erased,
            "reason": out.reason,
            "numerical": out.numerical,
            "log_det_T": out.log_det_T,
            "log_det_Tt": out.log_det_Tt,
            "n_low_det": out.n_low_det,
            "mse": math.nan if out.erased else float(np.mean((out.estimates - c) ** 2)),
            "sum_rate": 0.0,
            "source_power": float(np.mean(X**2)),
            "relay_power": float(np.mean(relay.signals**2)),
        }
        if rates and not out.erased:
            rec["sum_rate"] = float(per_pair_rate(inst, effective_noise(inst, block)).sum())
        report.records.append(rec)
    return report


def rate_curve(inst: SchemeInstanceTV, blocks: list[ChannelBlock], p_grid) -> np.ndarray:
    """Mean sum rate (bits/step) over non-erased blocks at each P in ``p_grid``.

    Each block's noise covariance is computed once; only the relay gain and
    the signal power change along the grid.
    """
    channels = [ch for ch in (effective_noise(inst, b) for b in blocks) if not ch.erased]
    if not channels:
        raise ValueError("every block was erased")
    curve = []
    for P in p_grid:
        at_p = inst.with_power(P)
        curve.append(np.mean([per_pair_rate(at_p, ch).sum() for ch in channels]))
    return np.array(curve)

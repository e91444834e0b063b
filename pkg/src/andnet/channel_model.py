"""Channel gain processes for the two hops of a K x K x K network.

Layout convention used everywhere in the package: a hop matrix ``H`` has
``H[j, i]`` equal to the gain from transmitter ``i`` to receiver ``j``.
For the first hop this is h_{S_i,V_j}, for the second h_{V_i,D_j}.
Indices are 0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIRST, SECOND = "first", "second"
_HOP_CODES = {FIRST: 0, SECOND: 1}


@dataclass(frozen=True)
class GainDistribution:
    """Continuous real gain distribution.

    ``kind`` is ``"standard-normal"`` or ``"uniform"``; ``low``/``high``
    are only used by the uniform kind.
    """

    kind: str = "uniform"
    low: float = 0.5
    high: float = 2.0

    def __post_init__(self):
        if self.kind not in ("standard-normal", "uniform"):
            raise ValueError(f"unknown gain distribution {self.kind!r}")
        if self.kind == "uniform" and not self.low <= self.high:
            raise ValueError(f"empty uniform interval [{self.low}, {self.high}]")

    @classmethod
    def parse(cls, text: str) -> "GainDistribution":
        """Parse ``"normal"``, ``"standard-normal"`` or ``"uniform:a,b"``."""
        text = text.strip()
        if text in ("normal", "standard-normal"):
            return cls("standard-normal")
        if text.startswith("uniform"):
            _, _, rest = text.partition(":")
            if not rest:
                return cls("uniform")
            low, high = (float(v) for v in rest.split(","))
            return cls("uniform", low, high)
        raise ValueError(f"cannot parse distribution {text!r}")

    def describe(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.low:g},{self.high:g}"
        return self.kind

    @property
    def variance(self) -> float:
        if self.kind == "uniform":
            return (self.high - self.low) ** 2 / 12.0
        return 1.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=size)
        return rng.standard_normal(size=size)


DEFAULT_DIST = GainDistribution()


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one named stream under a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass(frozen=True)
class ChannelRealization:
    """Gains of both hops over ``T_total`` time steps.

    ``first_hop[t, j, i]`` is h_{S_i,V_j}[t] and ``second_hop[t, j, i]``
    is h_{V_i,D_j}[t].
    """

    first_hop: np.ndarray
    second_hop: np.ndarray
    constant: bool = False
    seed: int | None = None
    dist: str | None = None
    K: int = field(init=False)
    T_total: int = field(init=False)

    def __post_init__(self):
        first = np.array(self.first_hop, dtype=float)
        second = np.array(self.second_hop, dtype=float)
        if first.ndim != 3 or first.shape[1] != first.shape[2] or first.shape != second.shape:
            raise ValueError(f"hop arrays must both be T x K x K, got {first.shape} and {second.shape}")
        if not (np.all(np.isfinite(first)) and np.all(np.isfinite(second))):
            raise ValueError("channel gains must be finite")
        if self.constant and not (np.all(first == first[:1]) and np.all(second == second[:1])):
            raise ValueError("constant realization must repeat the same gains at every t")
        first.setflags(write=False)
        second.setflags(write=False)
        object.__setattr__(self, "first_hop", first)
        object.__setattr__(self, "second_hop", second)
        object.__setattr__(self, "K", first.shape[1])
        object.__setattr__(self, "T_total", first.shape[0])

    def hop(self, hop: str) -> np.ndarray:
        if hop == FIRST:
            return self.first_hop
        if hop == SECOND:
            return self.second_hop
        raise ValueError(f"hop must be {FIRST!r} or {SECOND!r}, got {hop!r}")

    def block(self, start: int, length: int, hop: str) -> np.ndarray:
        """Gains of one hop for times ``start .. start+length-1``."""
        if start < 0 or start + length > self.T_total:
            raise IndexError(f"block [{start}, {start + length}) outside 0..{self.T_total}")
        return self.hop(hop)[start:start + length]

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "T_total": self.T_total,
            "constant": self.constant,
            "seed": self.seed,
            "dist": self.dist,
            "first_hop": self.first_hop.ravel().tolist(),
            "second_hop": self.second_hop.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChannelRealization":
        shape = (doc["T_total"], doc["K"], doc["K"])
        return cls(
            np.asarray(doc["first_hop"], dtype=float).reshape(shape),
            np.asarray(doc["second_hop"], dtype=float).reshape(shape),
            constant=bool(doc.get("constant", False)),
            seed=doc.get("seed"),
            dist=doc.get("dist"),
        )

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ChannelRealization":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_counts(K: int, T_total: int) -> None:
    if K < 1 or T_total < 1:
        raise ValueError(f"need K >= 1 and T_total >= 1, got K={K}, T_total={T_total}")


def sample_time_varying(K: int, T_total: int, dist: GainDistribution = DEFAULT_DIST,
                        seed: int = 0) -> ChannelRealization:
    """Draw i.i.d. gain processes for both hops.

    Each (hop, i, j) process comes from its own seeded stream, so a longer
    realization extends a shorter one with the same seed.
    """
    _check_counts(K, T_total)
    hops = np.empty((2, T_total, K, K))
    for hop, code in _HOP_CODES.items():
        for i in range(K):
            for j in range(K):
                hops[code, :, j, i] = dist.sample(stream_rng(seed, code, i, j), T_total)
    return ChannelRealization(hops[0], hops[1], constant=False, seed=seed, dist=dist.describe())


def sample_constant(K: int, dist: GainDistribution = DEFAULT_DIST, seed: int = 0,
                    T_total: int = 1) -> ChannelRealization:
    """One draw per (hop, i, j), repeated over ``T_total`` steps."""
    _check_counts(K, T_total)
    one = sample_time_varying(K, 1, dist, seed)
    first = np.repeat(one.first_hop, T_total, axis=0)
    second = np.repeat(one.second_hop, T_total, axis=0)
    return ChannelRealization(first, second, constant=True, seed=seed, dist=dist.describe())


def hop_matrix(real: ChannelRealization, hop: str, t: int) -> np.ndarray:
    """K x K matrix of one hop at time ``t`` (``[j, i]`` = gain i -> j)."""
    if not 0 <= t < real.T_total:
        raise IndexError(f"time index {t} outside 0..{real.T_total - 1}")
    return real.hop(hop)[t].copy()

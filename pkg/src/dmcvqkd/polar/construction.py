"""Frozen-set construction: polarization weight and Monte Carlo genie-aided SC."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..channel import RandomSource
from . import _kernels

log = logging.getLogger(__name__)

PW_BASE = 2.0**0.25
DEFAULT_MC_TRIALS = 100_000
MC_BATCH = 100
# substream label of the construction draws inside a caller's RandomSource
MC_STREAM = 0x4D43


@dataclass(frozen=True)
class PolarCode:
    """Immutable frozen/information split of a length ``2**n_log2`` code."""

    n_log2: int
    info_count: int
    frozen: np.ndarray  # boolean mask, True on frozen positions
    construction_tag: str

    def __post_init__(self):
        mask = np.array(self.frozen, dtype=np.bool_).reshape(-1)
        if mask.size != 1 << self.n_log2:
            raise ValueError("frozen mask length must equal the block length")
        if int((~mask).sum()) != self.info_count:
            raise ValueError("frozen mask disagrees with info_count")
        mask.setflags(write=False)
        object.__setattr__(self, "frozen", mask)

    @property
    def block_length(self) -> int:
        return 1 << self.n_log2

    @property
    def frozen_set(self) -> np.ndarray:
        return np.flatnonzero(self.frozen)

    @property
    def info_set(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)

    @classmethod
    def from_reliability(cls, n_log2: int, k: int, order: np.ndarray, tag: str) -> PolarCode:
        """Keep the ``k`` indices that come first in ``order`` (most reliable first)."""
        n = 1 << n_log2
        _check_k(n, k)
        mask = np.ones(n, dtype=np.bool_)
        mask[np.asarray(order)[:k]] = False
        return cls(n_log2, k, mask, tag)


def _check_k(n: int, k: int):
    if not 0 < k < n:
        raise ValueError(f"need 0 < K < N, got K={k}, N={n}")


def _check_n(n_log2: int):
    if not 1 <= n_log2 <= 24:
        raise ValueError("n_log2 must lie in 1..24")


def pw_weights(n_log2: int, base: float = PW_BASE) -> np.ndarray:
    """Weight ``sum_j b_j base^j`` of every index, ``b_j`` its bit ``j`` (LSB first)."""
    _check_n(n_log2)
    idx = np.arange(1 << n_log2)
    w = np.zeros(idx.size)
    for j in range(n_log2):
        w += ((idx >> j) & 1) * base**j
    return w


def construct_pw(n_log2: int, k: int, base: float = PW_BASE) -> PolarCode:
    """Freeze the ``N - K`` indices of lowest polarization weight."""
    w = pw_weights(n_log2, base)
    _check_k(w.size, k)
    # stable sort on -w so ties go to the lower index deterministically
    order = np.argsort(-w, kind="stable")
    return PolarCode.from_reliability(n_log2, k, order, f"PW(base={base:.6g})")


@dataclass(frozen=True)
class GenieStatistics:
    """Per-index results of the genie-aided simulation."""

    soft_error: np.ndarray  # mean of P(bit wrong | leaf LLR)
    hard_error: np.ndarray  # decision-error frequency, ties count one half
    mean_llr: np.ndarray
    trials: int

    def reliability_order(self) -> np.ndarray:
        """Indices from most to least reliable.

        Primary key is the soft error estimate, an unbiased estimator of the
        bit-channel error probability with far smaller variance than counting
        decision errors; the mean leaf LLR breaks ties.
        """
        return np.lexsort((-self.mean_llr, self.soft_error))


def cache_dir() -> Path:
    env = os.environ.get("DMCVQKD_CACHE")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "dmcvqkd"


def _cache_key(n_log2, qber, trials, rng: RandomSource, exact) -> str:
    text = f"v1|{n_log2}|{qber!r}|{trials}|{rng.seed}|{rng.stream}|{rng.position}|{int(exact)}"
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def genie_statistics(
    n_log2: int, qber: float, trials: int, rng: RandomSource, exact: bool = True, use_cache: bool = True
) -> GenieStatistics:
    """Genie-aided SC over BSC(qber) on the all-zero word.

    Draws come from a fixed substream of ``rng``, so the result depends only on
    ``(seed, stream, position)`` and not on how much of ``rng`` was consumed.
    Results are cached on disk under :func:`cache_dir`.
    """
    _check_n(n_log2)
    if not 0 < qber < 0.5:
        raise ValueError("qber must lie in (0, 0.5)")
    if trials < 1:
        raise ValueError("trials must be positive")
    path = cache_dir() / f"genie-{_cache_key(n_log2, qber, trials, rng, exact)}.npz"
    if use_cache and path.exists():
        try:
            with np.load(path) as z:
                return GenieStatistics(z["soft"], z["hard"], z["llr"], int(z["trials"]))
        except (OSError, KeyError, ValueError):
            log.warning("ignoring unreadable cache file %s", path)
    n = 1 << n_log2
    gen = rng.fork(MC_STREAM).generator
    soft = np.zeros(n)
    hard = np.zeros(n)
    llr = np.zeros(n)
    mag = float(np.log((1 - qber) / qber))
    done = 0
    while done < trials:
        b = min(MC_BATCH, trials - done)
        errors = gen.random((b, n)) < qber
        _kernels.genie_accumulate(errors, mag, exact, soft, hard, llr)
        done += b
    stats = GenieStatistics(soft / trials, hard / trials, llr / trials, trials)
    if use_cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, soft=stats.soft_error, hard=stats.hard_error, llr=stats.mean_llr, trials=trials)
            os.replace(tmp, path)
        except OSError as exc:
            log.warning("could not write construction cache: %s", exc)
    return stats


def construct_monte_carlo(
    n_log2: int,
    k: int,
    qber: float,
    trials: int = DEFAULT_MC_TRIALS,
    rng: RandomSource | None = None,
    exact: bool = True,
    use_cache: bool = True,
) -> PolarCode:
    """Freeze the ``N - K`` indices with the highest simulated error probability."""
    if trials < 10_000:
        raise ValueError("Monte Carlo construction needs at least 10^4 trials")
    _check_k(1 << n_log2, k)
    rng = rng if rng is not None else RandomSource(0)
    stats = genie_statistics(n_log2, qber, trials, rng, exact, use_cache)
    tag = f"MonteCarlo(p={qber!r}, trials={trials}, seed={rng.seed}, stream={rng.stream})"
    return PolarCode.from_reliability(n_log2, k, stats.reliability_order(), tag)

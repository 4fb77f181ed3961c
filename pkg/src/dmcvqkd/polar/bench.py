"""Frame-error-rate benchmark over synthetic BSC block pairs."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from ..channel import RandomSource
from .codec import SclConfig
from .construction import DEFAULT_MC_TRIALS, PolarCode, construct_monte_carlo, construct_pw
from .leakage import k_for_efficiency
from .reconcile import DEFAULT_HASH_BITS, reconcile_block

log = logging.getLogger(__name__)

CSV_COLUMNS = ("qber", "n_log2", "beta_qkd", "crc_len", "list_size", "trials", "failures", "fer", "ci_lo", "ci_hi")
# substream labels inside the caller's RandomSource
CONSTRUCTION_STREAM = 1
FRAME_STREAM = 2


@dataclass(frozen=True)
class BenchResult:
    qber: float
    n_log2: int
    beta_qkd: float
    crc_len: int
    list_size: int
    trials: int
    failures: int
    fer: float
    ci_lo: float
    ci_hi: float
    # extra bookkeeping, not part of the CSV
    info_count: int = 0
    disclosed_total: int = 0
    undetected: int = 0

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


def clopper_pearson(failures: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    if trials < 1 or not 0 <= failures <= trials:
        raise ValueError("need 0 <= failures <= trials, trials >= 1")
    a = (1 - level) / 2
    lo = 0.0 if failures == 0 else float(stats.beta.ppf(a, failures, trials - failures + 1))
    hi = 1.0 if failures == trials else float(stats.beta.ppf(1 - a, failures + 1, trials - failures))
    return lo, hi


def build_code(
    qber: float,
    n_log2: int,
    beta_qkd: float,
    cfg: SclConfig,
    rng: RandomSource,
    construction: str = "mc",
    mc_trials: int = DEFAULT_MC_TRIALS,
) -> PolarCode:
    _, k = k_for_efficiency(beta_qkd, qber, 1 << n_log2, cfg.crc_len)
    k = max(k, cfg.crc_len + 1)
    if construction == "pw":
        return construct_pw(n_log2, k)
    if construction == "mc":
        return construct_monte_carlo(n_log2, k, qber, mc_trials, rng.fork(CONSTRUCTION_STREAM))
    raise ValueError(f"unknown construction {construction!r}")


def fer_benchmark(
    qber: float,
    n_log2: int,
    beta_qkd: float,
    cfg: SclConfig,
    trials: int,
    rng: RandomSource,
    code: PolarCode | None = None,
    construction: str = "mc",
    mc_trials: int = DEFAULT_MC_TRIALS,
    n_hash: int = DEFAULT_HASH_BITS,
    min_trials: int = 100,
) -> BenchResult:
    """Reconcile ``trials`` random block pairs at crossover ``qber``.

    Frame ``t`` draws from substream ``(FRAME_STREAM, t)`` of ``rng`` so results
    do not depend on evaluation order.  A frame fails when reconciliation
    reports failure; a block accepted with wrong content is counted separately
    as ``undetected``.
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    if code is None:
        code = build_code(qber, n_log2, beta_qkd, cfg, rng, construction, mc_trials)
    elif code.n_log2 != n_log2:
        raise ValueError("supplied code has a different length")
    n = code.block_length
    failures = undetected = disclosed = 0
    for t in range(trials):
        frame = rng.fork(FRAME_STREAM, t)
        gen = frame.generator
        bob = gen.integers(0, 2, n, dtype=np.uint8)
        flips = (gen.random(n) < qber).astype(np.uint8)
        res = reconcile_block(bob, bob ^ flips, code, cfg, qber, n_hash, frame.fork(0))
        disclosed += res.disclosed_bits
        if not res.success:
            failures += 1
        elif not np.array_equal(res.corrected_block, bob):
            undetected += 1
    lo, hi = clopper_pearson(failures, trials)
    log.info("fer q=%g n=%d beta=%g: %d/%d", qber, n_log2, beta_qkd, failures, trials)
    return BenchResult(
        qber, n_log2, beta_qkd, cfg.crc_len, cfg.list_size, trials, failures, failures / trials, lo, hi,
        code.info_count, disclosed, undetected,
    )


def write_csv(results, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(r.row())


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


"""Code dimension and error-correction leakage bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..phasespace import bsc_capacity


def _as_fraction(x) -> Fraction:
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    # a float FER is almost always failures / blocks; recover that ratio
    return Fraction(float(x)).limit_denominator(10**12)


def k_for_efficiency(beta_qkd: float, qber: float, block_length: int, crc_len: int = 0) -> tuple[int, int]:
    """``(K_QKD, K)`` with ``K_QKD = floor(beta C N)`` and ``K = K_QKD + crc_len``."""
    if not 0 < beta_qkd <= 1:
        raise ValueError("beta_qkd must lie in (0, 1]")
    k_qkd = int(math.floor(beta_qkd * bsc_capacity(qber) * block_length))
    return k_qkd, k_qkd + crc_len


def leak_ec(n_blocks: int, block_length: int, k: int, n_hash: int, fer, crc_len: int = 0) -> float:
    """Leaked bits: successful blocks disclose their syndrome, failed ones everything.

    ``crc_len = 0`` gives ``N - K + n_hash`` per good block; passing the CRC
    length counts the transmitted CRC bits too, which makes the total equal the
    sum of disclosed bits reported by the reconciliation.
    """
    if n_blocks < 0 or block_length < 1 or n_hash < 0 or crc_len < 0:
        raise ValueError("counts must be non-negative")
    if not 0 < k <= block_length:
        raise ValueError("need 0 < K <= N")
    f = _as_fraction(fer)
    if not 0 <= f <= 1:
        raise ValueError("FER must lie in [0, 1]")
    # a block never reveals more than its own length
    good = min(block_length - k + crc_len + n_hash, block_length)
    total = n_blocks * (1 - f) * good + n_blocks * f * block_length
    return float(total)


def leak_ec_from_efficiency(
    n_ec_total: float, beta_qkd: float, qber: float, n_hash: int, block_length: int, fer: float = 0.0
) -> float:
    """Leakage written through the efficiency: ``N_tot (1 - beta C + n_hash/N)`` at zero FER."""
    if not 0 <= fer <= 1:
        raise ValueError("FER must lie in [0, 1]")
    c = bsc_capacity(qber)
    per_bit_good = 1.0 - beta_qkd * c + n_hash / block_length
    return n_ec_total * ((1.0 - fer) * per_bit_good + fer)


@dataclass(frozen=True)
class LeakAccount:
    n_ec_blocks: int
    block_length: int
    k: int
    n_hash: int
    failures: int
    qber: float
    crc_len: int = 0

    def __post_init__(self):
        if not 0 <= self.failures <= self.n_ec_blocks:
            raise ValueError("failures must lie in [0, n_ec_blocks]")
        if not self.crc_len < self.k <= self.block_length:
            raise ValueError("need crc_len < K <= N")

    @property
    def fer(self) -> Fraction:
        return Fraction(self.failures, self.n_ec_blocks) if self.n_ec_blocks else Fraction(0)

    @property
    def k_qkd(self) -> int:
        return self.k - self.crc_len

    @property
    def beta_qkd(self) -> float:
        return self.k_qkd / (self.block_length * bsc_capacity(self.qber))

    @property
    def n_ec_total(self) -> int:
        return self.n_ec_blocks * self.block_length

    @property
    def leak_total(self) -> float:
        return leak_ec(self.n_ec_blocks, self.block_length, self.k, self.n_hash, self.fer, self.crc_len)

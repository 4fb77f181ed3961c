"""Polar transform, CRC and decoder configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


def check_length(n: int) -> int:
    """Return ``log2(n)`` for a power of two ``n >= 2``."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"block length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def polar_transform(bits) -> np.ndarray:
    """``u F^{(x)n}`` over GF(2) in natural index order (an involution)."""
    x = np.array(bits, dtype=np.uint8).reshape(-1)
    check_length(x.size)
    if x.max(initial=0) > 1:
        raise ValueError("input must be binary")
    _kernels.polar_transform_inplace(x)
    return x


@dataclass(frozen=True)
class CrcSpec:
    """CRC generator; ``poly`` includes the leading ``x^length`` term."""

    length: int
    poly: int

    def __post_init__(self):
        if self.length not in (8, 16):
            raise ValueError("CRC length must be 8 or 16")
        if self.poly.bit_length() - 1 != self.length:
            raise ValueError("polynomial degree must equal the CRC length")

    def compute(self, bits) -> np.ndarray:
        return _kernels.crc_remainder(np.asarray(bits, dtype=np.uint8), self.poly, self.length)


CRC8 = CrcSpec(8, 0x107)  # x^8 + x^2 + x + 1
CRC16 = CrcSpec(16, 0x11021)  # x^16 + x^12 + x^5 + 1
CRC_BY_LENGTH = {8: CRC8, 16: CRC16}


@dataclass(frozen=True)
class SclConfig:
    list_size: int = 32
    crc: CrcSpec | None = CRC8
    # exact LLR combination instead of min-sum; slower, for cross-checks
    exact: bool = False
    fast_nodes: bool = True

    def __post_init__(self):
        L = self.list_size
        if not 1 <= L <= 128 or L & (L - 1):
            raise ValueError("list size must be a power of two in [1, 128]")

    @property
    def crc_len(self) -> int:
        return 0 if self.crc is None else self.crc.length


def channel_llr(bits, qber: float) -> np.ndarray:
    """BSC evidence ``log((1-q)/q) * (1 - 2 b)`` for each bit."""
    if not 0 < qber < 0.5:
        raise ValueError("qber must lie in (0, 0.5)")
    b = np.asarray(bits, dtype=np.float64)
    return np.log((1 - qber) / qber) * (1.0 - 2.0 * b)


def scl_decode(llr, frozen: np.ndarray, frozen_values, cfg: SclConfig, crc_ref=None):
    """Run the list decoder; returns ``(codeword, crc_found, candidates)``.

    ``frozen_values`` has length N and is read only on frozen positions.
    """
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    frozen = np.ascontiguousarray(frozen, dtype=np.bool_)
    values = np.ascontiguousarray(frozen_values, dtype=np.uint8)
    if not (llr.size == frozen.size == values.size):
        raise ValueError("LLR, frozen mask and frozen values differ in length")
    check_length(llr.size)
    if cfg.crc is None:
        poly, length, ref = 0, 0, np.zeros(0, np.uint8)
    else:
        poly, length = cfg.crc.poly, cfg.crc.length
        ref = np.ascontiguousarray(crc_ref, dtype=np.uint8)
        if ref.size != length:
            raise ValueError("CRC reference has the wrong length")
    fast = cfg.fast_nodes and not cfg.exact
    return _kernels.scl_decode(llr, frozen, values, cfg.list_size, poly, length, ref, cfg.exact, fast)

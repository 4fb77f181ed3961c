"""Toeplitz privacy amplification, epsilon budget and finite-size key length."""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml
from scipy import linalg

from .channel import RandomSource

log = logging.getLogger(__name__)

# above this many input bits the FFT path is split into segments so that the
# rounded float convolution stays exact
FFT_SEGMENT = 1 << 14
DIRECT_LIMIT = 1 << 12

KEY_MAGIC = b"DMQK"
KEY_VERSION = 1


@dataclass(frozen=True)
class ToeplitzSeed:
    """Seed of an ``l x m`` binary Toeplitz matrix.

    ``bits[k + m - 1]`` is the constant along diagonal ``i - j = k``, so the
    matrix entry is ``T[i, j] = bits[i - j + m - 1]``.
    """

    bits: np.ndarray
    out_len: int
    in_len: int

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if self.out_len < 1 or self.in_len < 1:
            raise ValueError("dimensions must be positive")
        if bits.ndim != 1 or bits.size != self.out_len + self.in_len - 1:
            raise ValueError(f"seed needs {self.out_len + self.in_len - 1} bits, got {bits.size}")
        if bits.size and bits.max() > 1:
            raise ValueError("seed must be binary")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def random(cls, out_len: int, in_len: int, rng: RandomSource) -> ToeplitzSeed:
        seed = cls(rng.bits(out_len + in_len - 1), out_len, in_len)
        log.debug("toeplitz seed drawn: %d bits (l=%d, m=%d)", seed.bits.size, out_len, in_len)
        return seed

    @classmethod
    def from_row_col(cls, first_row, first_col) -> ToeplitzSeed:
        row = np.asarray(first_row, dtype=np.uint8)
        col = np.asarray(first_col, dtype=np.uint8)
        if row.size == 0 or col.size == 0 or row[0] != col[0]:
            raise ValueError("first row and column must share their leading entry")
        m, l = row.size, col.size
        bits = np.concatenate([row[::-1], col[1:]])
        return cls(bits, l, m)

    @property
    def first_row(self) -> np.ndarray:
        return self.bits[: self.in_len][::-1].copy()

    @property
    def first_col(self) -> np.ndarray:
        return self.bits[self.in_len - 1 :].copy()

    def matrix(self) -> np.ndarray:
        return linalg.toeplitz(self.first_col, self.first_row).astype(np.uint8)

    def digest(self) -> str:
        return hashlib.sha256(np.packbits(self.bits).tobytes()).hexdigest()


def _hash_direct(x: np.ndarray, seed: ToeplitzSeed) -> np.ndarray:
    t = seed.matrix().astype(np.float32)
    y = t @ x.astype(np.float32)
    return (y.astype(np.int64) & 1).astype(np.uint8)


def _hash_fft(x: np.ndarray, seed: ToeplitzSeed) -> np.ndarray:
    l, m = seed.out_len, seed.in_len
    s = seed.bits.astype(np.float64)
    acc = np.zeros(l, dtype=np.int64)
    for j0 in range(0, m, FFT_SEGMENT):
        xb = x[j0 : j0 + FFT_SEGMENT].astype(np.float64)
        b = xb.size
        if not xb.any():
            continue
        # sub-matrix T[:, j0:j0+b] is Toeplitz with this seed slice
        lo = m - b - j0
        sb = s[lo : lo + l + b - 1]
        size = 1 << (l + 2 * b - 2).bit_length()
        conv = np.fft.irfft(np.fft.rfft(sb, size) * np.fft.rfft(xb, size), size)
        acc += np.rint(conv[b - 1 : b - 1 + l]).astype(np.int64)
    return (acc & 1).astype(np.uint8)


def toeplitz_hash(bits, seed: ToeplitzSeed, out_len: int | None = None, method: str = "auto") -> np.ndarray:
    """``T x`` over GF(2).

    ``method`` is ``"direct"`` (dense multiply), ``"fft"`` (convolution) or
    ``"auto"``; both paths return identical bits.
    """
    x = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if out_len is not None and out_len != seed.out_len:
        raise ValueError(f"seed is for {seed.out_len} output bits, asked for {out_len}")
    if x.size != seed.in_len:
        raise ValueError(f"seed is for {seed.in_len} input bits, got {x.size}")
    if seed.out_len > seed.in_len:
        raise ValueError("output length exceeds input length")
    if method == "auto":
        method = "direct" if seed.in_len <= DIRECT_LIMIT else "fft"
    if method == "direct":
        return _hash_direct(x, seed)
    if method == "fft":
        return _hash_fft(x, seed)
    raise ValueError(f"unknown method {method!r}")


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(repr(float(x)))


@dataclass(frozen=True)
class EpsilonBudget:
    eps_cor: float
    eps_sec: float
    eps_total: float


def _check_eps(**eps):
    for name, val in eps.items():
        if not 0 < val < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {val!r}")


def epsilon_budget(eps_pa, eps_bar, eps_et, eps_at, eps_ec) -> EpsilonBudget:
    """Compose the security parameters.

    Sums are carried out on the decimal values as written, so ``8e-11 + 2e-11``
    gives exactly ``1e-10``.
    """
    _check_eps(eps_pa=eps_pa, eps_bar=eps_bar, eps_et=eps_et, eps_at=eps_at, eps_ec=eps_ec)
    pa, bar, et, at, ec = map(_exact, (eps_pa, eps_bar, eps_et, eps_at, eps_ec))
    sec = max(pa / 2 + bar, et + at)
    return EpsilonBudget(float(ec), float(sec), float(sec + ec))


@dataclass(frozen=True)
class KeyLengthParams:
    n: int
    entropy_rate: float
    delta_bar: float = 0.0
    delta_w: float = 0.0
    leak_ec: float = 0.0
    eps_pa: float = 2e-11
    eps_ec: float = 2e-11
    eps_et: float = 1e-11
    eps_at: float = 7e-11
    eps_bar: float = 7e-11

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.delta_bar < 0 or self.delta_w < 0:
            raise ValueError("penalties must be non-negative")
        if self.leak_ec < 0:
            raise ValueError("leak must be non-negative")
        _check_eps(eps_pa=self.eps_pa, eps_ec=self.eps_ec, eps_et=self.eps_et, eps_at=self.eps_at, eps_bar=self.eps_bar)

    def budget(self) -> EpsilonBudget:
        return epsilon_budget(self.eps_pa, self.eps_bar, self.eps_et, self.eps_at, self.eps_ec)


def pa_penalty(eps_pa: float) -> float:
    return 2.0 * math.log2(1.0 / eps_pa)


def key_length(params: KeyLengthParams) -> int:
    """Largest admissible final key length, floored at zero."""
    net = params.entropy_rate - params.delta_bar - params.delta_w
    raw = math.fsum([params.n * net, -params.leak_ec, -pa_penalty(params.eps_pa)])
    if raw <= 0:
        return 0
    return int(math.floor(raw))


def backsolve_entropy_rate(
    target_rate: float,
    total_rounds: int,
    n: int,
    leak_ec: float,
    eps_pa: float = 2e-11,
    delta_bar: float = 0.0,
    delta_w: float = 0.0,
) -> float:
    """Entropy rate that makes ``key_length / total_rounds`` equal ``target_rate``."""
    if n < 1 or total_rounds < 1:
        raise ValueError("round counts must be positive")
    return (target_rate * total_rounds + leak_ec + pa_penalty(eps_pa)) / n + delta_bar + delta_w


def aggregate_skr(rate_pol1: float, rate_pol2: float, symbol_rate: float) -> float:
    """Secret key rate in bit/s from two polarisation channels."""
    if min(rate_pol1, rate_pol2, symbol_rate) < 0:
        raise ValueError("rates must be non-negative")
    return (rate_pol1 + rate_pol2) * symbol_rate


@dataclass(frozen=True)
class EntropySidecar:
    """Externally computed entropy bound and penalties for one channel."""

    entropy_rate: float
    delta_bar: float = 0.0
    delta_w: float = 0.0
    note: str = ""

    def __post_init__(self):
        for name in ("entropy_rate", "delta_bar", "delta_w"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta_bar < 0 or self.delta_w < 0:
            raise ValueError("penalties must be non-negative")


def load_sidecar(path) -> EntropySidecar:
    data = yaml.safe_load(Path(path).read_text()) or {}
    unknown = set(data) - {"entropy_rate", "delta_bar", "delta_w", "note"}
    if unknown:
        raise ValueError(f"unknown sidecar keys: {sorted(unknown)}")
    if "entropy_rate" not in data:
        raise ValueError("sidecar lacks entropy_rate")
    return EntropySidecar(
        float(data["entropy_rate"]),
        float(data.get("delta_bar", 0.0)),
        float(data.get("delta_w", 0.0)),
        str(data.get("note", "")),
    )


def save_sidecar(sidecar: EntropySidecar, path) -> None:
    Path(path).write_text(yaml.safe_dump(asdict(sidecar), sort_keys=False))


def write_key(path, key_bits, seed: ToeplitzSeed, budget: EpsilonBudget) -> None:
    """Packed key file: magic, version, bit count, seed digest, epsilons, payload."""
    key_bits = np.asarray(key_bits, dtype=np.uint8)
    header = KEY_MAGIC + struct.pack(
        "<HQ32s3d", KEY_VERSION, key_bits.size, bytes.fromhex(seed.digest()), budget.eps_cor, budget.eps_sec, budget.eps_total
    )
    Path(path).write_bytes(header + np.packbits(key_bits).tobytes())


def read_key(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != KEY_MAGIC:
        raise ValueError("not a key file")
    fmt = "<HQ32s3d"
    size = struct.calcsize(fmt)
    version, count, digest, cor, sec, tot = struct.unpack(fmt, raw[4 : 4 + size])
    if version != KEY_VERSION:
        raise ValueError(f"unsupported key file version {version}")
    bits = np.unpackbits(np.frombuffer(raw[4 + size :], dtype=np.uint8))[:count]
    meta = {"seed_digest": digest.hex(), "eps_cor": cor, "eps_sec": sec, "eps_total": tot}
    return bits, meta

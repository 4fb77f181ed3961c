"""Quadrant key map with radial postselection, Gray labelling and sifting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .phasespace import QUADRATURE_SCALE, QuadratureSample

DISCARD = -1  # the "no symbol" outcome

# symbol -> 2-bit label, counter-clockwise 00, 01, 11, 10
GRAY_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
GRAY_TAG = "gray-ccw-00-01-11-10"


@dataclass(frozen=True)
class KeyMapParams:
    delta_r: float = 0.1
    m_limit: float = 7.0
    # rotation applied to the outcome phase before quantisation
    phase_offset: float = 0.0

    def __post_init__(self):
        if not 0 <= self.delta_r < self.m_limit:
            raise ValueError("need 0 <= delta_r < m_limit")


@dataclass(frozen=True)
class SiftResult:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    qber: float  # bit-level crossover between the two strings
    postselect_fraction: float
    symbol_error_rate: float
    kept: np.ndarray  # boolean mask over the input rounds


def key_map_array(q, p, params: KeyMapParams) -> np.ndarray:
    """Vectorised key map; returns symbols 0..3 or ``DISCARD``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    theta = np.mod(np.arctan2(p, q) - params.phase_offset, 2 * np.pi)
    sym = np.floor(2 * theta / np.pi).astype(np.int64)
    # theta can round up to exactly 2 pi
    sym = np.minimum(sym, 3)
    r = np.sqrt((q * q + p * p) / 2.0)
    keep = (r >= params.delta_r) & (r <= params.m_limit)
    return np.where(keep, sym, DISCARD)


def key_map(sample: QuadratureSample, params: KeyMapParams) -> int | None:
    """Symbol of one outcome, or ``None`` when it is postselected away."""
    s = int(key_map_array(sample.q, sample.p, params))
    return None if s == DISCARD else s


def symbols_to_bits(symbols) -> np.ndarray:
    """Flattened Gray labels, two bits per symbol."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() > 3):
        raise ValueError("cannot label discarded symbols")
    return GRAY_BITS[symbols].reshape(-1)


def sift(samples, truth, params: KeyMapParams) -> SiftResult:
    """Key-map Bob's outcomes and align Alice's symbols to the kept rounds.

    ``samples`` is an ``(n, 2)`` array of ``(q, p)`` or a sequence of
    :class:`QuadratureSample`; ``truth`` holds Alice's symbols.
    """
    if not isinstance(samples, np.ndarray):
        samples = np.array([[s.q, s.p] for s in samples], dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=np.int64)
    if samples.shape[0] != truth.size:
        raise ValueError("samples and truth differ in length")
    bob = key_map_array(samples[:, 0], samples[:, 1], params)
    kept = bob != DISCARD
    a_sym = truth[kept]
    b_sym = bob[kept]
    a_bits = symbols_to_bits(a_sym)
    b_bits = symbols_to_bits(b_sym)
    n = truth.size
    qber = float(np.mean(a_bits != b_bits)) if a_bits.size else 0.0
    ser = float(np.mean(a_sym != b_sym)) if a_sym.size else 0.0
    frac = float(kept.sum() / n) if n else 0.0
    return SiftResult(a_bits, b_bits, qber, frac, ser, kept)


def postselect_fraction_oracle(mean, noise_variance: float, params) -> float:
    """Probability that one outcome survives postselection.

    Integrates the Rice density of the radius ``R = sqrt(q^2 + p^2)`` of a
    circular Gaussian with per-quadrature variance ``noise_variance`` and
    centre ``sqrt(2) * mean`` over ``sqrt(2) delta_r <= R <= sqrt(2) M``.
    ``params`` is a :class:`KeyMapParams` or a ``(delta_r, m_limit)`` pair; the
    pair form also admits the degenerate annulus ``delta_r == m_limit``.
    """
    if not noise_variance > 0:
        raise ValueError("noise variance must be positive")
    if isinstance(params, KeyMapParams):
        delta_r, m_limit = params.delta_r, params.m_limit
    else:
        delta_r, m_limit = params
    nu = QUADRATURE_SCALE * abs(complex(mean))
    s2 = float(noise_variance)
    lo = QUADRATURE_SCALE * delta_r
    hi = QUADRATURE_SCALE * m_limit
    if hi <= lo:
        return 0.0

    def density(r):
        # i0e keeps the Bessel factor finite; the exponent absorbs its scaling
        z = r * nu / s2
        return r / s2 * math.exp(-((r - nu) ** 2) / (2 * s2)) * special.i0e(z)

    # split at the peak region so quad sees the bulk
    sigma = math.sqrt(s2)
    edges = [lo]
    for x in (nu - 8 * sigma, nu, nu + 8 * sigma):
        if lo < x < hi:
            edges.append(x)
    edges.append(hi)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e, info = integrate.quad(density, a, b, epsabs=1e-13, epsrel=1e-11, limit=200, full_output=1)[:3]
        if e > 1e-8:
            raise RuntimeError(f"quadrature did not converge on [{a}, {b}]: estimate {val}, error {e}, evaluations {info['neval']}")
        total += val
    return min(1.0, max(0.0, total))

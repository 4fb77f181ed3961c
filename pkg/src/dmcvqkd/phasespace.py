"""Phase-space conventions, QPSK constellation and displaced-moment estimators.

Shot-noise units: a heterodyne measurement returns two quadratures ``q`` and
``p`` whose vacuum variance is 1 each, with means ``sqrt(2) * Re(alpha)`` and
``sqrt(2) * Im(alpha)``.  The complex outcome ``gamma = (q + i p) / sqrt(2)``
then follows the Husimi Q-function of the received state, so that
``E|gamma - alpha|^2 = 1`` for a coherent state and the radial coordinate
``r = sqrt((q^2 + p^2) / 2)`` equals ``|gamma|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# conversion between a complex amplitude and the mean of its (q, p) outcome
QUADRATURE_SCALE = math.sqrt(2.0)
# per-quadrature variance of an ideal heterodyne outcome on a coherent state
VACUUM_VARIANCE = 1.0


@dataclass(frozen=True)
class ComplexAmplitude:
    """Coherent amplitude in shot-noise units."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError("amplitude must be finite")

    @classmethod
    def from_complex(cls, z: complex) -> ComplexAmplitude:
        return cls(float(z.real), float(z.imag))

    def __complex__(self) -> complex:
        return complex(self.re, self.im)

    def __abs__(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def phase(self) -> float:
        return math.atan2(self.im, self.re)


@dataclass(frozen=True)
class QuadratureSample:
    """One heterodyne outcome ``(q, p)``."""

    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValueError("quadratures must be finite")

    @property
    def radius(self) -> float:
        return math.sqrt((self.q * self.q + self.p * self.p) / 2.0)

    @property
    def gamma(self) -> complex:
        return complex(self.q, self.p) / QUADRATURE_SCALE


@dataclass(frozen=True)
class Constellation:
    """Four coherent states ``amplitude * exp(i (x pi/2 + pi/4))``."""

    amplitude: float
    size: int = 4

    def __post_init__(self):
        if self.size != 4:
            raise ValueError("only QPSK (size 4) is supported")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def phases(self) -> tuple[float, ...]:
        return tuple(x * math.pi / 2 + math.pi / 4 for x in range(self.size))

    def states(self) -> list[ComplexAmplitude]:
        return [qpsk_state(x, self.amplitude) for x in range(self.size)]

    def as_array(self) -> np.ndarray:
        return np.array([complex(s) for s in self.states()])


@dataclass(frozen=True)
class DisplacedMoments:
    """Estimates of the displaced photon-number moments of one state."""

    mean_n: float
    mean_n2: float
    count: int
    # standard errors of the two estimates
    se_n: float = float("nan")
    se_n2: float = float("nan")

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not (math.isfinite(self.mean_n) and math.isfinite(self.mean_n2)):
            raise ValueError("moment estimates must be finite")


def qpsk_state(x: int, amplitude: float) -> ComplexAmplitude:
    """Coherent amplitude of QPSK symbol ``x`` (0..3)."""
    if x not in (0, 1, 2, 3):
        raise ValueError(f"symbol index must be in 0..3, got {x!r}")
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    theta = x * math.pi / 2 + math.pi / 4
    return ComplexAmplitude(amplitude * math.cos(theta), amplitude * math.sin(theta))


def qpsk_amplitudes(symbols: np.ndarray, amplitude: float) -> np.ndarray:
    """Vectorised :func:`qpsk_state` returning complex amplitudes."""
    symbols = np.asarray(symbols)
    if symbols.size and (symbols.min() < 0 or symbols.max() > 3):
        raise ValueError("symbol indices must be in 0..3")
    return amplitude * np.exp(1j * (symbols * np.pi / 2 + np.pi / 4))


def to_gamma(q, p) -> np.ndarray:
    """Complex heterodyne outcome from quadrature arrays."""
    return (np.asarray(q, dtype=float) + 1j * np.asarray(p, dtype=float)) / QUADRATURE_SCALE


def estimate_displaced_moments(samples, beta) -> DisplacedMoments:
    """Estimate ``<n>`` and ``<n^2>`` of the state displaced by ``-beta``.

    Heterodyne samples the Q-function, i.e. anti-normally ordered moments, so
    with ``d = |gamma - beta|^2``::

        <n>   = E[d] - 1
        <n^2> = E[d^2] - 3 E[d] + 1

    Parameters
    ----------
    samples
        Sequence of :class:`QuadratureSample` or an ``(n, 2)`` array of (q, p).
    beta
        Displacement, a :class:`ComplexAmplitude` or complex number.
    """
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("sample array must have shape (n, 2)")
        q, p = arr[:, 0], arr[:, 1]
    else:
        samples = list(samples)
        q = np.array([s.q for s in samples], dtype=float)
        p = np.array([s.p for s in samples], dtype=float)
    if q.size == 0:
        raise ValueError("no samples")
    b = complex(beta)
    d = np.abs(to_gamma(q, p) - b) ** 2
    n = d.size
    m1 = float(d.mean())
    m2 = float((d * d).mean())
    # per-sample terms whose means are the two estimators
    t_n = d - 1.0
    t_n2 = d * d - 3.0 * d + 1.0
    se_n = float(t_n.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    se_n2 = float(t_n2.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return DisplacedMoments(m1 - 1.0, m2 - 3.0 * m1 + 1.0, n, se_n, se_n2)


def binary_entropy(prob: float) -> float:
    """Binary Shannon entropy in bits, with ``H(0) = H(1) = 0``."""
    if not 0.0 <= prob <= 1.0 or math.isnan(prob):
        raise ValueError(f"probability must lie in [0, 1], got {prob!r}")
    if prob == 0.0 or prob == 1.0:
        return 0.0
    return -prob * math.log2(prob) - (1.0 - prob) * math.log2(1.0 - prob)


def bsc_capacity(prob: float) -> float:
    """Capacity ``1 - H2(p)`` of a binary symmetric channel."""
    return 1.0 - binary_entropy(prob)

"""Trusted-noise Gaussian channel and heterodyne sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phasespace import QUADRATURE_SCALE, VACUUM_VARIANCE, ComplexAmplitude, QuadratureSample


@dataclass
class RandomSource:
    """Seeded counter-based random stream (Philox).

    ``stream`` selects an independent substream of the same seed, so workers can
    each take one without coordination.  ``position`` skips ahead by that many
    Philox blocks; the same ``(seed, stream, position)`` always reproduces the
    same draws.
    """

    seed: int
    stream: tuple[int, ...] = ()
    position: int = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if isinstance(self.stream, int):
            self.stream = (self.stream,)
        self.stream = tuple(int(s) for s in self.stream)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(int(self.seed), spawn_key=self.stream)
            bitgen = np.random.Philox(ss)
            if self.position:
                bitgen.advance(self.position)
            self._gen = np.random.Generator(bitgen)
        return self._gen

    def fork(self, *index: int) -> RandomSource:
        """Independent substream labelled by ``index``."""
        return RandomSource(self.seed, self.stream + tuple(index))

    def bits(self, n: int) -> np.ndarray:
        return self.generator.integers(0, 2, size=n, dtype=np.uint8)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, size=size)


@dataclass(frozen=True)
class ChannelParams:
    """Channel transmittance plus the trusted receiver model.

    ``nu_el`` is the electronic noise of each homodyne detector and
    ``excess_noise`` the channel excess noise at the receiver input, both in
    shot-noise units.
    """

    eta_ch: float = 0.63387
    eta_d: float = 0.33
    nu_el: float = 0.043
    excess_noise: float = 0.0

    def __post_init__(self):
        for name in ("eta_ch", "eta_d", "nu_el", "excess_noise"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 < self.eta_ch <= 1:
            raise ValueError("eta_ch must lie in (0, 1]")
        if not 0 < self.eta_d <= 1:
            raise ValueError("eta_d must lie in (0, 1]")
        if self.nu_el < 0 or self.excess_noise < 0:
            raise ValueError("noise terms must be non-negative")

    @property
    def transmittance(self) -> float:
        return self.eta_ch * self.eta_d

    @property
    def quadrature_variance(self) -> float:
        return heterodyne_variance(self)


def fiber_transmittance(length_km: float, loss_db_per_km: float) -> float:
    """Power transmittance ``10^(-length * loss / 10)`` of a fiber span."""
    if length_km < 0 or loss_db_per_km < 0:
        raise ValueError("length and loss must be non-negative")
    return 10.0 ** (-length_km * loss_db_per_km / 10.0)


def heterodyne_variance(params: ChannelParams) -> float:
    """Variance of each heterodyne quadrature around its mean.

    Vacuum contributes 1, electronic noise is added once per quadrature, and
    excess noise is halved by the heterodyne beam splitter after detection loss.
    """
    return VACUUM_VARIANCE + params.nu_el + params.eta_d * params.excess_noise / 2.0


def received_mean(alpha, params: ChannelParams):
    """Mean amplitude after the channel and detector loss, ``alpha * sqrt(eta)``.

    Accepts a :class:`ComplexAmplitude` (returned as such) or complex arrays.
    """
    gain = math.sqrt(params.transmittance)
    if isinstance(alpha, ComplexAmplitude):
        return ComplexAmplitude(alpha.re * gain, alpha.im * gain)
    return np.asarray(alpha) * gain


def sample_heterodyne(means, params: ChannelParams, rng: RandomSource) -> np.ndarray:
    """Heterodyne outcomes for an array of received mean amplitudes.

    Returns an ``(n, 2)`` array of ``(q, p)`` pairs.
    """
    means = np.atleast_1d(np.asarray(means, dtype=complex))
    sigma = math.sqrt(heterodyne_variance(params))
    noise = rng.normal((means.size, 2), scale=sigma)
    out = np.empty((means.size, 2))
    out[:, 0] = QUADRATURE_SCALE * means.real + noise[:, 0]
    out[:, 1] = QUADRATURE_SCALE * means.imag + noise[:, 1]
    return out


def measure_heterodyne(mean: ComplexAmplitude, params: ChannelParams, rng: RandomSource) -> QuadratureSample:
    """A single heterodyne outcome on a state with the given received mean."""
    q, p = sample_heterodyne(complex(mean), params, rng)[0]
    return QuadratureSample(float(q), float(p))

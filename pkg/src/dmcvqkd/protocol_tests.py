"""Energy test, acceptance test and test-round selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .channel import RandomSource
from .phasespace import DisplacedMoments

OBSERVABLES = ("n", "n2")


@dataclass(frozen=True)
class EnergyTestParams:
    beta_et: float = 5.0
    k_t: int = 1
    max_outlier_fraction: float = 1e-8

    def __post_init__(self):
        if not self.beta_et > 0:
            raise ValueError("beta_et must be positive")
        if self.k_t < 1:
            raise ValueError("k_t must be >= 1")
        if not 0 <= self.max_outlier_fraction <= 1:
            raise ValueError("outlier fraction must lie in [0, 1]")

    @property
    def allowed_outliers(self) -> int:
        # tiny relative slack so float round-off in the product cannot drop a
        # whole allowance unit (e.g. 0.3 * 10 = 2.9999999999999996)
        return int(math.floor(self.max_outlier_fraction * self.k_t * (1 + 1e-12)))


@dataclass(frozen=True)
class AcceptanceSet:
    """Expected per-state moments plus the tolerance recipe.

    ``expected`` maps state index -> ``{"n": value, "n2": value}``; ``bounds``
    gives the observable range bound ``x`` for each observable.  When ``m_x`` is
    None the round count of each observation is used.
    """

    expected: dict[int, dict[str, float]]
    t_f: float = 1.5
    eps_at: float = 7e-11
    bounds: dict[str, float] = field(default_factory=lambda: {"n": 49.0, "n2": 2401.0})
    m_x: int | None = None
    # displacement per state used when estimating the moments
    displacements: dict[int, complex] | None = None
    two_sided: bool = False

    def __post_init__(self):
        if self.t_f < 0:
            raise ValueError("t_F must be non-negative")
        if self.m_x is not None and self.m_x < 1:
            raise ValueError("m_X must be >= 1")
        if not 0 < self.eps_at < 1:
            raise ValueError("eps_AT must lie in (0, 1)")
        for state, obs in self.expected.items():
            for key in OBSERVABLES:
                if key not in obs or not math.isfinite(obs[key]):
                    raise ValueError(f"state {state}: missing or non-finite expectation {key!r}")

    @classmethod
    def from_detection_limit(cls, expected, m_limit: float = 7.0, **kw) -> AcceptanceSet:
        """Bounds ``x = M^2`` for ``<n>`` and ``x = M^4`` for ``<n^2>``."""
        return cls(expected, bounds={"n": m_limit**2, "n2": m_limit**4}, **kw)

    def to_dict(self) -> dict:
        out = {
            "expected": {int(k): {o: float(v[o]) for o in OBSERVABLES} for k, v in self.expected.items()},
            "t_f": float(self.t_f),
            "eps_at": float(self.eps_at),
            "bounds": {k: float(v) for k, v in self.bounds.items()},
            "m_x": self.m_x,
            "two_sided": bool(self.two_sided),
        }
        if self.displacements is not None:
            out["displacements"] = {int(k): [complex(v).real, complex(v).imag] for k, v in self.displacements.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> AcceptanceSet:
        allowed = {"expected", "t_f", "eps_at", "bounds", "m_x", "two_sided", "displacements"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown acceptance-set keys: {sorted(unknown)}")
        if "expected" not in data:
            raise ValueError("acceptance set lacks 'expected'")
        expected = {int(k): {o: float(v[o]) for o in v} for k, v in data["expected"].items()}
        disp = data.get("displacements")
        if disp is not None:
            disp = {int(k): complex(v[0], v[1]) for k, v in disp.items()}
        kw = {k: data[k] for k in ("t_f", "eps_at", "m_x", "two_sided") if k in data and data[k] is not None}
        if "bounds" in data:
            kw["bounds"] = {k: float(v) for k, v in data["bounds"].items()}
        return cls(expected, displacements=disp, **kw)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> AcceptanceSet:
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})


@dataclass(frozen=True)
class TestVerdict:
    __test__ = False  # not a pytest class

    passed: bool
    margins: dict = field(default_factory=dict)
    outliers: int = 0
    allowed: int = 0

    def __bool__(self):
        return self.passed


def select_test_rounds(total: int, ratio: float, rng: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    """Random split into ``round(ratio * total)`` test rounds and the key rounds.

    Both index arrays are returned sorted.
    """
    if not 0 < ratio < 1:
        raise ValueError("testing ratio must lie in (0, 1)")
    k_t = count_test_rounds(total, ratio)
    perm = rng.generator.permutation(total)
    return np.sort(perm[:k_t]), np.sort(perm[k_t:])


def count_test_rounds(total: int, ratio: float) -> int:
    """``k_T = round(ratio * N)`` in exact arithmetic for large ``N``."""
    return int(round(Fraction(repr(ratio)) * int(total)))


def radial_coordinate(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    return np.sqrt((samples[:, 0] ** 2 + samples[:, 1] ** 2) / 2.0)


def energy_test(samples: np.ndarray, params: EnergyTestParams) -> TestVerdict:
    """Pass iff at most ``floor(l_T/k_T * k_T)`` outcomes reach ``beta_et``."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if samples.shape[0] != params.k_t:
        raise ValueError(f"expected {params.k_t} test samples, got {samples.shape[0]}")
    outliers = int(np.count_nonzero(radial_coordinate(samples) >= params.beta_et))
    allowed = params.allowed_outliers
    return TestVerdict(outliers <= allowed, {"outliers": outliers, "allowed": allowed}, outliers, allowed)


def mu_bound(x: float, m: int, eps_at: float) -> float:
    """Statistical tolerance ``sqrt(x^2 / (2 m) * ln(2 / eps_AT))``."""
    if x < 0 or not math.isfinite(x):
        raise ValueError("x must be a finite non-negative bound")
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < eps_at < 1:
        raise ValueError("eps_AT must lie in (0, 1)")
    return math.sqrt(x * x / (2.0 * m) * math.log(2.0 / eps_at))


def acceptance_test(observed: dict[int, DisplacedMoments], accept: AcceptanceSet) -> TestVerdict:
    """Compare observed moments with the acceptance set.

    Each check is ``observed <= expected + t_F * mu_X`` (upper, one-sided);
    with ``two_sided`` the absolute deviation is bounded instead.  ``margins``
    maps ``(state, observable)`` to the slack left, negative when violated.
    """
    margins = {}
    passed = True
    for state, exp in accept.expected.items():
        if state not in observed:
            raise KeyError(f"no observation for state {state}")
        obs = observed[state]
        m = accept.m_x if accept.m_x is not None else obs.count
        values = {"n": obs.mean_n, "n2": obs.mean_n2}
        for key in OBSERVABLES:
            if key not in accept.bounds:
                raise KeyError(f"no range bound for observable {key!r}")
            tol = accept.t_f * mu_bound(accept.bounds[key], m, accept.eps_at)
            dev = values[key] - exp[key]
            if accept.two_sided:
                dev = abs(dev)
            margin = tol - dev
            margins[(state, key)] = margin
            # equality passes; any positive excess fails
            if not dev <= tol:
                passed = False
    return TestVerdict(passed, margins)


def gaussian_displaced_moments(noise_variance: float) -> dict[str, float]:
    """``<n>`` and ``<n^2>`` of a displaced thermal-like outcome with the given quadrature variance.

    With ``d = |gamma - beta|^2`` exponential of mean ``s = noise_variance``,
    ``<n> = s - 1`` and ``<n^2> = 2 s^2 - 3 s + 1``.
    """
    s = float(noise_variance)
    return {"n": s - 1.0, "n2": 2.0 * s * s - 3.0 * s + 1.0}

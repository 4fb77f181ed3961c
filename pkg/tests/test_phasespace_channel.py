import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmcvqkd.channel import (
    ChannelParams,
    RandomSource,
    fiber_transmittance,
    heterodyne_variance,
    measure_heterodyne,
    received_mean,
    sample_heterodyne,
)
from dmcvqkd.phasespace import (
    ComplexAmplitude,
    Constellation,
    QuadratureSample,
    binary_entropy,
    bsc_capacity,
    estimate_displaced_moments,
    qpsk_amplitudes,
    qpsk_state,
    to_gamma,
)


def test_qpsk_states_on_diagonals():
    for x in range(4):
        a = qpsk_state(x, 0.85)
        assert abs(a) == pytest.approx(0.85)
        assert a.phase == pytest.approx(math.remainder(math.pi / 4 + x * math.pi / 2, 2 * math.pi))
    assert complex(qpsk_state(0, 1.0)) == pytest.approx((1 + 1j) / math.sqrt(2))


def test_qpsk_rejects_bad_input():
    with pytest.raises(ValueError):
        qpsk_state(4, 1.0)
    with pytest.raises(ValueError):
        qpsk_state(0, 0.0)
    with pytest.raises(ValueError):
        qpsk_amplitudes(np.array([0, 5]), 1.0)


def test_vectorised_states_match_scalar():
    syms = np.array([0, 1, 2, 3, 2])
    vec = qpsk_amplitudes(syms, 0.7)
    assert np.allclose(vec, [complex(qpsk_state(int(s), 0.7)) for s in syms])


def test_constellation_states():
    c = Constellation(0.85)
    assert np.allclose(c.as_array(), qpsk_amplitudes(np.arange(4), 0.85))


def test_sample_gamma_and_radius():
    s = QuadratureSample(1.0, -1.0)
    assert s.gamma == pytest.approx((1 - 1j) / math.sqrt(2))
    assert s.radius == pytest.approx(1.0)
    assert to_gamma([2.0], [0.0])[0] == pytest.approx(math.sqrt(2))


def test_fiber_transmittance_values():
    assert fiber_transmittance(0, 0.2) == 1.0
    assert fiber_transmittance(10, 0.3) == pytest.approx(10 ** -0.3)
    with pytest.raises(ValueError):
        fiber_transmittance(-1, 0.2)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))
def test_transmittance_composes(a, b, loss):
    assert fiber_transmittance(a + b, loss) == pytest.approx(fiber_transmittance(a, loss) * fiber_transmittance(b, loss), rel=1e-9, abs=1e-300)


def test_channel_param_validation():
    with pytest.raises(ValueError):
        ChannelParams(eta_ch=0)
    with pytest.raises(ValueError):
        ChannelParams(nu_el=-0.1)
    with pytest.raises(ValueError):
        ChannelParams(eta_d=float("nan"))


def test_heterodyne_variance_model():
    assert heterodyne_variance(ChannelParams(nu_el=0.0)) == 1.0
    assert heterodyne_variance(ChannelParams(eta_d=0.5, nu_el=0.1, excess_noise=0.2)) == pytest.approx(1.0 + 0.1 + 0.05)


def test_received_mean_scaling():
    ch = ChannelParams(eta_ch=0.25, eta_d=1.0)
    a = received_mean(ComplexAmplitude(2.0, 0.0), ch)
    assert isinstance(a, ComplexAmplitude) and a.re == pytest.approx(1.0)
    assert np.allclose(received_mean(np.array([2j]), ch), [1j])


def test_sample_statistics():
    ch = ChannelParams(eta_ch=1.0, eta_d=1.0, nu_el=0.2)
    x = sample_heterodyne(np.full(200_000, 0.5 - 0.25j), ch, RandomSource(1))
    se = math.sqrt(1.2 / x.shape[0])
    assert abs(x[:, 0].mean() - math.sqrt(2) * 0.5) < 5 * se
    assert abs(x[:, 1].mean() + math.sqrt(2) * 0.25) < 5 * se
    assert x[:, 0].var() == pytest.approx(1.2, rel=0.02)


def test_random_source_reproducible_and_independent():
    a = RandomSource(7).normal(5)
    b = RandomSource(7).normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(RandomSource(7).fork(1).normal(5), RandomSource(7).fork(2).normal(5))
    assert RandomSource(7, 3).stream == (3,)
    with pytest.raises(ValueError):
        RandomSource(-1)
    with pytest.raises(ValueError):
        RandomSource(2**64)


def test_random_source_position_skips_ahead():
    full = RandomSource(3).generator.random(8)
    assert not np.array_equal(RandomSource(3, position=1).generator.random(8), full)
    assert np.array_equal(RandomSource(3, position=1).generator.random(4), RandomSource(3, position=1).generator.random(4))


def test_single_measurement_uses_same_model():
    ch = ChannelParams()
    s = measure_heterodyne(ComplexAmplitude(0.3, 0.1), ch, RandomSource(4))
    arr = sample_heterodyne(0.3 + 0.1j, ch, RandomSource(4))
    assert (s.q, s.p) == (arr[0, 0], arr[0, 1])


def test_moment_estimator_exact_formula():
    samples = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]])
    beta = 0.2 + 0.1j
    d = np.abs(to_gamma(samples[:, 0], samples[:, 1]) - beta) ** 2
    m = estimate_displaced_moments(samples, beta)
    assert m.mean_n == pytest.approx(d.mean() - 1)
    assert m.mean_n2 == pytest.approx((d**2).mean() - 3 * d.mean() + 1)
    assert m.count == 3
    objs = [QuadratureSample(*row) for row in samples]
    assert estimate_displaced_moments(objs, beta).mean_n == pytest.approx(m.mean_n)


def test_moment_estimator_noisy_state():
    # thermal-like noise on top of the coherent part: s = 1 + nu per quadrature
    nu = 0.3
    ch = ChannelParams(eta_ch=1.0, eta_d=1.0, nu_el=nu)
    x = sample_heterodyne(np.full(400_000, 0.4 + 0.0j), ch, RandomSource(5))
    m = estimate_displaced_moments(x, 0.4)
    s = 1 + nu
    assert abs(m.mean_n - (s - 1)) < 5 * m.se_n
    assert abs(m.mean_n2 - (2 * s * s - 3 * s + 1)) < 5 * m.se_n2


def test_moment_estimator_rejects_bad_shape():
    with pytest.raises(ValueError):
        estimate_displaced_moments(np.zeros((3, 3)), 0)
    with pytest.raises(ValueError):
        estimate_displaced_moments([], 0)


def test_entropy_and_capacity():
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert binary_entropy(0.0) == 0.0
    assert bsc_capacity(0.11) == pytest.approx(1 - binary_entropy(0.11))
    assert bsc_capacity(0.35) == pytest.approx(0.0659, abs=1e-4)


@settings(max_examples=50)
@given(st.floats(1e-9, 1 - 1e-9))
def test_entropy_symmetric(p):
    assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)

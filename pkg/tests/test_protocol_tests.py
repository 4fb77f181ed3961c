import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmcvqkd.channel import RandomSource
from dmcvqkd.phasespace import DisplacedMoments
from dmcvqkd.protocol_tests import (
    AcceptanceSet,
    EnergyTestParams,
    acceptance_test,
    count_test_rounds,
    energy_test,
    gaussian_displaced_moments,
    mu_bound,
    radial_coordinate,
    select_test_rounds,
)

EXPECTED = {s: {"n": 0.01, "n2": 0.02} for s in range(4)}


def _obs(n=0.01, n2=0.02, count=1000, override=None):
    out = {s: DisplacedMoments(n, n2, count) for s in range(4)}
    if override:
        out.update(override)
    return out


def test_test_round_split():
    test, key = select_test_rounds(1000, 0.3, RandomSource(1))
    assert test.size == 300 and key.size == 700
    assert np.array_equal(np.sort(np.concatenate([test, key])), np.arange(1000))
    assert np.all(np.diff(test) > 0)
    with pytest.raises(ValueError):
        select_test_rounds(10, 1.0, RandomSource(1))


def test_test_round_count_exact_for_large_n():
    assert count_test_rounds(10**10, 0.3) == 3 * 10**9
    assert count_test_rounds(10, 0.3) == 3


def test_energy_test_allowance():
    p = EnergyTestParams(beta_et=2.0, k_t=10, max_outlier_fraction=0.3)
    assert p.allowed_outliers == 3
    # radius of (q, p) = (3, 0) is 3 / sqrt(2) > 2
    far = np.array([[3.0, 0.0]] * 3 + [[0.0, 0.0]] * 7)
    assert energy_test(far, p).passed
    far4 = np.array([[3.0, 0.0]] * 4 + [[0.0, 0.0]] * 6)
    v = energy_test(far4, p)
    assert not v.passed and v.outliers == 4 and v.allowed == 3


def test_energy_threshold_is_inclusive():
    p = EnergyTestParams(beta_et=1.0, k_t=1, max_outlier_fraction=0.0)
    on_edge = np.array([[math.sqrt(2), 0.0]])
    assert radial_coordinate(on_edge)[0] == pytest.approx(1.0)
    assert not energy_test(on_edge * (1 + 1e-12), p).passed
    assert energy_test(on_edge * (1 - 1e-12), p).passed


def test_energy_params_validation():
    with pytest.raises(ValueError):
        EnergyTestParams(beta_et=0)
    with pytest.raises(ValueError):
        EnergyTestParams(k_t=0)
    with pytest.raises(ValueError):
        energy_test(np.zeros((3, 2)), EnergyTestParams(k_t=2))


def test_mu_bound_formula_and_scaling():
    x, m, eps = 49.0, 1000, 7e-11
    assert mu_bound(x, m, eps) == pytest.approx(math.sqrt(x * x / (2 * m) * math.log(2 / eps)))
    assert mu_bound(x, 2 * m, eps) == pytest.approx(mu_bound(x, m, eps) / math.sqrt(2))
    assert mu_bound(2 * x, m, eps) == pytest.approx(2 * mu_bound(x, m, eps))
    for bad in [(-1, m, eps), (x, 0, eps), (x, m, 0.0), (x, m, 1.0)]:
        with pytest.raises(ValueError):
            mu_bound(*bad)


@given(st.floats(0.1, 1e4), st.integers(1, 10**9), st.floats(1e-15, 0.5))
def test_mu_bound_decreases_with_rounds(x, m, eps):
    assert mu_bound(x, m + 1, eps) < mu_bound(x, m, eps)


def test_unique_acceptance_requires_exact_match():
    acc = AcceptanceSet(EXPECTED, t_f=0.0)
    assert acceptance_test(_obs(), acc).passed
    assert not acceptance_test(_obs(n=0.01 + 1e-15), acc).passed
    # one-sided: lower than expected is fine
    assert acceptance_test(_obs(n=0.0), acc).passed
    assert not acceptance_test(_obs(n=0.0), AcceptanceSet(EXPECTED, t_f=0.0, two_sided=True)).passed


def test_tolerance_band_edges():
    acc = AcceptanceSet(EXPECTED, t_f=1.5, m_x=10**6)
    tol = 1.5 * mu_bound(49.0, 10**6, 7e-11)
    v = acceptance_test(_obs(), acc)
    assert v.passed and len(v.margins) == 8
    assert v.margins[(0, "n")] == pytest.approx(tol)
    over = {2: DisplacedMoments(0.01 + tol * (1 + 1e-9), 0.02, 1)}
    v = acceptance_test(_obs(override=over), acc)
    assert not v.passed and v.margins[(2, "n")] < 0


def test_round_count_used_when_m_x_unset():
    acc = AcceptanceSet(EXPECTED, t_f=1.0)
    tol_small = mu_bound(49.0, 10**8, 7e-11)
    obs = _obs(count=10**8, override={1: DisplacedMoments(0.01 + 2 * tol_small, 0.02, 10**8)})
    assert not acceptance_test(obs, acc).passed
    obs = _obs(count=10, override={1: DisplacedMoments(0.01 + 2 * tol_small, 0.02, 10)})
    assert acceptance_test(obs, acc).passed


def test_missing_state_or_bound_raises():
    acc = AcceptanceSet(EXPECTED)
    with pytest.raises(KeyError):
        acceptance_test({0: DisplacedMoments(0, 0, 1)}, acc)
    with pytest.raises(KeyError):
        acceptance_test(_obs(), AcceptanceSet(EXPECTED, bounds={"n": 49.0}))


def test_acceptance_set_validation():
    with pytest.raises(ValueError):
        AcceptanceSet(EXPECTED, t_f=-1)
    with pytest.raises(ValueError):
        AcceptanceSet(EXPECTED, m_x=0)
    with pytest.raises(ValueError):
        AcceptanceSet({0: {"n": float("nan"), "n2": 0.0}})
    with pytest.raises(ValueError):
        AcceptanceSet({0: {"n": 0.0}})


def test_acceptance_set_round_trip(tmp_path):
    acc = AcceptanceSet.from_detection_limit(EXPECTED, 7.0, t_f=1.5, m_x=42, displacements={0: 0.5 + 0.5j})
    assert acc.bounds == {"n": 49.0, "n2": 2401.0}
    path = tmp_path / "acc.yaml"
    acc.save(path)
    back = AcceptanceSet.load(path)
    assert back == acc
    with pytest.raises(ValueError):
        AcceptanceSet.from_dict({"expected": EXPECTED, "bogus": 1})


def test_gaussian_model_moments():
    assert gaussian_displaced_moments(1.0) == {"n": 0.0, "n2": 0.0}
    g = gaussian_displaced_moments(1.5)
    assert g["n"] == pytest.approx(0.5) and g["n2"] == pytest.approx(2 * 2.25 - 4.5 + 1)

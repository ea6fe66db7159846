import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import ortho_group

import dirdp.vmf as vmf
from dirdp.sphere import OrthoDecomposition, UnitVector, euclidean_distance, uniform_direction
from dirdp.vmf import (
    SamplerError,
    VmfParams,
    compose_orthogonal,
    composition_exponent,
    dp_epsilon_for_concentration,
    log_bessel_iv,
    log_density,
    log_normalizer,
    log_sphere_area,
    mean_resultant_length,
    mechanism_perturb,
    sample,
    sample_vmf,
)


def mp_log_iv(v, x):
    return float(mpmath.log(mpmath.besseli(v, x)))


@pytest.mark.parametrize("v", [0.0, 0.5, 1.0, 6.5, 49.0, 50.0, 63.0, 999.0, 1999.0])
@pytest.mark.parametrize("x", [1e-3, 0.7, 12.0, 300.0, 1e5, 1e8])
def test_log_bessel_matches_mpmath(v, x):
    mpmath.mp.dps = 40
    expected = mp_log_iv(v, x)
    assert log_bessel_iv(v, x) == pytest.approx(expected, rel=1e-10, abs=1e-10)


def test_log_bessel_rejects_nonpositive_argument():
    with pytest.raises(ValueError):
        log_bessel_iv(1.0, 0.0)


def test_uniform_density_on_s2():
    mu = UnitVector.basis(3, 0)
    y = uniform_direction(3, np.random.default_rng(0))
    assert log_density(VmfParams(mu, 0.0), y) == pytest.approx(-2.53102, abs=1e-5)
    assert log_density(VmfParams(mu, 0.0), y) == pytest.approx(-math.log(4 * math.pi))


def test_closed_form_normalizer_k3():
    mu = UnitVector.basis(3, 0)
    expected = math.log(2 / (4 * math.pi * (math.e**2 - math.e**-2) / 2)) + 2
    assert log_density(VmfParams(mu, 2.0), mu.coords) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("K", [2, 3, 5, 10])
@pytest.mark.parametrize("kappa", [0.0, 0.3, 2.0, 40.0])
def test_density_integrates_to_one(K, kappa):
    # integrate over w = mu.y: area(S^{K-2}) * int e^{kappa w} (1 - w^2)^{(K-3)/2} dw
    log_c = log_normalizer(K, kappa)
    log_ring = log_sphere_area(K - 1)

    def f(w):
        return math.exp(log_c + log_ring + kappa * w) * (1 - w * w) ** ((K - 3) / 2)

    total, _ = integrate.quad(f, -1, 1, points=[1 - 1 / (kappa + 1)], limit=200)
    assert total == pytest.approx(1.0, rel=1e-7)


def test_density_ratio_cancels_normalizers():
    rng = np.random.default_rng(3)
    e1, e2 = UnitVector.basis(3, 0), UnitVector.basis(3, 1)
    for y in uniform_direction(3, rng, size=20):
        ratio = math.exp(log_density(VmfParams(e1, 1.0), y) - log_density(VmfParams(e2, 1.0), y))
        assert ratio == pytest.approx(math.exp(y[0] - y[1]), rel=1e-12)


def test_log_density_dimension_mismatch():
    with pytest.raises(ValueError):
        log_density(VmfParams(UnitVector.basis(3, 0), 1.0), np.ones(4) / 2)


def test_params_validation():
    with pytest.raises(ValueError):
        VmfParams(UnitVector.basis(3, 0), -1.0)
    p = VmfParams(np.array([0.0, 1.0]), 1.0)
    assert isinstance(p.mean_direction, UnitVector) and p.dim == 2


@pytest.mark.parametrize("K, kappa", [(3, 0.5), (3, 2.0), (3, 32.0), (8, 0.5), (8, 2.0), (8, 32.0)])
def test_mean_resultant_length_matches_bessel_ratio(K, kappa):
    mpmath.mp.dps = 30
    oracle = float(mpmath.besseli(K / 2, kappa) / mpmath.besseli(K / 2 - 1, kappa))
    assert mean_resultant_length(K, kappa) == pytest.approx(oracle, rel=1e-11)
    rng = np.random.default_rng(K * 1000 + int(kappa * 10))
    w = sample_vmf(UnitVector.basis(K, 0).coords, kappa, rng, size=40_000)[:, 0]
    se = w.std(ddof=1) / math.sqrt(w.size)
    assert abs(w.mean() - oracle) <= 3 * se


def test_langevin_mean_k3():
    rng = np.random.default_rng(7)
    w = sample_vmf(np.array([1.0, 0, 0]), 2.0, rng, size=200_000)[:, 0]
    assert w.mean() == pytest.approx(1 / math.tanh(2) - 0.5, abs=0.01)


def test_uniform_when_kappa_zero():
    rng = np.random.default_rng(11)
    y = sample_vmf(np.array([1.0, 0, 0]), 0.0, rng, size=100_000)
    assert np.linalg.norm(y.mean(axis=0)) <= 0.02


def test_huge_kappa_concentrates_and_matches_marginal_mean():
    K, kappa = 16, 1e5
    rng = np.random.default_rng(5)
    mu = uniform_direction(K, rng)
    y = sample_vmf(mu, kappa, rng, size=20_000)
    cos = y @ mu
    assert np.all(cos > 0.999)
    # oracle: E[1 - w] from the w-marginal, integrated in t = 1 - w
    def dens(t):
        return math.exp(-kappa * t) * (t * (2 - t)) ** ((K - 3) / 2)
    scale = 50 / kappa
    z, _ = integrate.quad(dens, 0, scale, limit=200)
    m1, _ = integrate.quad(lambda t: t * dens(t), 0, scale, limit=200)
    one_minus = 1 - cos
    se = one_minus.std(ddof=1) / math.sqrt(one_minus.size)
    assert abs(one_minus.mean() - m1 / z) <= 3 * se


def test_extreme_dimension_and_concentration():
    rng = np.random.default_rng(0)
    mu = uniform_direction(4000, rng)
    y = sample_vmf(mu, 1e8, rng)
    assert abs(np.linalg.norm(y) - 1) < 1e-12
    assert y @ mu > 0.9999


def test_rotational_equivariance():
    K, kappa, n = 4, 3.0, 60_000
    R = ortho_group.rvs(K, random_state=1)
    e1 = np.eye(K)[0]
    a = sample_vmf(R @ e1, kappa, np.random.default_rng(1), size=n)
    b = sample_vmf(e1, kappa, np.random.default_rng(2), size=n) @ R.T
    se = np.sqrt(a.var(axis=0) / n + b.var(axis=0) / n)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 4 * se)
    second = np.abs(a.T @ a / n - b.T @ b / n)
    assert second.max() < 0.015


def test_outputs_are_unit_vectors():
    rng = np.random.default_rng(9)
    mus = uniform_direction(7, rng, size=50)
    for kappa in (0.0, 1e-6, 1.0, 1e3, 1e6):
        y = sample_vmf(mus, kappa, rng)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)
    assert isinstance(sample(VmfParams(UnitVector.basis(3, 2), 5.0), rng), UnitVector)


def test_seeded_sampling_is_deterministic():
    mu = np.array([0.0, 0.6, 0.8])
    a = sample_vmf(mu, 4.0, np.random.default_rng(42), size=10)
    b = sample_vmf(mu, 4.0, np.random.default_rng(42), size=10)
    assert np.array_equal(a, b)


def test_rejection_cap(monkeypatch):
    monkeypatch.setattr(vmf, "MAX_REJECTION_ROUNDS", 0)
    with pytest.raises(SamplerError):
        sample_vmf(np.array([1.0, 0.0, 0.0]), 1.0, np.random.default_rng(0))


def test_mechanism_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        mechanism_perturb(UnitVector.basis(3, 0), 0.0, np.random.default_rng(0))


def test_tiny_epsilon_is_near_uniform():
    rng = np.random.default_rng(1)
    x = UnitVector.basis(3, 0)
    w = sample_vmf(x.coords, 1e-6, rng, size=100_000)[:, 0]
    assert w.mean() <= 0.01
    assert mean_resultant_length(3, 1e-6) == pytest.approx(1e-6 / 3, rel=1e-6)


def test_privacy_ratio_example():
    e1, e2 = UnitVector.basis(3, 0), UnitVector.basis(3, 1)
    lr = log_density(VmfParams(e1, 1.0), e1.coords) - log_density(VmfParams(e2, 1.0), e1.coords)
    assert math.exp(lr) == pytest.approx(math.e)
    assert lr <= 1.0 * euclidean_distance(e1, e2)


@pytest.mark.parametrize("K", [2, 3, 16])
@pytest.mark.parametrize("eps", [0.1, 1.0, 10.0])
def test_privacy_ratio_bound(K, eps):
    rng = np.random.default_rng(K * 100 + int(eps * 10))
    x, xp, y = (uniform_direction(K, rng, size=1000) for _ in range(3))
    for a, b, c in zip(x, xp, y):
        lr = log_density(VmfParams(UnitVector(a), eps), c) - log_density(VmfParams(UnitVector(b), eps), c)
        d2 = euclidean_distance(a, b)
        assert lr <= eps * d2 + 1e-9
        assert lr <= eps * math.acos(np.clip(a @ b, -1, 1)) + 1e-9


@settings(max_examples=200)
@given(st.integers(2, 32), st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_privacy_ratio_bound_property(K, eps, seed):
    rng = np.random.default_rng(seed)
    a, b, c = uniform_direction(K, rng, size=3)
    assert vmf.log_privacy_ratio(a, b, c, eps) <= vmf.privacy_bound(a, b, eps) + 1e-9


def test_composition_exponents():
    assert composition_exponent(4, 1.0) == 4.0
    assert composition_exponent(9, 0.5) == 3.0
    assert dp_epsilon_for_concentration(0.5) == 1.0


def test_compose_single_component_equals_mechanism():
    u = UnitVector(np.array([0.0, 0.6, 0.8]))
    samples, expo = compose_orthogonal(OrthoDecomposition([u]), 2.0, np.random.default_rng(3))
    direct = mechanism_perturb(u, 2.0, np.random.default_rng(3))
    assert expo == 4.0
    assert np.array_equal(samples[0].coords, direct.coords)


def test_compose_orthogonal_components():
    e = np.eye(4)
    d = OrthoDecomposition([UnitVector(e[i]) for i in range(4)])
    samples, expo = compose_orthogonal(d, 1.0, np.random.default_rng(0))
    assert expo == 4.0 and len(samples) == 4
    with pytest.raises(TypeError):
        compose_orthogonal([UnitVector(e[0])], 1.0, np.random.default_rng(0))

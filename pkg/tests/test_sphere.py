import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirdp.sphere import (
    DegenerateInputError,
    OrthoDecomposition,
    UnitVector,
    angular_distance,
    clip,
    euclidean_distance,
    normalize,
    orthogonal_blocks,
    scale_to_sphere,
    uniform_direction,
)


@pytest.mark.parametrize("v, expected", [
    ((3, 4), (0.6, 0.8)),
    ((1, 0, 0), (1, 0, 0)),
    ((1, 1), (1 / math.sqrt(2), 1 / math.sqrt(2))),
])
def test_normalize_examples(v, expected):
    np.testing.assert_allclose(normalize(v), expected, atol=1e-15)


def test_normalize_zero_is_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize([0.0, 0.0, 0.0])


def test_normalize_scales_to_clip_norm():
    out = normalize([3.0, 4.0], clip_norm=2.5)
    assert np.linalg.norm(out) == pytest.approx(2.5, abs=1e-12)


vectors = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=64).filter(
    lambda v: np.linalg.norm(v) > 1e-6)


@given(vectors)
def test_normalize_norm_direction_and_idempotence(v):
    v = np.asarray(v)
    u = normalize(v)
    assert abs(np.linalg.norm(u) - 1) <= 1e-12
    assert u @ v / np.linalg.norm(v) >= 1 - 1e-12
    np.testing.assert_allclose(normalize(u), u, rtol=0, atol=1e-15)


def test_angular_distance_examples():
    e = np.eye(3)
    assert angular_distance(e[0], e[0]) == 0.0
    assert angular_distance(e[0], e[1]) == pytest.approx(math.pi / 2)
    assert angular_distance(e[0], -e[0]) == pytest.approx(math.pi)


def test_euclidean_distance_examples():
    e = np.eye(4)
    assert euclidean_distance(e[0], e[0]) == 0.0
    assert euclidean_distance(e[0], -e[0]) == pytest.approx(2.0)
    assert euclidean_distance(e[0], e[1]) == pytest.approx(math.sqrt(2))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        angular_distance(np.eye(3)[0], np.eye(2)[0])
    with pytest.raises(ValueError):
        euclidean_distance(np.eye(3)[0], np.eye(2)[0])


def test_near_identical_vectors_do_not_nan():
    a = normalize(np.array([1.0, 1e-9, 0.0]))
    assert np.isfinite(angular_distance(a, a * (1 + 1e-16)))


@pytest.mark.parametrize("K", [2, 3, 16, 128])
def test_metric_inequality_and_chord_identity(K):
    rng = np.random.default_rng(K)
    a = uniform_direction(K, rng, size=500)
    b = uniform_direction(K, rng, size=500)
    for x, y in zip(a, b):
        d2, dt = euclidean_distance(x, y), angular_distance(x, y)
        assert d2 <= dt + 1e-12
        assert abs(d2 - 2 * math.sin(dt / 2)) <= 1e-9


@settings(max_examples=50)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_angular_distance_is_a_metric(K, seed):
    rng = np.random.default_rng(seed)
    a, b, c = uniform_direction(K, rng, size=3)
    assert angular_distance(a, b) == pytest.approx(angular_distance(b, a), abs=1e-15)
    assert angular_distance(a, c) <= angular_distance(a, b) + angular_distance(b, c) + 1e-12


def test_unit_vector_validation():
    with pytest.raises(ValueError):
        UnitVector(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        UnitVector(np.array([1.0]))
    u = UnitVector.from_vector([0.0, 2.0])
    assert u.dim == 2
    with pytest.raises(ValueError):
        u.coords[0] = 5.0


def test_uniform_direction_is_centred():
    rng = np.random.default_rng(0)
    draws = uniform_direction(3, rng, size=100_000)
    np.testing.assert_allclose(np.linalg.norm(draws, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(draws.mean(axis=0)) < 0.02


def test_scale_to_sphere_replaces_zero_rows():
    rng = np.random.default_rng(1)
    g = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [3.0, 4.0, 0.0]])
    out, n_zero = scale_to_sphere(g, rng)
    assert n_zero == 1
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(out[1], [1, 0, 0])
    np.testing.assert_allclose(out[2], [0.6, 0.8, 0])


def test_clip_only_shrinks():
    g = np.array([[0.3, 0.4], [3.0, 4.0]])
    np.testing.assert_allclose(clip(g), [[0.3, 0.4], [0.6, 0.8]])


def test_ortho_decomposition_validation():
    e = np.eye(3)
    d = OrthoDecomposition([UnitVector(e[0]), UnitVector(e[1])], [0.6, 0.8])
    np.testing.assert_allclose(d.vector(), [0.6, 0.8, 0])
    with pytest.raises(ValueError):
        OrthoDecomposition([UnitVector(e[0]), UnitVector(normalize([1.0, 1.0, 0.0]))])
    with pytest.raises(ValueError):
        OrthoDecomposition([UnitVector(e[0])], [1.5])


def test_orthogonal_blocks_reassemble():
    v = normalize(np.arange(1.0, 7.0))
    d = orthogonal_blocks(v, [slice(0, 2), slice(2, 6)])
    assert d.m == 2
    np.testing.assert_allclose(d.vector(), v, atol=1e-12)

"""Unit-hypersphere geometry: scaling onto the sphere and the two metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_RTOL = 1e-9
ORTHO_ATOL = 1e-8


class DegenerateInputError(ValueError):
    """A zero vector has no direction and cannot be placed on the sphere."""


@dataclass(frozen=True)
class UnitVector:
    """A point on the (K-1)-sphere embedded in R^K, K >= 2."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError(f"UnitVector needs a 1-d array with K >= 2, got shape {c.shape}")
        n = np.linalg.norm(c)
        if not abs(n - 1.0) <= NORM_RTOL:
            raise ValueError(f"coords have norm {n!r}, expected 1")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)

    def __len__(self):
        return self.coords.size

    @classmethod
    def from_vector(cls, v) -> "UnitVector":
        return cls(normalize(v))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator) -> "UnitVector":
        """Uniformly distributed point on the sphere."""
        return cls(uniform_direction(dim, rng))

    @classmethod
    def basis(cls, dim: int, i: int) -> "UnitVector":
        e = np.zeros(dim)
        e[i] = 1.0
        return cls(e)


@dataclass(frozen=True)
class OrthoDecomposition:
    """v = sum_i weights[i] * components[i] with mutually orthogonal unit components."""

    components: tuple
    weights: tuple = field(default=None)

    def __post_init__(self):
        comps = tuple(c if isinstance(c, UnitVector) else UnitVector(c) for c in self.components)
        if not comps:
            raise ValueError("decomposition needs at least one component")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components have mixed dimensions {sorted(dims)}")
        weights = self.weights
        if weights is None:
            weights = (1.0 / np.sqrt(len(comps)),) * len(comps)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(comps):
            raise ValueError("one weight per component is required")
        if any(abs(w) > 1.0 for w in weights):
            raise ValueError(f"weights must satisfy |w| <= 1, got {weights}")
        gram = np.array([c.coords for c in comps])
        off = gram @ gram.T - np.eye(len(comps))
        if np.max(np.abs(off)) > ORTHO_ATOL:
            raise ValueError(
                f"components are not orthogonal (max |u_i . u_j| = {np.max(np.abs(off)):.3g})"
            )
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return len(self.components)

    def vector(self) -> np.ndarray:
        return sum(w * c.coords for w, c in zip(self.weights, self.components))


def _as_array(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


def _check_same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def normalize(v, clip_norm: float = 1.0) -> np.ndarray:
    """Rescale ``v`` (or each row of a 2-d array) to norm ``clip_norm``.

    Unlike clipping, short vectors are lengthened too. Raises
    :class:`DegenerateInputError` on a zero vector.
    """
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    v = _as_array(v)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError("cannot scale a zero vector onto the sphere")
    return v * (clip_norm / norms)


def uniform_direction(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def scale_to_sphere(vectors, rng: np.random.Generator, clip_norm: float = 1.0):
    """Scale each row to norm ``clip_norm``; zero rows get a uniform random direction.

    Returns ``(scaled, n_degenerate)``. A zero gradient carries no direction,
    so replacing it with a uniform draw reveals nothing and keeps every row on
    the sphere.
    """
    vectors = np.atleast_2d(_as_array(vectors))
    norms = np.linalg.norm(vectors, axis=1)
    zero = norms == 0
    out = np.empty_like(vectors)
    out[~zero] = vectors[~zero] * (clip_norm / norms[~zero, None])
    n_zero = int(zero.sum())
    if n_zero:
        out[zero] = clip_norm * uniform_direction(vectors.shape[1], rng, size=n_zero)
    return out, n_zero


def clip(vectors, clip_norm: float = 1.0) -> np.ndarray:
    """Standard DP-SGD clipping g / max(1, ||g|| / C), row-wise."""
    v = _as_array(vectors)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(1.0, norms / clip_norm)


def angular_distance(a, b) -> float:
    """arccos of the cosine between ``a`` and ``b``; in [0, pi]."""
    a, b = _as_array(a), _as_array(b)
    _check_same_dim(a, b)
    cos = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def euclidean_distance(a, b) -> float:
    a, b = _as_array(a), _as_array(b)
    _check_same_dim(a, b)
    return float(np.linalg.norm(a - b))


def orthogonal_blocks(vector, blocks: Sequence[slice]) -> OrthoDecomposition:
    """Decompose a vector along disjoint coordinate blocks.

    Each nonzero block becomes a unit component (zero-padded to full length),
    weighted by the block's norm relative to the whole vector.
    """
    v = _as_array(vector)
    total = np.linalg.norm(v)
    if total == 0:
        raise DegenerateInputError("cannot decompose a zero vector")
    comps, weights = [], []
    for sl in blocks:
        part = np.zeros_like(v)
        part[sl] = v[sl]
        n = np.linalg.norm(part)
        if n > 0:
            comps.append(part / n)
            weights.append(n / total)
    return OrthoDecomposition(tuple(comps), tuple(weights))

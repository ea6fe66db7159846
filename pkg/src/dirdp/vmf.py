"""von Mises-Fisher distribution on S^{K-1} and the directional-privacy mechanism.

Density w.r.t. the surface measure::

    f(y; mu, kappa) = C_K(kappa) exp(kappa mu.y)
    C_K(kappa) = kappa^{K/2-1} / ((2 pi)^{K/2} I_{K/2-1}(kappa))

Sampling uses Wood's (1994) rejection scheme for the cosine w = mu.y and
never touches a Bessel function; the normalizer is only needed for densities
and diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .sphere import OrthoDecomposition, UnitVector, euclidean_distance

MAX_REJECTION_ROUNDS = 10**6

# Debye coefficients u_k(t) for the uniform large-order expansion of I_v.
_DEBYE = (
    lambda t: (3 * t - 5 * t**3) / 24,
    lambda t: (81 * t**2 - 462 * t**4 + 385 * t**6) / 1152,
    lambda t: (30375 * t**3 - 369603 * t**5 + 765765 * t**7 - 425425 * t**9) / 414720,
    lambda t: (
        4465125 * t**4
        - 94121676 * t**6
        + 349922430 * t**8
        - 446185740 * t**10
        + 185910725 * t**12
    )
    / 39813120,
)
_DEBYE_MIN_ORDER = 50.0


class SamplerError(RuntimeError):
    """Rejection sampling did not finish within the round cap."""


@dataclass(frozen=True)
class VmfParams:
    mean_direction: UnitVector
    concentration: float

    def __post_init__(self):
        mu = self.mean_direction
        if not isinstance(mu, UnitVector):
            object.__setattr__(self, "mean_direction", UnitVector(mu))
        if not self.concentration >= 0:
            raise ValueError(f"concentration must be >= 0, got {self.concentration}")

    @property
    def dim(self) -> int:
        return self.mean_direction.dim


def log_bessel_iv(order: float, x: float) -> float:
    """log I_order(x) for order >= 0, x > 0, stable over huge ranges of both.

    Orders of 50 and above use the uniform (Debye) asymptotic expansion.
    Below that, the exponentially scaled ``scipy.special.ive`` is used, with a
    leading-term series as fallback when it underflows at tiny x.
    """
    v, x = float(order), float(x)
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    if v >= _DEBYE_MIN_ORDER:
        z = x / v
        root = math.sqrt(1.0 + z * z)
        t = 1.0 / root
        eta = root + math.log(z / (1.0 + root))
        corr = 1.0 + sum(u(t) / v ** (k + 1) for k, u in enumerate(_DEBYE))
        return -0.5 * math.log(2 * math.pi * v) + v * eta - 0.5 * math.log(root) + math.log(corr)
    scaled = special.ive(v, x)
    if scaled > 0 and np.isfinite(scaled):
        return math.log(scaled) + x
    return v * math.log(x / 2) - special.gammaln(v + 1) + math.log1p(x * x / (4 * (v + 1)))


def log_sphere_area(dim: int) -> float:
    """log of the surface area of S^{dim-1}, 2 pi^{K/2} / Gamma(K/2)."""
    return math.log(2.0) + 0.5 * dim * math.log(math.pi) - special.gammaln(0.5 * dim)


def log_normalizer(dim: int, kappa: float) -> float:
    """log C_K(kappa); at kappa = 0 this is minus the log sphere area."""
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        return -log_sphere_area(dim)
    nu = dim / 2.0 - 1.0
    return nu * math.log(kappa) - (dim / 2.0) * math.log(2 * math.pi) - log_bessel_iv(nu, kappa)


def mean_resultant_length(dim: int, kappa: float) -> float:
    """A_K(kappa) = I_{K/2}(kappa) / I_{K/2-1}(kappa) = E[mu . y]."""
    if kappa == 0:
        return 0.0
    return math.exp(log_bessel_iv(dim / 2.0, kappa) - log_bessel_iv(dim / 2.0 - 1.0, kappa))


def log_density(params: VmfParams, y) -> float:
    y = np.asarray(y, dtype=float)
    mu = params.mean_direction.coords
    if y.shape[-1] != mu.size:
        raise ValueError(f"dimension mismatch: {y.shape[-1]} vs {mu.size}")
    return log_normalizer(mu.size, params.concentration) + params.concentration * (y @ mu)


def _sample_cosines(kappa: float, dim: int, n: int, rng: np.random.Generator):
    """Draw n values of w = mu.y; returns (w, 1 - w) with 1 - w accurate near w = 1."""
    m = dim - 1
    # b = m / (2 kappa + sqrt(4 kappa^2 + m^2)), cancellation-free at large kappa
    b = m / (2 * kappa + math.sqrt(4 * kappa * kappa + m * m))
    x0 = (1 - b) / (1 + b)
    one_minus_x0 = 2 * b / (1 + b)
    one_minus_x0_sq = one_minus_x0 * (1 + x0)

    w = np.empty(n)
    one_minus_w = np.empty(n)
    pending = np.arange(n)
    for _ in range(MAX_REJECTION_ROUNDS):
        k = pending.size
        z = rng.beta(m / 2.0, m / 2.0, size=k)
        u = rng.random(k)
        denom = 1 - (1 - b) * z
        omw = 2 * b * z / denom
        cand = 1 - omw
        w_minus_x0 = one_minus_x0 - omw
        # kappa (w - x0) + m log((1 - x0 w) / (1 - x0^2)) >= log u
        log_ratio = np.log1p(-x0 * w_minus_x0 / one_minus_x0_sq)
        with np.errstate(divide="ignore"):
            accept = kappa * w_minus_x0 + m * log_ratio >= np.log(u)
        idx = pending[accept]
        w[idx] = cand[accept]
        one_minus_w[idx] = omw[accept]
        pending = pending[~accept]
        if pending.size == 0:
            return w, one_minus_w
    raise SamplerError(
        f"vMF rejection sampler exceeded {MAX_REJECTION_ROUNDS} rounds "
        f"(kappa={kappa}, dim={dim}, {pending.size} draws outstanding)"
    )


def _householder_to(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply the reflection that sends e_1 to ``mu`` (row-wise for 2-d input)."""
    u = -mu.copy()
    u[..., 0] += 1.0
    un = np.linalg.norm(u, axis=-1, keepdims=True)
    safe = un > 1e-300
    u = np.where(safe, u / np.where(safe, un, 1.0), 0.0)
    return x - 2.0 * np.sum(x * u, axis=-1, keepdims=True) * u


def sample_vmf(mu, kappa: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw vMF samples.

    ``mu`` is a single unit vector (returning one draw, or ``size`` draws) or
    a 2-d array of unit rows (one draw per row, ``size`` must be None).
    """
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 2 and size is not None:
        raise ValueError("size is only allowed with a single mean direction")
    single = mu.ndim == 1 and size is None
    rows = np.atleast_2d(mu)
    if mu.ndim == 1 and size is not None:
        rows = np.broadcast_to(mu, (size, mu.size))
    n, dim = rows.shape
    if dim < 2:
        raise ValueError("vMF needs dimension K >= 2")

    w, one_minus_w = _sample_cosines(float(kappa), dim, n, rng)
    tangent = rng.standard_normal((n, dim - 1))
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    radial = np.sqrt(one_minus_w * (1 + w))
    x = np.concatenate([w[:, None], radial[:, None] * tangent], axis=1)
    y = _householder_to(rows, x)
    return y[0] if single else y


def sample(params: VmfParams, rng: np.random.Generator) -> UnitVector:
    y = sample_vmf(params.mean_direction.coords, params.concentration, rng)
    return UnitVector(y / np.linalg.norm(y))


def mechanism_perturb(x, epsilon: float, rng: np.random.Generator) -> UnitVector:
    """The VMF mechanism V(epsilon, x): one draw centred on ``x``.

    Satisfies epsilon*d_2-privacy (and hence epsilon*d_theta-privacy).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    x = x if isinstance(x, UnitVector) else UnitVector(x)
    return sample(VmfParams(x, epsilon), rng)


def log_privacy_ratio(x, x_prime, y, epsilon: float) -> float:
    """log f(y | x) - log f(y | x'); normalizers cancel."""
    x, x_prime, y = (np.asarray(v, dtype=float) for v in (x, x_prime, y))
    return float(epsilon * (y @ x - y @ x_prime))


def privacy_bound(x, x_prime, epsilon: float) -> float:
    return epsilon * euclidean_distance(x, x_prime)


def composition_exponent(m: int, epsilon: float) -> float:
    """Privacy-loss exponent 2 eps sqrt(m) for m independently perturbed components."""
    return 2.0 * epsilon * math.sqrt(m)


def compose_orthogonal(d: OrthoDecomposition, epsilon: float, rng: np.random.Generator):
    """Perturb each orthogonal component independently.

    Returns ``(samples, exponent)``: one :class:`UnitVector` per component and
    the composed guarantee exponent ``2 * epsilon * sqrt(m)``.
    """
    if not isinstance(d, OrthoDecomposition):
        raise TypeError("expected an OrthoDecomposition")
    samples = [mechanism_perturb(u, epsilon, rng) for u in d.components]
    return samples, composition_exponent(d.m, epsilon)


def dp_epsilon_for_concentration(kappa: float) -> float:
    """Pure-DP epsilon of one DirDP-SGD step: unit vectors are at most 2 apart, so eps = 2 kappa."""
    return 2.0 * kappa

"""Gradient-noising mechanisms behind one interface.

``dp_noise_step`` turns a lot of per-sample gradients into the single noisy
update direction used by the trainer:

* ``gaussian`` -- DP-SGD: clip each gradient to C, sum, add N(0, sigma^2 C^2 I),
  divide by the lot size.
* ``vmf`` -- DirDP-SGD: scale each gradient to norm exactly C = 1, replace it
  by one vMF draw around that direction, average.
* ``none`` -- plain mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sphere import clip, scale_to_sphere
from .vmf import composition_exponent, dp_epsilon_for_concentration, sample_vmf

KINDS = ("none", "gaussian", "vmf")


@dataclass(frozen=True)
class NoiseSpec:
    """Which mechanism and how much noise.

    ``parameter`` is the noise multiplier sigma for ``gaussian`` and the
    concentration kappa for ``vmf``. ``blocks`` optionally partitions the
    flattened gradient into disjoint coordinate ranges that are perturbed
    independently by the vMF mechanism.
    """

    kind: str = "none"
    parameter: float = 0.0
    clip_norm: float = 1.0
    blocks: Optional[tuple] = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.parameter >= 0:
            raise ValueError(f"noise parameter must be >= 0, got {self.parameter}")
        if kind == "none" and self.parameter != 0:
            raise ValueError("kind='none' requires parameter 0")
        if self.clip_norm != 1.0:
            raise ValueError("clip_norm is fixed to 1")
        if self.blocks is not None:
            if kind != "vmf":
                raise ValueError("blocks are only meaningful for the vmf mechanism")
            object.__setattr__(self, "blocks", tuple(tuple(b) for b in self.blocks))

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseSpec":
        return cls("gaussian", float(sigma))

    @classmethod
    def vmf(cls, kappa: float, blocks=None) -> "NoiseSpec":
        return cls("vmf", float(kappa), blocks=blocks)

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        sym = "sigma" if self.kind == "gaussian" else "kappa"
        return f"{self.kind}({sym}={self.parameter:g})"

    def metric_dp_exponent(self) -> Optional[float]:
        """Per-step metric-DP metadata for vmf: d_2-privacy level, or 2 kappa sqrt(m) with blocks."""
        if self.kind != "vmf":
            return None
        if self.blocks:
            return composition_exponent(len(self.blocks), self.parameter)
        return dp_epsilon_for_concentration(self.parameter)


def _as_lot(per_sample) -> np.ndarray:
    g = np.asarray(per_sample, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[0] == 0:
        raise ValueError("need a non-empty lot of per-sample vectors")
    return g


def gaussian_perturb_sum(per_sample, sigma: float, clip_norm: float, rng: np.random.Generator):
    """(sum_i g_i + z) / L with z ~ N(0, (sigma C)^2 I). Inputs must already be clipped."""
    g = _as_lot(per_sample)
    norms = np.linalg.norm(g, axis=1)
    if np.any(norms > clip_norm * (1 + 1e-9)):
        raise ValueError("gaussian_perturb_sum expects clipped inputs (norm <= clip_norm)")
    total = g.sum(axis=0)
    if sigma > 0:
        total = total + rng.normal(0.0, sigma * clip_norm, size=total.shape)
    return total / g.shape[0]


def vmf_perturb_mean(per_sample, kappa: float, rng: np.random.Generator):
    """(1/L) sum_i V(kappa, g_i) over unit-norm inputs; output norm <= 1."""
    g = _as_lot(per_sample)
    if not np.allclose(np.linalg.norm(g, axis=1), 1.0, rtol=1e-9, atol=0):
        raise ValueError("vmf_perturb_mean expects unit-norm inputs")
    return sample_vmf(g, kappa, rng).mean(axis=0)


def _block_slices(blocks: Sequence, dim: int):
    slices = [slice(int(a), int(b)) for a, b in blocks]
    covered = np.zeros(dim, dtype=int)
    for s in slices:
        covered[s] += 1
    if np.any(covered != 1):
        raise ValueError("blocks must partition the gradient coordinates exactly")
    return slices


def _vmf_blocks(g: np.ndarray, spec: NoiseSpec, rng: np.random.Generator):
    # Each block is scaled to 1/sqrt(m) so the concatenation is a unit vector:
    # v = sum_i (1/sqrt m) u_i with orthogonal unit u_i.
    slices = _block_slices(spec.blocks, g.shape[1])
    weight = 1.0 / np.sqrt(len(slices))
    out = np.zeros_like(g)
    for s in slices:
        unit, _ = scale_to_sphere(g[:, s], rng)
        out[:, s] = weight * sample_vmf(unit, spec.parameter, rng)
    return out.mean(axis=0)


def preprocess(per_sample_grads, spec: NoiseSpec, rng: np.random.Generator):
    """The pre-noise vectors: clipped for gaussian, scaled to the sphere for vmf.

    Returns ``(vectors, n_degenerate)`` where ``n_degenerate`` counts zero
    gradients that were replaced by a uniform direction.
    """
    g = _as_lot(per_sample_grads)
    if spec.kind == "gaussian":
        return clip(g, spec.clip_norm), 0
    if spec.kind == "vmf":
        return scale_to_sphere(g, rng, spec.clip_norm)
    return g, 0


def dp_noise_step(per_sample_grads, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Noisy mean gradient for one lot under ``spec``."""
    g = _as_lot(per_sample_grads)
    if spec.kind == "none":
        return g.mean(axis=0)
    if spec.kind == "gaussian":
        return gaussian_perturb_sum(clip(g, spec.clip_norm), spec.parameter, spec.clip_norm, rng)
    if spec.blocks:
        return _vmf_blocks(g, spec, rng)
    unit, _ = scale_to_sphere(g, rng, spec.clip_norm)
    return vmf_perturb_mean(unit, spec.parameter, rng)

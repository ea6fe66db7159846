"""Calibration attacks against the surrogate classifier.

Membership inference scores each example by its loss (vanilla) or by how much
lower the target's loss is than the mean loss of reference models trained
without the example (MIA-R). Gradient inversion recovers the bag-of-words
input from a shared per-example gradient: the input layer's gradient is the
outer product delta x^T, so x is read off a rank-1 fit to that block.
"""

from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, Split
from .mechanisms import NoiseSpec, dp_noise_step
from .textmetrics import EmbeddingTable, score_all
from .trainer import (
    ModelParams,
    TrainConfig,
    evaluate,
    per_sample_gradients,
    per_sample_losses,
    private_train,
    train_test_gap,
)

log = logging.getLogger(__name__)

RECONSTRUCTION_METRICS = ("jaccard", "cosine", "meteor", "rouge_l")


class SweepError(RuntimeError):
    """A sweep grid point failed; the message names the point and seed."""


# --- membership inference -------------------------------------------------


def roc_auc(scores_in, scores_out) -> float:
    """P(score_in > score_out) + 0.5 P(tie), via the Mann-Whitney rank sum."""
    s_in = np.asarray(scores_in, dtype=float)
    s_out = np.asarray(scores_out, dtype=float)
    if s_in.size == 0 or s_out.size == 0:
        raise ValueError("both score sets must be non-empty")
    ranks = rankdata(np.concatenate([s_in, s_out]))
    u = ranks[: s_in.size].sum() - s_in.size * (s_in.size + 1) / 2
    return float(u / (s_in.size * s_out.size))


def tpr_fpr(scores_in, scores_out, threshold) -> tuple[float, float]:
    """Rates of the rule 'member iff score >= threshold'."""
    return (float(np.mean(np.asarray(scores_in) >= threshold)),
            float(np.mean(np.asarray(scores_out) >= threshold)))


def max_advantage(scores_in, scores_out) -> float:
    """max over thresholds of TPR - FPR (Youden index of the empirical ROC)."""
    s_in = np.sort(np.asarray(scores_in, dtype=float))
    s_out = np.sort(np.asarray(scores_out, dtype=float))
    thresholds = np.unique(np.concatenate([s_in, s_out]))
    # count of scores >= t via searchsorted on the sorted arrays
    tpr = (s_in.size - np.searchsorted(s_in, thresholds, side="left")) / s_in.size
    fpr = (s_out.size - np.searchsorted(s_out, thresholds, side="left")) / s_out.size
    return float(max(0.0, np.max(tpr - fpr)))


@dataclass(frozen=True)
class MiaResult:
    auc: float
    leakage: float
    leakage_yeom: float

    def __iter__(self):
        # unpacks as (auc, leakage)
        return iter((self.auc, self.leakage))


def mia_loss_threshold(params: ModelParams, members: Split, nonmembers: Split) -> MiaResult:
    """Vanilla loss-threshold membership inference.

    Score is the negative loss. ``leakage`` is the threshold-maximised
    TPR - FPR; ``leakage_yeom`` fixes the threshold at the mean member loss
    (Yeom et al.'s rule) and can be negative.
    """
    loss_in = per_sample_losses(params, members.X, members.y)
    loss_out = per_sample_losses(params, nonmembers.X, nonmembers.y)
    tpr, fpr = tpr_fpr(-loss_in, -loss_out, -np.mean(loss_in))
    return MiaResult(
        auc=roc_auc(-loss_in, -loss_out),
        leakage=max_advantage(-loss_in, -loss_out),
        leakage_yeom=tpr - fpr,
    )


def mia_reference(
    params: ModelParams,
    references: Sequence[ModelParams],
    members: Split,
    nonmembers: Split,
) -> float:
    """AUC of the score (mean reference loss - target loss)."""
    if not references:
        raise ValueError("need at least one reference model")
    for k, ref in enumerate(references):
        if not ref.compatible_with(params):
            raise ValueError(f"reference model {k} does not match the target's shape")

    def scores(split):
        target = per_sample_losses(params, split.X, split.y)
        ref = np.mean([per_sample_losses(r, split.X, split.y) for r in references], axis=0)
        return ref - target

    return roc_auc(scores(members), scores(nonmembers))


def train_reference_models(
    data: Dataset,
    cfg: TrainConfig,
    n_models: int,
    pool: Split,
    size: int,
    seed: int = 0,
) -> list[ModelParams]:
    """Non-private reference models on subsets of ``pool`` (disjoint when it is large enough)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    disjoint = n_models * size <= len(pool)
    refs = []
    for k in range(n_models):
        idx = order[k * size:(k + 1) * size] if disjoint else rng.choice(len(pool), size, replace=False)
        ref_cfg = replace(cfg, noise=NoiseSpec(), seed=seed * 1000 + k,
                          lot_size=min(cfg.lot_size, size))
        params, _ = private_train(data, ref_cfg, split=pool.subset(idx, name=f"reference{k}"))
        refs.append(params)
    return refs


# --- gradient inversion ---------------------------------------------------


@dataclass
class Reconstruction:
    features: np.ndarray
    tokens: list
    converged: bool
    iterations: int
    residual: float


def _input_block(shared_gradient, params: ModelParams):
    w_sl, b_sl = params.input_block
    g = np.asarray(shared_gradient, dtype=float)
    if g.shape != (params.size,):
        raise ValueError(f"gradient has shape {g.shape}, model expects ({params.size},)")
    G = g[w_sl].reshape(-1, params.n_features)
    return G, g[b_sl]


def _rank1_residual(G, gb, delta, x):
    num = np.linalg.norm(np.outer(delta, x) - G) ** 2 + np.linalg.norm(delta - gb) ** 2
    den = np.linalg.norm(G) ** 2 + np.linalg.norm(gb) ** 2
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def gradient_inversion(
    shared_gradient,
    params: ModelParams,
    noise_used: NoiseSpec = NoiseSpec(),
    vocabulary: Sequence[str] | None = None,
    n_tokens: int | None = None,
    iterations: int = 200,
    tol: float = 1e-10,
) -> Reconstruction:
    """Recover the input features behind a single-example gradient.

    A clean gradient of the input layer is exactly delta x^T with bias
    gradient delta, so x = G^T g_b / |g_b|^2. For noised (or averaged)
    gradients the same bilinear model is fitted by alternating least squares,
    minimising |delta x^T - G|^2 + |delta - g_b|^2 within ``iterations``.

    The ``n_tokens`` largest coordinates are mapped back through
    ``vocabulary`` (index -> token); without ``n_tokens``, coordinates above
    half the maximum are kept. Tokens come back in vocabulary order.
    """
    G, gb = _input_block(shared_gradient, params)
    scale = np.sqrt(np.sum(G * G) + gb @ gb)
    if scale == 0:
        x = np.zeros(params.n_features)
        return Reconstruction(x, [], False, 0, 1.0)

    converged, it = False, 0
    if gb @ gb > 0:
        delta = gb.copy()
        x = G.T @ delta / (delta @ delta)
        residual = _rank1_residual(G, gb, delta, x)
        converged = noise_used.kind == "none" and residual <= 1e-8
    else:
        u, s, vt = np.linalg.svd(G, full_matrices=False)
        delta, x = u[:, 0] * s[0], vt[0]
        residual = _rank1_residual(G, gb, delta, x)

    if not converged:
        prev = np.inf
        for it in range(1, iterations + 1):
            x = G.T @ delta / max(delta @ delta, 1e-300)
            delta = (G @ x + gb) / (x @ x + 1.0)
            obj = np.sum((np.outer(delta, x) - G) ** 2) + np.sum((delta - gb) ** 2)
            if prev - obj <= tol * scale**2:
                converged = True
                break
            prev = obj
        residual = _rank1_residual(G, gb, delta, x)

    k = n_tokens
    if k is None:
        peak = x.max()
        chosen = np.flatnonzero(x >= 0.5 * peak) if peak > 0 else np.array([], dtype=int)
    else:
        # stable sort so ties resolve deterministically to the lower index
        chosen = np.argsort(-x, kind="stable")[:k]
    chosen = np.sort(chosen)
    tokens = [vocabulary[i] for i in chosen] if vocabulary is not None else [int(i) for i in chosen]
    return Reconstruction(x, tokens, converged, it, residual)


def reference_tokens(tokens: Sequence[str], vocabulary: dict) -> list[str]:
    """A sentence's distinct in-vocabulary tokens in vocabulary order (what inversion can see)."""
    return sorted({t for t in tokens if t in vocabulary}, key=vocabulary.get)


def invert_probes(
    params: ModelParams,
    probes: Split,
    noise: NoiseSpec,
    vocabulary: dict,
    rng: np.random.Generator,
    embeddings: EmbeddingTable | None = None,
    iterations: int = 200,
) -> dict:
    """Noise each probe's own gradient with ``noise``, invert it, and average the metrics."""
    inv = sorted(vocabulary, key=vocabulary.get)
    emb = embeddings if embeddings is not None else EmbeddingTable.one_hot(vocabulary)
    scores = {m: [] for m in RECONSTRUCTION_METRICS}
    grads, _ = per_sample_gradients(params, probes.X, probes.y)
    for g, toks in zip(grads, probes.tokens):
        ref = reference_tokens(toks, vocabulary)
        if not ref:
            continue
        shared = dp_noise_step(g[None, :], noise, rng)
        rec = gradient_inversion(shared, params, noise, inv, n_tokens=len(ref), iterations=iterations)
        s = score_all(rec.tokens, ref, emb)
        for m in RECONSTRUCTION_METRICS:
            scores[m].append(s[m])
    if not scores["rouge_l"]:
        raise ValueError("no probe has in-vocabulary tokens")
    return {m: float(np.mean(v)) for m, v in scores.items()}


# --- sweep ------------------------------------------------------------------


@dataclass
class AttackReport:
    noise: NoiseSpec
    seeds: list
    auc: float
    privacy_leakage: float
    leakage_yeom: float
    auc_reference: float | None
    jaccard: float
    cosine: float
    meteor: float
    rouge_l: float
    accuracy: float
    mcc: float
    train_test_gap: float
    runs: list = field(default_factory=list, repr=False)

    @property
    def reconstruction(self) -> dict:
        return {m: getattr(self, m) for m in RECONSTRUCTION_METRICS}


@dataclass(frozen=True)
class SweepSetup:
    """Fixed parts of a sweep shared by every grid point."""

    base: TrainConfig
    members: Split
    nonmembers: Split
    probes: Split
    n_references: int = 10
    reference_size: int | None = None
    inversion_iterations: int = 200


def make_setup(
    data: Dataset,
    base: TrainConfig,
    n_references: int = 10,
    probe_size: int = 32,
    mia_size: int | None = None,
    probe_seed: int = 0,
    reference_size: int | None = None,
) -> SweepSetup:
    """Members from train, non-members from test, probes held out from test by ``probe_seed``."""
    rng = np.random.default_rng(probe_seed)
    test_order = rng.permutation(len(data.test))
    probes = data.test.subset(test_order[:probe_size], name="probes")
    n_mia = min(len(data.train), len(data.test)) if mia_size is None else mia_size
    members = data.train.subset(rng.permutation(len(data.train))[:n_mia], name="members")
    nonmembers = data.test.subset(test_order[:n_mia], name="nonmembers")
    return SweepSetup(base, members, nonmembers, probes, n_references, reference_size)


def _run_point(data: Dataset, setup: SweepSetup, noise: NoiseSpec, seed: int, references):
    cfg = replace(setup.base, noise=noise, seed=seed)
    t0 = time.perf_counter()
    params, _ = private_train(data, cfg)
    mia = mia_loss_threshold(params, setup.members, setup.nonmembers)
    auc_r = (mia_reference(params, references, setup.members, setup.nonmembers)
             if references else None)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    rec = invert_probes(params, setup.probes, noise, data.vocabulary, rng,
                        iterations=setup.inversion_iterations)
    test = evaluate(params, data.test)
    return {
        "seed": seed, "auc": mia.auc, "privacy_leakage": mia.leakage,
        "leakage_yeom": mia.leakage_yeom, "auc_reference": auc_r, **rec,
        "accuracy": test["accuracy"], "mcc": test["mcc"],
        "train_test_gap": train_test_gap(params, data),
        "wall_time_s": time.perf_counter() - t0,
    }


def _median(values):
    vals = [v for v in values if v is not None]
    return float(statistics.median(vals)) if vals else None


def aggregate(noise: NoiseSpec, runs: list[dict]) -> AttackReport:
    keys = ("auc", "privacy_leakage", "leakage_yeom", "auc_reference", *RECONSTRUCTION_METRICS,
            "accuracy", "mcc", "train_test_gap")
    med = {k: _median(r[k] for r in runs) for k in keys}
    return AttackReport(noise=noise, seeds=[r["seed"] for r in runs], runs=runs, **med)


_WORKER: dict = {}


def _init_worker(data, setup):
    _WORKER["data"], _WORKER["setup"] = data, setup


def _point_job(args):
    noise, seed, refs = args
    try:
        return _run_point(_WORKER["data"], _WORKER["setup"], noise, seed, refs)
    except Exception as exc:  # annotated by the caller
        return exc


def run_grid(data: Dataset, setup: SweepSetup, grid: Sequence[NoiseSpec], seeds: Sequence[int],
             jobs: int = 1, reference_pool: Split | None = None):
    """Every (noise, seed) run as ``(noise, seed, result)`` in grid-major order.

    A failed run's result is the exception it raised. Reference models are
    trained once per seed and shared across the grid.
    """
    pool = data.validation if reference_pool is None else reference_pool
    refs = {}
    for seed in seeds:
        if setup.n_references:
            size = setup.reference_size or min(len(data.train), len(pool) // 2)
            refs[seed] = train_reference_models(data, setup.base, setup.n_references, pool, size, seed)
        else:
            refs[seed] = []
    tasks = [(noise, seed, refs[seed]) for noise in grid for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(data, setup)) as ex:
            results = list(ex.map(_point_job, tasks))
    else:
        _init_worker(data, setup)
        try:
            results = [_point_job(t) for t in tasks]
        finally:
            _WORKER.clear()
    return [(t[0], t[1], r) for t, r in zip(tasks, results)]


def sweep_attack(
    data: Dataset,
    cfg_grid: Sequence[NoiseSpec],
    seeds: Sequence[int],
    base: TrainConfig | None = None,
    setup: SweepSetup | None = None,
    jobs: int = 1,
    reference_pool: Split | None = None,
) -> list[AttackReport]:
    """Train a target per (noise level, seed), attack it, and report medians over seeds."""
    if not cfg_grid:
        raise ValueError("empty noise grid")
    if not seeds:
        raise ValueError("need at least one seed")
    if setup is None:
        setup = make_setup(data, base or TrainConfig())
    out = []
    results = run_grid(data, setup, cfg_grid, seeds, jobs, reference_pool)
    for k, noise in enumerate(cfg_grid):
        runs = []
        for _, seed, r in results[k * len(seeds):(k + 1) * len(seeds)]:
            if isinstance(r, Exception):
                raise SweepError(f"grid point {noise.label}, seed {seed}: {r}") from r
            runs.append(r)
        out.append(aggregate(noise, runs))
    return out

"""Privacy/utility calibration sweep and its CSV/plot output.

One row per (mechanism, noise level) plus a no-noise baseline, each the
median over seeds of utility and attack metrics. Gaussian levels may be
given as target epsilons, resolved to noise multipliers by the accountant.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .accountant import DEFAULT_DELTA, PrivacyBudget, sigma_for_target_epsilon
from .attacks import RECONSTRUCTION_METRICS, SweepSetup, make_setup, run_grid
from .data import Dataset, Split
from .mechanisms import NoiseSpec
from .trainer import TrainConfig

log = logging.getLogger(__name__)

COLUMNS = ("mechanism", "noise_param", "target_epsilon", "utility_name", "utility", "auc",
           "leakage", "jaccard", "cosine", "meteor", "rouge_l", "n_seeds", "wall_time_s")
AUX_COLUMNS = ("mechanism", "noise_param", "utility_min", "utility_max", "auc_min", "auc_max",
               "auc_reference", "leakage_yeom", "rouge_l_min", "rouge_l_max", "train_test_gap",
               "error")
UTILITIES = ("accuracy", "mcc")


@dataclass
class TradeoffRow:
    mechanism: str
    noise_param: float
    target_epsilon: float | None = None
    utility_name: str = "accuracy"
    utility: float | None = None
    auc: float | None = None
    leakage: float | None = None
    jaccard: float | None = None
    cosine: float | None = None
    meteor: float | None = None
    rouge_l: float | None = None
    n_seeds: int = 0
    wall_time_s: float | None = None
    aux: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def is_baseline(self) -> bool:
        return self.mechanism == "none"

    @property
    def error(self) -> str | None:
        return self.aux.get("error")


@dataclass
class TradeoffTable:
    rows: list[TradeoffRow]

    def __len__(self):
        return len(self.rows)

    def by_mechanism(self, mechanism: str) -> list[TradeoffRow]:
        return [r for r in self.rows if r.mechanism == mechanism]


def resolve_target_epsilons(
    target_epsilons: Sequence[float],
    n_train: int,
    cfg: TrainConfig,
    delta: float = DEFAULT_DELTA,
) -> list[tuple[float, float]]:
    """``(epsilon, sigma)`` pairs for the training shape in ``cfg``."""
    out = []
    for eps in target_epsilons:
        budget = PrivacyBudget.for_training(eps, n_train, cfg.lot_size, cfg.epochs, delta)
        out.append((float(eps), sigma_for_target_epsilon(budget)))
    return out


def _stats(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, None
    return float(statistics.median(vals)), float(min(vals)), float(max(vals))


def _make_row(noise: NoiseSpec, target_eps, utility: str, runs: list, errors: list,
              record_timing: bool) -> TradeoffRow:
    row = TradeoffRow(mechanism=noise.kind, noise_param=float(noise.parameter),
                      target_epsilon=target_eps, utility_name=utility, n_seeds=len(runs))
    util, umin, umax = _stats(r[utility] for r in runs)
    auc, amin, amax = _stats(r["auc"] for r in runs)
    rl, rmin, rmax = _stats(r["rouge_l"] for r in runs)
    row.utility, row.auc, row.rouge_l = util, auc, rl
    row.leakage = _stats(r["privacy_leakage"] for r in runs)[0]
    for m in RECONSTRUCTION_METRICS:
        if m != "rouge_l":
            setattr(row, m, _stats(r[m] for r in runs)[0])
    if record_timing and runs:
        row.wall_time_s = float(sum(r["wall_time_s"] for r in runs))
    row.aux = {
        "utility_min": umin, "utility_max": umax, "auc_min": amin, "auc_max": amax,
        "auc_reference": _stats(r["auc_reference"] for r in runs)[0],
        "leakage_yeom": _stats(r["leakage_yeom"] for r in runs)[0],
        "rouge_l_min": rmin, "rouge_l_max": rmax,
        "train_test_gap": _stats(r["train_test_gap"] for r in runs)[0],
        "error": "; ".join(errors) or None,
    }
    return row


def run_calibration(
    data: Dataset,
    gaussian_grid: Sequence[float],
    vmf_grid: Sequence[float],
    seeds: Sequence[int],
    base: TrainConfig | None = None,
    target_epsilons: Sequence[float] = (),
    utility: str = "accuracy",
    setup: SweepSetup | None = None,
    jobs: int = 1,
    record_timing: bool = False,
    delta: float = DEFAULT_DELTA,
    reference_pool: Split | None = None,
) -> TradeoffTable:
    """Baseline row, then Gaussian rows (explicit sigmas, then target epsilons), then vMF rows.

    A grid point whose runs raise is still emitted: metrics come from the
    seeds that succeeded (empty if none did) and the error text goes to the
    row's ``aux["error"]``.
    """
    if utility not in UTILITIES:
        raise ValueError(f"utility must be one of {UTILITIES}")
    if not seeds:
        raise ValueError("need at least one seed")
    if not (gaussian_grid or vmf_grid or target_epsilons):
        raise ValueError("both noise grids are empty")
    base = base or TrainConfig()
    setup = setup or make_setup(data, base)
    points: list[tuple[NoiseSpec, float | None]] = [(NoiseSpec(), None)]
    points += [(NoiseSpec.gaussian(s), None) for s in gaussian_grid]
    for eps, sigma in resolve_target_epsilons(target_epsilons, len(data.train), setup.base, delta):
        points.append((NoiseSpec.gaussian(sigma), eps))
    points += [(NoiseSpec.vmf(k), None) for k in vmf_grid]
    for noise, _ in points[1:]:
        if noise.parameter <= 0:
            raise ValueError(f"noise levels must be positive, got {noise.label}")

    results = run_grid(data, setup, [n for n, _ in points], seeds, jobs, reference_pool)
    rows = []
    for k, (noise, eps) in enumerate(points):
        runs, errors = [], []
        for _, seed, r in results[k * len(seeds):(k + 1) * len(seeds)]:
            if isinstance(r, Exception):
                log.warning("grid point %s seed %d failed: %s", noise.label, seed, r)
                errors.append(f"seed {seed}: {type(r).__name__}: {r}")
            else:
                runs.append(r)
        rows.append(_make_row(noise, eps, utility, runs, errors, record_timing))
    return TradeoffTable(rows)


# --- output -----------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if v != v:  # NaN never reaches the file
            return ""
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns, records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_cell(rec.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def aux_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".aux.csv")


def plot_path(path) -> Path:
    return Path(path).with_suffix(".png")


def emit(table: TradeoffTable, path, plot: bool = True) -> list[Path]:
    """Write the CSV, an auxiliary min/max/error CSV and (optionally) a scatter plot.

    Returns the written paths. Missing values are empty cells.
    """
    if not len(table):
        raise ValueError("refusing to write an empty table")
    path = Path(path)
    main = [{f.name: getattr(r, f.name) for f in fields(r) if f.name != "aux"} for r in table.rows]
    _write_csv(path, COLUMNS, main)
    aux = [{"mechanism": r.mechanism, "noise_param": r.noise_param, **r.aux} for r in table.rows]
    _write_csv(aux_path(path), AUX_COLUMNS, aux)
    written = [path, aux_path(path)]
    if plot:
        written.append(plot_tradeoff(table, plot_path(path)))
    return written


def plot_tradeoff(table: TradeoffTable, path) -> Path:
    """Utility against ROUGE-L, one marker style per mechanism."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    styles = {"none": ("k", "*"), "gaussian": ("tab:blue", "o"), "vmf": ("tab:red", "s")}
    fig, ax = plt.subplots(figsize=(5, 4))
    for mech, (color, marker) in styles.items():
        rows = [r for r in table.by_mechanism(mech) if r.utility is not None and r.rouge_l is not None]
        if not rows:
            continue
        ax.scatter([r.rouge_l for r in rows], [r.utility for r in rows], c=color, marker=marker,
                   label={"none": "no noise"}.get(mech, mech))
        for r in rows:
            if not r.is_baseline:
                ax.annotate(f"{r.noise_param:g}", (r.rouge_l, r.utility), fontsize=7,
                            xytext=(3, 3), textcoords="offset points")
    name = table.rows[0].utility_name
    ax.set_xlabel("ROUGE-L of reconstruction")
    ax.set_ylabel(name)
    ax.legend()
    fig.tight_layout()
    # fixed metadata so repeated runs give identical bytes
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def _parse(v: str, kind):
    if v == "":
        return None
    return kind(v)


def load_table(path) -> TradeoffTable:
    """Read a CSV written by :func:`emit` (and its auxiliary file when present)."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(TradeoffRow(
                mechanism=rec["mechanism"],
                noise_param=float(rec["noise_param"]),
                target_epsilon=_parse(rec["target_epsilon"], float),
                utility_name=rec["utility_name"],
                n_seeds=int(rec["n_seeds"]),
                **{c: _parse(rec[c], float) for c in COLUMNS[4:11] + ("wall_time_s",)},
            ))
    ap = aux_path(path)
    if ap.is_file():
        with ap.open(encoding="utf-8", newline="") as fh:
            for row, rec in zip(rows, csv.DictReader(fh)):
                row.aux = {c: (rec[c] or None) if c == "error" else _parse(rec[c], float)
                           for c in AUX_COLUMNS[2:]}
    return TradeoffTable(rows)

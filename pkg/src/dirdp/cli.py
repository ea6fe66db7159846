"""Command-line interface: ``dirdp {train,attack,accountant,score,calibrate}``.

Every option can also come from ``--config FILE`` (``key = value`` lines,
``#`` comments, keys spelled like the long flags with or without dashes).
Flags given on the command line win over the file.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .accountant import (
    DEFAULT_DELTA,
    InfeasibleBudgetError,
    PrivacyBudget,
    sigma_for_target_epsilon,
    steps_for,
)
from .attacks import invert_probes, make_setup, mia_loss_threshold, mia_reference, train_reference_models
from .calibrate import emit, run_calibration
from .data import DataFormatError, Dataset, read_tsv, synthetic_corpus, tokenize
from .mechanisms import NoiseSpec
from .textmetrics import EmbeddingTable, score_all
from .trainer import DivergenceError, TrainConfig, evaluate, load_model, private_train, save_model
from .vmf import SamplerError

log = logging.getLogger("dirdp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class Opt:
    type: Callable
    default: object
    help: str
    flag: bool = False  # store_true switch


OPTIONS = {
    # data
    "data": Opt(str, None, "labelled TSV (label<TAB>text), split into train/validation/test by --split-seed"),
    "train": Opt(str, None, "training TSV (instead of --data)"),
    "validation": Opt(str, None, "validation TSV, used with --train"),
    "test": Opt(str, None, "test TSV, used with --train"),
    "synthetic": Opt(int, None, "generate a synthetic sentiment corpus of this many sentences"),
    "synthetic_label_noise": Opt(float, 0.1, "label flip rate of the synthetic corpus"),
    "split_seed": Opt(int, 0, "seed of the train/validation/test split and synthetic corpus"),
    "vocab_size": Opt(int, 2000, "vocabulary size (top tokens by document frequency)"),
    # training
    "learning_rate": Opt(float, 0.5, "SGD learning rate"),
    "lot_size": Opt(int, 64, "lot (batch) size L"),
    "epochs": Opt(int, 10, "training epochs"),
    "hidden_dim": Opt(int, 0, "hidden units (0 = linear softmax model)"),
    "noise": Opt(str, "none", "noise mechanism: none, gaussian or vmf"),
    "noise_param": Opt(float, 0.0, "sigma for gaussian, kappa for vmf"),
    "seed": Opt(int, 0, "training/attack seed"),
    "model_out": Opt(str, "model.json", "where train writes the model"),
    # attacks
    "model": Opt(str, None, "model file written by train"),
    "references": Opt(int, 10, "reference models for MIA-R (0 disables it)"),
    "probe_size": Opt(int, 32, "held-out sentences used for gradient inversion"),
    "mia_size": Opt(int, None, "members and non-members scored by MIA (default: all available)"),
    "embeddings": Opt(str, None, "embedding text file (token v1 ... vD) for cosine; default is bag-of-words cosine"),
    "iterations": Opt(int, 200, "gradient-matching iteration budget"),
    # accountant
    "n": Opt(int, None, "training set size N"),
    "batch": Opt(int, None, "lot size"),
    "delta": Opt(float, DEFAULT_DELTA, "target delta"),
    "epsilons": Opt(_floats, [1.0, 10.0, 100.0], "comma-separated target epsilons"),
    "conversion": Opt(str, "improved", "RDP to (eps, delta) conversion: improved or classic"),
    # score
    "candidate": Opt(str, None, "candidate text"),
    "reference": Opt(str, None, "reference text"),
    # calibrate
    "gaussian_grid": Opt(_floats, [], "comma-separated noise multipliers sigma"),
    "target_epsilons": Opt(_floats, [], "comma-separated target epsilons resolved to sigma"),
    "vmf_grid": Opt(_floats, [], "comma-separated concentrations kappa"),
    "seeds": Opt(_ints, [0, 1, 2, 3, 4], "comma-separated seeds"),
    "utility": Opt(str, "accuracy", "utility metric: accuracy or mcc"),
    "out": Opt(str, "tradeoff.csv", "output CSV path"),
    "no_plot": Opt(_bool, False, "skip the scatter plot", flag=True),
    "record_timing": Opt(_bool, False, "fill wall_time_s (makes the CSV run-dependent)", flag=True),
    "jobs": Opt(int, 1, "parallel worker processes"),
}

DATA_OPTS = ["data", "train", "validation", "test", "synthetic", "synthetic_label_noise",
             "split_seed", "vocab_size"]
TRAIN_OPTS = ["learning_rate", "lot_size", "epochs", "hidden_dim", "noise", "noise_param", "seed"]

COMMANDS = {
    "train": ("train a (private) classifier and write a model file",
              DATA_OPTS + TRAIN_OPTS + ["model_out"]),
    "attack": ("attack a trained model; prints one CSV report row",
               DATA_OPTS + ["model", "noise", "noise_param", "seed", "references", "probe_size",
                            "mia_size", "embeddings", "iterations"]),
    "accountant": ("noise multiplier sigma for each target epsilon",
                   ["n", "batch", "epochs", "delta", "epsilons", "conversion"]),
    "score": ("reconstruction metrics for a candidate/reference pair",
              ["candidate", "reference", "embeddings"]),
    "calibrate": ("privacy/utility sweep over both mechanisms; writes CSV and plot",
                  DATA_OPTS + TRAIN_OPTS[:4] + ["gaussian_grid", "target_epsilons", "vmf_grid", "seeds",
                                                "utility", "references", "probe_size", "mia_size",
                                                "out", "no_plot", "record_timing", "jobs"]),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dirdp", description="Directional-privacy training and calibration tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file; command-line flags take precedence")
        for key in opts:
            o = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            default_txt = "" if o.default in (None, [], False) else f" (default: {_show(o.default)})"
            if o.flag:
                p.add_argument(flag, dest=key, action="store_true", default=None, help=o.help)
            else:
                p.add_argument(flag, dest=key, type=o.type, default=None, help=o.help + default_txt)
    return parser


def _show(v):
    return ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v) if isinstance(v, list) else v


def read_config(path, allowed) -> dict:
    """Parse ``key = value`` lines; unknown keys raise :class:`UsageError`."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in allowed:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = OPTIONS[key].type(value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def resolve(args) -> argparse.Namespace:
    """Merge built-in defaults < config file < command-line flags."""
    opts = COMMANDS[args.command][1]
    cfg = read_config(args.config, set(opts)) if args.config else {}
    merged = {}
    for key in opts:
        flag = getattr(args, key)
        merged[key] = flag if flag is not None else cfg.get(key, OPTIONS[key].default)
    return argparse.Namespace(command=args.command, **merged)


# --- helpers ----------------------------------------------------------------


def _noise(o) -> NoiseSpec:
    kind = o.noise.lower()
    return NoiseSpec() if kind == "none" and not o.noise_param else NoiseSpec(kind, o.noise_param)


def _train_config(o, noise=None) -> TrainConfig:
    return TrainConfig(learning_rate=o.learning_rate, lot_size=o.lot_size, epochs=o.epochs,
                       noise=noise if noise is not None else _noise(o), seed=o.seed,
                       hidden_dim=o.hidden_dim)


def _records(o):
    if o.synthetic is not None:
        return synthetic_corpus(o.synthetic, seed=o.split_seed, label_noise=o.synthetic_label_noise)
    return read_tsv(o.data)


def load_dataset(o, vocabulary=None, n_classes=None) -> Dataset:
    sources = [o.data is not None, o.train is not None, o.synthetic is not None]
    if sum(sources) != 1:
        raise UsageError("give exactly one of --data, --train or --synthetic")
    if o.train is not None:
        parts = [read_tsv(o.train)] + [read_tsv(p) if p else [] for p in (o.validation, o.test)]
        return Dataset.from_records(*parts, vocab_size=o.vocab_size, vocabulary=vocabulary,
                                    n_classes=n_classes)
    records = _records(o)
    if vocabulary is None:
        return Dataset.from_records_split(records, seed=o.split_seed, vocab_size=o.vocab_size)
    # same split as training, but featurized with the model's vocabulary
    d = Dataset.from_records_split(records, seed=o.split_seed, vocab_size=o.vocab_size)
    recs = [[(int(y), " ".join(t)) for y, t in zip(s.y, s.tokens)] for s in (d.train, d.validation, d.test)]
    return Dataset.from_records(*recs, vocabulary=vocabulary, n_classes=n_classes)


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.6g}" if isinstance(v, float) else str(v)


# --- subcommands ------------------------------------------------------------


def cmd_train(o, out) -> int:
    data = load_dataset(o)
    cfg = _train_config(o)
    params, history = private_train(data, cfg)
    metrics = {"train": evaluate(params, data.train)}
    for name in ("validation", "test"):
        if len(data.split(name)):
            metrics[name] = evaluate(params, data.split(name))
    meta = {
        "learning_rate": cfg.learning_rate, "lot_size": cfg.lot_size, "epochs": cfg.epochs,
        "hidden_dim": cfg.hidden_dim, "noise": cfg.noise.kind, "noise_param": cfg.noise.parameter,
        "seed": cfg.seed, "n_train": len(data.train),
        "zero_gradients": sum(h["zero_gradients"] for h in history),
    }
    save_model(o.model_out, params, data.vocabulary, meta)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["split", "accuracy", "mcc", "mean_loss"])
    for name, m in metrics.items():
        w.writerow([name, _fmt(m["accuracy"]), _fmt(m["mcc"]), _fmt(m["mean_loss"])])
    log.info("model written to %s", o.model_out)
    return EXIT_OK


ATTACK_COLUMNS = ("noise", "auc", "leakage", "leakage_yeom", "auc_reference",
                  "jaccard", "cosine", "meteor", "rouge_l")


def cmd_attack(o, out) -> int:
    if o.model is None:
        raise UsageError("attack needs --model")
    params, vocab, meta = load_model(o.model)
    data = load_dataset(o, vocabulary=vocab, n_classes=params.n_classes)
    if data.train.X.shape[1] != params.n_features:
        raise DataFormatError("dataset features do not match the model")
    if len(data.test) == 0:
        raise DataFormatError("attack needs held-out (test) examples")
    if o.probe_size < 1:
        raise UsageError("--probe-size must be positive")
    base = TrainConfig(learning_rate=meta.get("learning_rate", 0.5), lot_size=meta.get("lot_size", 64),
                       epochs=meta.get("epochs", 10), hidden_dim=params.hidden_dim, seed=o.seed)
    setup = make_setup(data, base, n_references=o.references, probe_size=o.probe_size,
                       mia_size=o.mia_size, probe_seed=o.seed)
    mia = mia_loss_threshold(params, setup.members, setup.nonmembers)
    auc_r = None
    if o.references > 0 and len(data.validation) >= 2:
        size = min(len(data.train), len(data.validation) // 2)
        refs = train_reference_models(data, base, o.references, data.validation, size, o.seed)
        auc_r = mia_reference(params, refs, setup.members, setup.nonmembers)
    emb = EmbeddingTable.load(o.embeddings) if o.embeddings else None
    noise = _noise(o)
    rng = np.random.default_rng(np.random.SeedSequence([o.seed, 7919]))
    rec = invert_probes(params, setup.probes, noise, vocab, rng, emb, o.iterations)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ATTACK_COLUMNS)
    w.writerow([noise.label, *(_fmt(v) for v in (mia.auc, mia.leakage, mia.leakage_yeom, auc_r)),
                *(_fmt(rec[m]) for m in ("jaccard", "cosine", "meteor", "rouge_l"))])
    return EXIT_OK


def cmd_accountant(o, out) -> int:
    if o.n is None or o.batch is None:
        raise UsageError("accountant needs --n and --batch")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["epsilon", "sigma", "steps", "sample_rate"])
    for eps in o.epsilons:
        budget = PrivacyBudget.for_training(eps, o.n, o.batch, o.epochs, o.delta)
        try:
            sigma = _fmt(sigma_for_target_epsilon(budget, conversion=o.conversion))
        except InfeasibleBudgetError as exc:
            log.warning("epsilon %g: %s", eps, exc)
            sigma = "infeasible"
        w.writerow([_fmt(float(eps)), sigma, steps_for(o.n, o.batch, o.epochs), _fmt(budget.sample_rate)])
    return EXIT_OK


def cmd_score(o, out) -> int:
    if o.candidate is None or o.reference is None:
        raise UsageError("score needs --candidate and --reference")
    if o.embeddings:
        emb = EmbeddingTable.load(o.embeddings)
    else:
        # bag-of-words cosine over the pair's own tokens
        words = sorted(set(tokenize(o.candidate)) | set(tokenize(o.reference)))
        emb = EmbeddingTable.one_hot({w: i for i, w in enumerate(words)}) if words else None
    scores = score_all(o.candidate, o.reference, emb)
    for m in ("jaccard", "cosine", "meteor", "rouge_l"):
        out.write(f"{m}\t{_fmt(scores[m])}\n")
    return EXIT_OK


def cmd_calibrate(o, out) -> int:
    if not (o.gaussian_grid or o.vmf_grid or o.target_epsilons):
        raise UsageError("give at least one of --gaussian-grid, --target-epsilons, --vmf-grid")
    data = load_dataset(o)
    base = TrainConfig(learning_rate=o.learning_rate, lot_size=o.lot_size, epochs=o.epochs,
                       hidden_dim=o.hidden_dim)
    setup = make_setup(data, base, n_references=o.references, probe_size=o.probe_size,
                       mia_size=o.mia_size)
    table = run_calibration(data, o.gaussian_grid, o.vmf_grid, o.seeds, base=base,
                            target_epsilons=o.target_epsilons, utility=o.utility, setup=setup,
                            jobs=o.jobs, record_timing=o.record_timing)
    for path in emit(table, o.out, plot=not o.no_plot):
        out.write(f"wrote {path}\n")
    failed = [r for r in table.rows if r.error]
    for r in failed:
        log.warning("%s %g: %s", r.mechanism, r.noise_param, r.error)
    return EXIT_OK


HANDLERS = {"train": cmd_train, "attack": cmd_attack, "accountant": cmd_accountant,
            "score": cmd_score, "calibrate": cmd_calibrate}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        opts = resolve(args)
        return HANDLERS[args.command](opts, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataFormatError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, SamplerError, FloatingPointError, InfeasibleBudgetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid parameter values (negative noise, oversized lot, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Text ingestion: tokenization, TSV I/O, bag-of-words datasets, a synthetic corpus."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class DataFormatError(ValueError):
    """Malformed dataset file; the message carries the path and line number."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation (punctuation dropped)."""
    return _TOKEN_RE.findall(text.lower())


def read_tsv(path) -> list[tuple[int, str]]:
    """Read ``label<TAB>text`` lines. Blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise DataFormatError(f"{path}:{lineno}: expected 'label<TAB>text'")
            try:
                y = int(label)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: label {label!r} is not an integer") from None
            if y < 0:
                raise DataFormatError(f"{path}:{lineno}: negative label {y}")
            records.append((y, text))
    return records


def write_tsv(path, records: Iterable[tuple[int, str]]):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for y, text in records:
            if "\t" in text or "\n" in text:
                raise ValueError("text may not contain tabs or newlines")
            fh.write(f"{int(y)}\t{text}\n")


def build_vocabulary(token_lists: Iterable[Sequence[str]], max_size: int = 2000) -> dict[str, int]:
    """Top ``max_size`` tokens by document frequency; ties broken alphabetically."""
    df = Counter()
    for toks in token_lists:
        df.update(set(toks))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return {tok: i for i, (tok, _) in enumerate(ranked)}


def featurize(token_lists: Sequence[Sequence[str]], vocabulary: dict[str, int]) -> np.ndarray:
    """Binary bag-of-words matrix (n, V)."""
    X = np.zeros((len(token_lists), len(vocabulary)))
    for r, toks in enumerate(token_lists):
        idx = [vocabulary[t] for t in toks if t in vocabulary]
        X[r, idx] = 1.0
    return X


@dataclass
class Split:
    name: str
    X: np.ndarray
    y: np.ndarray
    tokens: list = field(repr=False)

    def __len__(self):
        return len(self.y)

    def subset(self, idx, name=None) -> "Split":
        idx = np.asarray(idx, dtype=int)
        return Split(name or self.name, self.X[idx], self.y[idx], [self.tokens[i] for i in idx])


@dataclass
class Dataset:
    vocabulary: dict
    train: Split
    validation: Split
    test: Split
    n_classes: int

    @property
    def inverse_vocabulary(self) -> list[str]:
        inv = [""] * len(self.vocabulary)
        for tok, i in self.vocabulary.items():
            inv[i] = tok
        return inv

    def split(self, name: str) -> Split:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    @classmethod
    def from_records(
        cls,
        train: Sequence[tuple[int, str]],
        validation: Sequence[tuple[int, str]],
        test: Sequence[tuple[int, str]],
        vocab_size: int = 2000,
        vocabulary: dict | None = None,
        n_classes: int | None = None,
    ) -> "Dataset":
        toks = {k: [tokenize(t) for _, t in recs] for k, recs in
                (("train", train), ("validation", validation), ("test", test))}
        if vocabulary is None:
            vocabulary = build_vocabulary(toks["train"], vocab_size)
        labels = [y for recs in (train, validation, test) for y, _ in recs]
        if n_classes is None:
            n_classes = max(2, max(labels) + 1) if labels else 2
        if labels and max(labels) >= n_classes:
            raise DataFormatError(f"label {max(labels)} out of range for {n_classes} classes")
        splits = {
            k: Split(k, featurize(toks[k], vocabulary),
                     np.array([y for y, _ in recs], dtype=int), toks[k])
            for k, recs in (("train", train), ("validation", validation), ("test", test))
        }
        return cls(vocabulary, splits["train"], splits["validation"], splits["test"], n_classes)

    @classmethod
    def from_records_split(
        cls,
        records: Sequence[tuple[int, str]],
        seed: int = 0,
        validation_fraction: float = 0.1,
        test_fraction: float = 0.1,
        vocab_size: int = 2000,
    ) -> "Dataset":
        """Shuffle ``records`` with ``seed`` and cut disjoint train/validation/test splits."""
        n = len(records)
        order = np.random.default_rng(seed).permutation(n)
        n_test = int(round(test_fraction * n))
        n_val = int(round(validation_fraction * n))
        test = [records[i] for i in order[:n_test]]
        val = [records[i] for i in order[n_test:n_test + n_val]]
        train = [records[i] for i in order[n_test + n_val:]]
        return cls.from_records(train, val, test, vocab_size=vocab_size)


# Word pools for the synthetic sentiment corpus.
_POSITIVE = (
    "good great excellent wonderful superb delightful charming moving brilliant "
    "enjoyable fresh clever funny warm touching beautiful engaging solid smart "
    "stunning gripping heartfelt lovely masterful witty"
).split()
_NEGATIVE = (
    "bad awful terrible boring dull tedious clumsy weak poor messy bland "
    "lifeless stale shallow annoying pointless dreary forgettable ugly flat "
    "painful sloppy tiresome hollow"
).split()
_NEUTRAL = (
    "the a film movie story plot it this that is was of and with to in on as "
    "for its an one about director cast script scenes ending characters time "
    "acting music camera performance minutes audience year"
).split()
_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _pseudo_word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 4))
    return "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(n))


def synthetic_corpus(
    n: int,
    seed: int = 0,
    label_noise: float = 0.0,
    sentiment_words: tuple[int, int] = (1, 3),
    filler_words: tuple[int, int] = (4, 9),
    rare_words: tuple[int, int] = (1, 3),
    rare_pool: int = 3000,
) -> list[tuple[int, str]]:
    """Binary sentiment-like sentences.

    Each sentence mixes a few label-indicative words, neutral filler and some
    pseudo-words drawn from a large pool (rare features a model can memorize).
    ``label_noise`` flips that fraction of labels after generation.
    """
    rng = np.random.default_rng(seed)
    pool = sorted({_pseudo_word(rng) for _ in range(rare_pool)})
    out = []
    for _ in range(n):
        y = int(rng.integers(0, 2))
        words = list(rng.choice(_POSITIVE if y else _NEGATIVE,
                                size=int(rng.integers(*sentiment_words, endpoint=True))))
        words += list(rng.choice(_NEUTRAL, size=int(rng.integers(*filler_words, endpoint=True))))
        words += list(rng.choice(pool, size=int(rng.integers(*rare_words, endpoint=True))))
        rng.shuffle(words)
        if label_noise and rng.random() < label_noise:
            y = 1 - y
        out.append((y, " ".join(words)))
    return out

import numpy as np
import pytest

from dirdp.data import (
    DataFormatError,
    Dataset,
    build_vocabulary,
    featurize,
    read_tsv,
    synthetic_corpus,
    tokenize,
    write_tsv,
)


def test_tokenize_lowercases_and_drops_punctuation():
    assert tokenize("The cat, the HAT!") == ["the", "cat", "the", "hat"]
    assert tokenize("") == []


def test_tsv_round_trip(tmp_path):
    recs = [(1, "a fine film"), (0, "dull, dull")]
    p = tmp_path / "d.tsv"
    write_tsv(p, recs)
    assert read_tsv(p) == recs


def test_tsv_errors_name_path_and_line(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.tsv"):
        read_tsv(tmp_path / "nope.tsv")
    p = tmp_path / "bad.tsv"
    p.write_text("1\tok\n\nx\tbad label\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match=r"bad.tsv:3"):
        read_tsv(p)
    p.write_text("1 no tab\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match=r":1:"):
        read_tsv(p)
    p.write_text("-1\tneg\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_tsv(p)


def test_vocabulary_by_document_frequency():
    vocab = build_vocabulary([["b", "a", "a"], ["a", "c"], ["c", "d"]], max_size=3)
    assert vocab == {"a": 0, "c": 1, "b": 2}


def test_featurize_is_binary():
    X = featurize([["a", "a", "z"], []], {"a": 0, "b": 1})
    np.testing.assert_array_equal(X, [[1, 0], [0, 0]])


def test_split_is_disjoint_and_deterministic():
    recs = synthetic_corpus(300, seed=1)
    d1 = Dataset.from_records_split(recs, seed=4)
    d2 = Dataset.from_records_split(recs, seed=4)
    assert (len(d1.train), len(d1.validation), len(d1.test)) == (240, 30, 30)
    assert d1.train.tokens == d2.train.tokens
    assert np.array_equal(d1.test.X, d2.test.X)
    assert d1.inverse_vocabulary[0] in d1.vocabulary
    assert d1.split("test") is d1.test
    assert d1.train.X.shape[1] == len(d1.vocabulary)


def test_labels_out_of_range():
    with pytest.raises(DataFormatError):
        Dataset.from_records([(0, "a"), (2, "b")], [], [], n_classes=2)


def test_synthetic_corpus_is_seeded_and_balanced():
    a = synthetic_corpus(500, seed=2, label_noise=0.1)
    assert a == synthetic_corpus(500, seed=2, label_noise=0.1)
    frac = np.mean([y for y, _ in a])
    assert 0.4 < frac < 0.6

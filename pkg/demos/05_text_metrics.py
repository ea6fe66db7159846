"""Scoring a reconstruction against the original sentence."""

from dirdp.textmetrics import EmbeddingTable, score_all

reference = "the plot was clever and the cast was warm"
for candidate in ["the plot was clever and the cast was warm",
                  "cast clever plot the warm",
                  "a dull and tedious film"]:
    vocab = {t: i for i, t in enumerate(sorted(set((reference + " " + candidate).split())))}
    s = score_all(candidate, reference, EmbeddingTable.one_hot(vocab))
    print(f"{candidate!r}")
    print("   " + "  ".join(f"{k}={v:.3f}" for k, v in s.items()))

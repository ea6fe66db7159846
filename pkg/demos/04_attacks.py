"""Membership inference and gradient inversion against a small model.

The loss-threshold attack scores each example by its negated loss and
reports AUC. Gradient inversion reads a sentence's bag of words off a single
gradient of the input layer; noise on the shared gradient destroys it.
"""

import numpy as np

from dirdp.attacks import invert_probes, mia_loss_threshold
from dirdp.data import Dataset, synthetic_corpus
from dirdp.mechanisms import NoiseSpec
from dirdp.trainer import TrainConfig, private_train, train_test_gap

data = Dataset.from_records_split(
    synthetic_corpus(1200, seed=2, label_noise=0.2, rare_words=(3, 6)), seed=0)
params, _ = private_train(data, TrainConfig(lot_size=4, epochs=20))
mia = mia_loss_threshold(params, data.train, data.test)
print(f"train-test gap {train_test_gap(params, data):.1f} points, "
      f"membership AUC {mia.auc:.3f}, leakage {mia.leakage:.3f}")

probes = data.test.subset(np.arange(16))
print("\nshared-gradient noise    ROUGE-L of reconstruction")
for noise in [NoiseSpec(), NoiseSpec.gaussian(0.01), NoiseSpec.gaussian(1.0),
              NoiseSpec.vmf(1e5), NoiseSpec.vmf(10.0)]:
    scores = invert_probes(params, probes, noise, data.vocabulary, np.random.default_rng(0))
    print(f"{noise.label:>20}    {scores['rouge_l']:.3f}")

"""Training a bag-of-words classifier with Gaussian DP-SGD and with DirDP-SGD.

Gaussian DP-SGD clips each per-sample gradient and adds N(0, sigma^2 C^2) to
the sum. DirDP-SGD scales each gradient to unit norm and replaces it with a
VMF draw. Accuracy falls as sigma grows and rises as kappa grows.
"""

from dataclasses import replace

from dirdp.data import Dataset, synthetic_corpus
from dirdp.mechanisms import NoiseSpec
from dirdp.trainer import TrainConfig, evaluate, private_train

data = Dataset.from_records_split(synthetic_corpus(1500, seed=1, label_noise=0.1), seed=0)
base = TrainConfig(learning_rate=0.5, lot_size=64, epochs=8)
print(f"{len(data.train)} training sentences, {len(data.vocabulary)} features")

for noise in [NoiseSpec(), NoiseSpec.gaussian(0.1), NoiseSpec.gaussian(3.0),
              NoiseSpec.gaussian(30.0), NoiseSpec.vmf(1e5), NoiseSpec.vmf(100.0),
              NoiseSpec.vmf(1.0)]:
    params, history = private_train(data, replace(base, noise=noise))
    test = evaluate(params, data.test)
    print(f"{noise.label:>18}: test accuracy {test['accuracy']:.3f}  mcc {test['mcc']:+.3f}")

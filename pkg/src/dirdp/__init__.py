"""Directional (vMF) and Gaussian private SGD with an empirical privacy-calibration toolkit."""

__version__ = "0.1.0"

from .accountant import PrivacyBudget, compute_epsilon, sigma_for_target_epsilon
from .attacks import AttackReport, gradient_inversion, mia_loss_threshold, mia_reference, sweep_attack
from .calibrate import TradeoffTable, emit, load_table, run_calibration
from .data import Dataset, read_tsv, synthetic_corpus, tokenize
from .mechanisms import NoiseSpec, dp_noise_step
from .sphere import OrthoDecomposition, UnitVector
from .textmetrics import EmbeddingTable, cosine_similarity, jaccard, meteor_lite, rouge_l
from .trainer import TrainConfig, evaluate, private_train
from .vmf import VmfParams, mechanism_perturb, sample_vmf

__all__ = [
    "AttackReport", "Dataset", "EmbeddingTable", "NoiseSpec", "OrthoDecomposition",
    "PrivacyBudget", "TradeoffTable", "TrainConfig", "UnitVector", "VmfParams",
    "compute_epsilon", "cosine_similarity", "dp_noise_step", "emit", "evaluate",
    "gradient_inversion", "jaccard", "load_table", "mechanism_perturb", "meteor_lite",
    "mia_loss_threshold", "mia_reference", "private_train", "read_tsv", "rouge_l",
    "run_calibration", "sample_vmf", "sigma_for_target_epsilon", "sweep_attack",
    "synthetic_corpus", "tokenize",
]

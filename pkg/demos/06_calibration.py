"""A small privacy/utility calibration sweep written to CSV and PNG.

Each row is one noise level, with the median over seeds of test accuracy,
membership AUC and reconstruction scores. Re-running gives identical bytes.
"""

import sys
import tempfile
from pathlib import Path

from dirdp.attacks import make_setup
from dirdp.calibrate import emit, run_calibration
from dirdp.data import Dataset, synthetic_corpus
from dirdp.trainer import TrainConfig

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "tradeoff.csv"
data = Dataset.from_records_split(synthetic_corpus(600, seed=0, label_noise=0.1), seed=0)
base = TrainConfig(epochs=4, lot_size=32)
setup = make_setup(data, base, n_references=2, probe_size=8)
table = run_calibration(data, [0.1, 3.0], [10.0, 1e4], seeds=[0, 1], base=base, setup=setup,
                        target_epsilons=[10.0])
for path in emit(table, out):
    print("wrote", path)
print(out.read_text())

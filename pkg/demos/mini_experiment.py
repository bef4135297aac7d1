"""A scaled-down version of the full rotation experiment, in-process.

Trains every model/regime row on a small synthetic set, then prints the
markdown report. At this size the numbers are noisy; the acceptance suite
runs the desk-scale version (5000 samples, 30 epochs, 3 seeds).
"""

import sys
import tempfile

from poselift.harness import ABLATION_ROWS, STANDARD_ROWS, ExperimentConfig, run_matrix

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="poselift-")
cfg = ExperimentConfig(out=out, train_size=1000, test_size=300, epochs=8, seeds=(0, 1), bench_samples=200)

run_matrix(cfg, STANDARD_ROWS + ABLATION_ROWS, log=print)
print()
print(cfg.path("report.md").read_text())

"""
Learning rate and hidden-layer grid
===================================

Score every (hidden nodes, learning rate) pair of the 5x9 grid on held-out
synthetic faces.  The epoch cap is kept small here so the run takes
seconds; pass a larger cap as the first argument for a fuller picture.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from facexpr import build_features, grid_search, read_manifest, synth_dataset
from facexpr.pipeline import split

cap = int(sys.argv[1]) if len(sys.argv) > 1 else 300
work = Path(tempfile.mkdtemp(prefix="facexpr_grid_"))
records = read_manifest(synth_dataset(work, per_class=20, seed=0))
train_recs, test_recs = split(records, seed=0, per_class_test=5)
feats = build_features(train_recs, test_recs)

result = grid_search(feats.train_x, feats.train_y, feats.test_x, feats.test_y, max_epochs=cap, seed=0)
with np.printoptions(precision=1, suppress=True):
    print("rates  ", np.array(result.rates))
    for h, row in zip(result.hidden, result.accuracy):
        print(f"hidden {h:>2}", row)
h, r, acc = result.best
print(f"best: {h} hidden nodes, rate {r}, {acc:.1f}%")
(work / "grid.csv").write_text(result.to_csv())
print("grid written to", work / "grid.csv")

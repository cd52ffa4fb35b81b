"""
Train and evaluate on a synthetic corpus
========================================

The whole pipeline in library calls: generate a corpus, hold out five
faces per class, extract 200 features (40 PCA coefficients for each of
five regions), train a 200-10-7 network and print the per-class table.
"""
import sys
import tempfile
from pathlib import Path

from facexpr import evaluate, read_manifest, save_model, load_model, synth_dataset, train_expression_model

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="facexpr_"))
manifest = synth_dataset(work / "corpus", per_class=20, seed=0)
records = read_manifest(manifest)

model, history, feats = train_expression_model(
    records, hidden=10, rate=0.3, max_epochs=5000, target_error=1e-7, seed=0, per_class_test=5
)
print(f"train/test: {len(feats.train_y)}/{len(feats.test_y)} images, features {feats.train_x.shape[1]}")
print(f"epochs: {history.size}, final MSE {history[-1]:.3e}")

report = evaluate(model, feats.test_x, feats.test_y)
print(report.table())

# the saved model classifies exactly like the one in memory
save_model(model, work / "model.json")
again = load_model(work / "model.json")
same = all(again.predict(v)[0] == model.predict(v)[0] for v in feats.test_x)
print("reloaded model agrees on every test image:", same)
print("files in", work)

"""
Principal components of the mouth region
========================================

Fit PCA to the mouth patches of a small synthetic corpus and look at how
much variance the leading components keep and how well a patch is rebuilt
from them.
"""
import numpy as np

from facexpr import Expression, canny, extract_all, histogram_equalize, pca_fit, pca_project, pca_reconstruct
from facexpr.synth import synth_face

rng = np.random.default_rng(1)
patches, labels = [], []
for label in Expression:
    for _ in range(12):
        eq = histogram_equalize(synth_face(label, rng))
        patches.append(extract_all(eq, canny(eq)).patches[-1].values)
        labels.append(int(label))
patches = np.stack(patches)
print("mouth patches:", patches.shape)  # 84 samples of 32x16 pixels

# 84 samples in 512 dimensions: the Gram route is picked automatically
model = pca_fit(patches, 40)
share = np.cumsum(model.eigenvalues) / np.var(patches, axis=0).sum()
for k in (1, 5, 10, 20, 40):
    print(f"variance kept by {k:>2} components: {100 * share[k - 1]:5.1f}%")

x = patches[0]
for k in (5, 20, 40):
    m = pca_fit(patches, k)
    err = np.linalg.norm(x - pca_reconstruct(m, pca_project(m, x))) / np.linalg.norm(x - m.mean)
    print(f"relative reconstruction error with {k:>2} components: {err:.3f}")

# class means in the first two coefficients; happy and sad mouths separate
coef = pca_project(model, patches)[:, :2]
for label in Expression:
    mean = coef[np.array(labels) == int(label)].mean(axis=0)
    print(f"{label.label:<10} {mean[0]:8.1f} {mean[1]:8.1f}")

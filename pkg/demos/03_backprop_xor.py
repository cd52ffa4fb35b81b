"""
Back-propagation on XOR
=======================

A 2-4-1 logistic network learns XOR with online gradient descent.
Also checks one analytic gradient against central differences.
"""
import numpy as np

from facexpr import TrainConfig, forward, init_weights, train
from facexpr.mlp import gradients

x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
t = np.array([[0], [1], [1], [0]], float)

model = init_weights([2, 4, 1], seed=0)
# output-layer weight from hidden unit 0, on the (1, 1) sample
gw, _, _ = gradients(model, x[3], t[3])
eps = 1e-5
w = model.weights[1]
old = w[0, 0]
w[0, 0] = old + eps
up = 0.5 * float(((forward(model, x[3])[-1] - t[3]) ** 2).sum())
w[0, 0] = old - eps
down = 0.5 * float(((forward(model, x[3])[-1] - t[3]) ** 2).sum())
w[0, 0] = old
print(f"dE/dw[0,0]: analytic {gw[1][0, 0]:.10f}  numeric {(up - down) / (2 * eps):.10f}")

trained, history = train(model, x, t, TrainConfig(learning_rate=0.3, max_epochs=100000, target_error=1e-3, seed=0))
print(f"stopped after {history.size} epochs at MSE {history[-1]:.2e}")
for epoch in (1, 10, 100, 1000, history.size):
    print(f"  epoch {epoch:>5}: {history[epoch - 1]:.5f}")
for row in x:
    print(row.astype(int), f"{forward(trained, row)[-1][0]:.3f}")

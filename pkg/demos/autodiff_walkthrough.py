"""A short tour of the tensor engine: graphs, gradients, verification.

Run from the repository root:  python3 demos/autodiff_walkthrough.py
"""
import numpy as np

from dunp.autodiff import Tensor, backward, matmul, no_grad, relu, sigmoid

print("== building a graph ==")
x = Tensor(np.array([[1.0, -2.0], [3.0, 0.5]]), requires_grad=True)
w = Tensor(np.array([[0.1, 0.2], [0.3, 0.4]]), requires_grad=True)
y = relu(matmul(x, w))
loss = (y * y).sum()
print(f"matmul -> relu -> sum of squares = {loss.item():.6f}")

print("\n== reverse pass ==")
order = backward(loss)
print(f"visited {len(order)} nodes in topological order")
print("dloss/dx =\n", x.grad)
print("dloss/dw =\n", w.grad)

print("\n== checking one entry by central differences ==")
h = 1e-6
probe = x.data.copy()
probe[1, 0] += h
up = float((np.maximum(probe @ w.data, 0.0) ** 2).sum())
probe[1, 0] -= 2 * h
dn = float((np.maximum(probe @ w.data, 0.0) ** 2).sum())
fd = (up - dn) / (2 * h)
print(f"analytic {x.grad[1, 0]:.8f}  numeric {fd:.8f}  "
      f"|diff| {abs(x.grad[1, 0] - fd):.2e}")

print("\n== value reuse accumulates ==")
a = Tensor(np.array([2.0, 3.0]), requires_grad=True)
out = (a * a + a).sum()          # d/da = 2a + 1
backward(out)
print(f"grad of sum(a*a + a) at {a.data} -> {a.grad}  (expected {2*a.data + 1})")

print("\n== no_grad suppresses recording ==")
with no_grad():
    silent = sigmoid(a * 10.0)
print(f"inside no_grad the result has no parents: {silent._parents == ()}")

"""A tour of the tensor core: building blocks, gradients, and a sanity check
against finite differences.

Run:  python demos/01_autodiff_basics.py
"""

import numpy as np

from tlp import ops
from tlp.tensor import Tensor

# Tensors wrap float32 numpy arrays. Setting requires_grad puts them on the
# tape so backward() can reach them.
x = Tensor(np.array([[0.5, -1.0], [2.0, 0.1]], np.float32), requires_grad=True)
w = Tensor(np.array([[1.0], [-0.5]], np.float32), requires_grad=True)

# A tiny computation: matmul, nonlinearity, reduction.
y = ops.matmul(x, w).tanh()
loss = (y.square()).mean()
print("loss:", loss.item())

loss.backward()
print("d loss / d x:\n", x.grad)
print("d loss / d w:\n", w.grad)

# Cross-check one component with central differences.
h = 1e-3
probe = x.data.copy()


def loss_at(arr):
    return float(ops.matmul(Tensor(arr, dtype=np.float64), Tensor(w.data, dtype=np.float64))
                 .tanh().square().mean().data)


probe[0, 0] += h
up = loss_at(probe)
probe[0, 0] -= 2 * h
down = loss_at(probe)
fd = (up - down) / (2 * h)
print(f"finite difference for x[0,0]: {fd:.6f} (analytic {x.grad[0, 0]:.6f})")

# Convolution follows the cross-correlation convention (no kernel flip).
img = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
kernel = Tensor(np.ones((1, 1, 3, 3), np.float32))
print("3x3 box filter of a ramp:\n", ops.conv2d(img, kernel, padding=1).data[0, 0])

"""
Autodiff in five minutes
========================

The training stack runs on a small reverse-mode engine over numpy arrays.
This script builds a toy computation, pulls gradients out, and checks them
against finite differences.
"""

import numpy as np

import maskdenoise.tensor as T
from maskdenoise.tensor import Tensor, gradcheck

# a leaf with requires_grad participates in the graph; plain arrays and
# scalars are treated as constants
w = Tensor(np.array([[0.5, -1.0], [2.0, 0.1]]), requires_grad=True)
x = Tensor(np.array([[1.0, 2.0]]))

y = T.matmul(x, w)          # (1, 2)
z = T.gelu(y)
loss = T.mean(T.mul(z, z))  # scalar

T.backward(loss)
print("loss      =", float(loss.data))
print("dloss/dw  =\n", w.grad)

# the same gradient by central differences
h = 1e-6
fd = np.zeros_like(w.data)
for idx in np.ndindex(*w.data.shape):
    for sign in (+1, -1):
        w2 = w.data.copy()
        w2[idx] += sign * h
        y2 = np.array([[1.0, 2.0]]) @ w2
        from scipy.special import erf
        z2 = y2 * 0.5 * (1.0 + erf(y2 / np.sqrt(2)))
        fd[idx] += sign * float((z2 * z2).mean()) / (2 * h)
print("fd        =\n", fd)
print("max abs difference:", float(np.abs(fd - w.grad).max()))

# the bundled checker does this probing for arbitrary graphs; it reports
# the worst relative error over random parameter entries
a = Tensor(np.random.default_rng(0).normal(size=(4, 6)), requires_grad=True)
g = Tensor(np.ones(6), requires_grad=True)
b = Tensor(np.zeros(6), requires_grad=True)


def build_loss():
    out = T.layer_norm(a, g, b)
    return T.tsum(T.mul(out, out))


err = gradcheck(build_loss, [a, g, b], n_probes=50, rng=np.random.default_rng(1))
print(f"layer_norm gradcheck worst rel err: {err:.2e}")

# gradients flow through the image-sized ops too: pad, window roll, conv
img = Tensor(np.random.default_rng(2).normal(size=(1, 5, 7, 2)), requires_grad=True)
kw = Tensor(np.random.default_rng(3).normal(size=(3, 3, 2, 3)) * 0.1, requires_grad=True)
kb = Tensor(np.zeros(3), requires_grad=True)


def conv_loss():
    padded = T.pad_edge2d(img, 3, 1)       # replicate edges to (8, 8)
    out = T.conv3x3(padded, kw, kb)
    return T.mean(T.mul(out, out))


err = gradcheck(conv_loss, [img, kw, kb], n_probes=50, rng=np.random.default_rng(4))
print(f"pad+conv gradcheck worst rel err:   {err:.2e}")

"""Adam optimizer over named parameter dicts.

State lives in plain numpy arrays keyed by parameter name, so a checkpoint
can serialize the optimizer exactly and a resumed run continues bit for bit.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor


class Adam:
    """Adam with bias correction.

    update: m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
            p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    ``params`` maps name -> Tensor; insertion order fixes the update order.
    All state math runs in the parameter dtype so float32 training is
    reproducible across runs.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float | None = None):
        """Apply one update from the gradients currently on the parameters."""
        lr = self.lr if lr is None else float(lr)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"parameter {k!r} has no gradient")
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter {k!r}")
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / c2) + self.eps
            p.data -= (lr / c1) * (m / denom)

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Optimizer state as flat named arrays, for checkpointing."""
        out = {}
        for k in self.params:
            out[f"opt.m.{k}"] = self.m[k]
            out[f"opt.v.{k}"] = self.v[k]
        out["opt.t"] = np.array([self.t], dtype=np.float32)
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        """Restore state written by :meth:`state_tensors`."""
        for k in self.params:
            m = tensors[f"opt.m.{k}"]
            v = tensors[f"opt.v.{k}"]
            if m.shape != self.m[k].shape or v.shape != self.v[k].shape:
                raise ShapeError(f"optimizer state shape mismatch for {k!r}")
            self.m[k] = m.astype(self.m[k].dtype, copy=True)
            self.v[k] = v.astype(self.v[k].dtype, copy=True)
        self.t = int(tensors["opt.t"][0])


def lr_at(iteration: int, base_lr: float, milestones: tuple[int, int]) -> float:
    """Piecewise-constant decay: halve at the first milestone, halve again at the second."""
    m1, m2 = milestones
    if not 0 <= m1 <= m2:
        raise ValueError("milestones must satisfy 0 <= m1 <= m2")
    if iteration < m1:
        return base_lr
    if iteration < m2:
        return base_lr / 2.0
    return base_lr / 4.0

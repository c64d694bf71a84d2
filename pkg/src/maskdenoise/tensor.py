"""Dense real-valued tensors with reverse-mode automatic differentiation.

A small numpy-backed autodiff engine: every differentiable operation wraps
its numpy result in a :class:`Tensor` that remembers its parents and a
backward closure, and :func:`backward` walks the implicit graph in reverse
topological order, accumulating gradients into the leaves.

Conventions:

- float32 is the working precision for training; float64 is supported by
  every op so gradient checks can run at high accuracy.
- Tensors are treated as immutable values once built. Optimizers update
  leaf ``data`` in place between steps, never mid-graph.
- Non-finite values are an error, not a state: leaf construction and
  ``backward`` reject NaN/Inf. Reductions use numpy's single-call summation,
  so results do not depend on thread count.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_SQRT1_2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327

_FLOAT_TYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf surfaced where only finite values are allowed."""


def _coerce(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.type not in _FLOAT_TYPES:
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff.

    Leaf tensors are built directly (``Tensor(data, requires_grad=True)``);
    interior nodes are built by the ops in this module. Trainable leaves
    allocate a zero ``grad`` buffer up front, so a parameter that never
    appears on a path to the loss simply keeps a zero gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        arr = _coerce(data, dtype)
        if not np.isfinite(arr).all():
            raise NonFiniteError("leaf tensor contains NaN or Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents = ()
        self._bwd = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, bwd) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        if any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = tuple(parents)
            t._bwd = bwd
        else:
            # inference: drop the graph so memory is freed eagerly
            t.requires_grad = False
            t._parents = ()
            t._bwd = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        backward(self)

    # operator sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _accum(t: Tensor, g: np.ndarray):
    # closures never mutate an incoming gradient array, so sharing is safe
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor):
    """Populate gradients of every trainable leaf reachable from ``loss``.

    ``loss`` must be a scalar node. Leaves that are not on any path to the
    loss keep the zero gradient they were created with.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite")

    # iterative DFS post-order so deep graphs cannot hit the recursion limit
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None:
            node._bwd(node.grad)
            # free graph edges and intermediate grads as we go
            node._bwd = None
            node._parents = ()
            node.grad = None


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a, b) -> Tensor:
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor._from_op(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    out = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out, (a, b), bwd)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch semantics: ``(..., m, k) @ (..., k, n)``."""
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dims")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return Tensor._from_op(out, (a, b), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return Tensor._from_op(out, (x,), bwd)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = x.data.transpose(axes)

    def bwd(g):
        _accum(x, g.transpose(inv))

    return Tensor._from_op(out, (x,), bwd)


def roll2d(x: Tensor, shift_y: int, shift_x: int) -> Tensor:
    """Cyclic shift along axes 1 and 2 of a (B, H, W, C) tensor."""
    if x.data.ndim != 4:
        raise ShapeError("roll2d expects a (B, H, W, C) tensor")
    out = np.roll(x.data, (shift_y, shift_x), axis=(1, 2))

    def bwd(g):
        _accum(x, np.roll(g, (-shift_y, -shift_x), axis=(1, 2)))

    return Tensor._from_op(out, (x,), bwd)


def take_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-d table; gradient scatter-adds back into the table."""
    if table.data.ndim != 2:
        raise ShapeError("take_rows expects a 2-d table")
    index = np.asarray(index, dtype=np.intp)
    out = table.data[index]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, index, g)
        _accum(table, gt)

    return Tensor._from_op(out, (table,), bwd)


def crop2d(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left ``height`` x ``width`` region of a (B, H, W, C) tensor."""
    if x.data.ndim != 4:
        raise ShapeError("crop2d expects a (B, H, W, C) tensor")
    out = x.data[:, :height, :width, :]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, :height, :width, :] = g
        _accum(x, gx)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), bwd)


def pad_edge2d(x: Tensor, pad_bottom: int, pad_right: int) -> Tensor:
    """Replicate-pad the bottom and right of a (B, H, W, C) tensor.

    Implemented as a clipped-index gather so the gradient is an exact
    scatter-add back onto the source pixels.
    """
    if x.data.ndim != 4:
        raise ShapeError("pad_edge2d expects a (B, H, W, C) tensor")
    _, h, w, _ = x.data.shape
    iy = np.minimum(np.arange(h + pad_bottom), h - 1)
    ix = np.minimum(np.arange(w + pad_right), w - 1)
    out = x.data[:, iy[:, None], ix[None, :], :]

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), iy[:, None], ix[None, :], slice(None)), g)
        _accum(x, gx)

    return Tensor._from_op(out, (x,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities, normalization, losses


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    if x.data.shape[-1] < 1:
        raise ShapeError("softmax needs a nonempty last axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    out = np.divide(z, z.sum(axis=-1, keepdims=True), out=z)

    def bwd(g):
        gy = g * out
        dot = gy.sum(axis=-1, keepdims=True)
        gy -= dot * out  # (g - dot) * out, without a second full-size temp
        _accum(x, gy)

    return Tensor._from_op(out, (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to zero mean, unit variance, then affine."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    if gamma.data.shape != x.data.shape[-1:] or beta.data.shape != x.data.shape[-1:]:
        raise ShapeError("layer_norm gamma/beta must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = xn * gamma.data + beta.data

    def bwd(g):
        if gamma.requires_grad:
            _accum(gamma, _unbroadcast(g * xn, gamma.data.shape))
        if beta.requires_grad:
            _accum(beta, _unbroadcast(g, beta.data.shape))
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (
                gh
                - gh.mean(axis=-1, keepdims=True)
                - xn * (gh * xn).mean(axis=-1, keepdims=True)
            )
            _accum(x, gx)

    return Tensor._from_op(out, (x, gamma, beta), bwd)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: ``0.5 x (1 + erf(x / sqrt(2)))``."""
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT1_2))
    out = x.data * cdf

    def bwd(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        _accum(x, g * (cdf + x.data * pdf))

    return Tensor._from_op(out.astype(x.data.dtype, copy=False), (x,), bwd)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute difference over all elements.

    Subgradient at ties is 0, elsewhere ``sign(pred - target) / N``.
    """
    target = _as_tensor(target, like=pred)
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"l1_loss shapes disagree: {pred.data.shape} vs {target.data.shape}"
        )
    diff = pred.data - target.data
    out = np.abs(diff).mean(dtype=pred.data.dtype)

    def bwd(g):
        s = np.sign(diff) * (g / diff.size)
        if pred.requires_grad:
            _accum(pred, s)
        if target.requires_grad:
            _accum(target, -s)

    return Tensor._from_op(np.asarray(out), (pred, target), bwd)


def mean(x: Tensor) -> Tensor:
    """Mean over all elements, as a scalar node."""
    out = np.asarray(x.data.mean(dtype=x.data.dtype))

    def bwd(g):
        _accum(x, np.broadcast_to(g / x.data.size, x.data.shape).astype(x.data.dtype))

    return Tensor._from_op(out, (x,), bwd)


def tsum(x: Tensor) -> Tensor:
    """Sum over all elements, as a scalar node."""
    out = np.asarray(x.data.sum(dtype=x.data.dtype))

    def bwd(g):
        _accum(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype))

    return Tensor._from_op(out, (x,), bwd)


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 convolution on (B, H, W, Cin), zero-padded to keep H and W.

    Weights are laid out (3, 3, Cin, Cout); the op lowers to one matmul on
    gathered patches, and the input gradient is the matching scatter-add.
    """
    if x.data.ndim != 4:
        raise ShapeError("conv3x3 expects a (B, H, W, C) input")
    if w.data.shape[:2] != (3, 3) or w.data.shape[2] != x.data.shape[3]:
        raise ShapeError(f"conv3x3 weight shape {w.data.shape} does not fit input {x.data.shape}")
    bs, h, wd, cin = x.data.shape
    cout = w.data.shape[3]
    if b.data.shape != (cout,):
        raise ShapeError("conv3x3 bias must be (Cout,)")

    xp = np.zeros((bs, h + 2, wd + 2, cin), dtype=x.data.dtype)
    xp[:, 1:-1, 1:-1, :] = x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    # (B, H, W, Cin, 3, 3) -> (B*H*W, 3*3*Cin) in (ky, kx, cin) order
    patches = win.transpose(0, 1, 2, 4, 5, 3).reshape(bs * h * wd, 9 * cin)
    w2 = w.data.reshape(9 * cin, cout)
    out = (patches @ w2 + b.data).reshape(bs, h, wd, cout)

    def bwd(g):
        g2 = g.reshape(bs * h * wd, cout)
        if w.requires_grad:
            _accum(w, (patches.T @ g2).reshape(w.data.shape))
        if b.requires_grad:
            _accum(b, g2.sum(axis=0))
        if x.requires_grad:
            gp = (g2 @ w2.T).reshape(bs, h, wd, 3, 3, cin)
            gxp = np.zeros_like(xp)
            for ky in range(3):
                for kx in range(3):
                    gxp[:, ky : ky + h, kx : kx + wd, :] += gp[:, :, :, ky, kx, :]
            _accum(x, gxp[:, 1:-1, 1:-1, :])

    return Tensor._from_op(out, (x, w, b), bwd)


# ---------------------------------------------------------------------------
# verification helper


def gradcheck(build_loss, params, n_probes: int = 100, h: float = 1e-5,
              atol: float = 1e-8, rng=None) -> float:
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss from the current values of
    ``params`` on every call (and must be deterministic across calls). The
    numeric side perturbs one parameter element at a time, so it is
    independent of the backward implementation it checks.

    Returns the largest relative discrepancy over ``n_probes`` randomly
    probed elements; discrepancies below ``atol`` in absolute terms count
    as zero.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(build_loss())
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    n = min(n_probes, total)
    flat_picks = rng.choice(total, size=n, replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    for pick in flat_picks:
        pi = int(np.searchsorted(bounds, pick, side="right"))
        offset = int(pick - (bounds[pi - 1] if pi > 0 else 0))
        p = params[pi]
        old = p.data.flat[offset]
        p.data.flat[offset] = old + h
        up = float(build_loss().data)
        p.data.flat[offset] = old - h
        down = float(build_loss().data)
        p.data.flat[offset] = old
        numeric = (up - down) / (2.0 * h)
        a = float(analytic[pi].flat[offset])
        err = abs(a - numeric)
        if err > atol:
            worst = max(worst, err / max(abs(a), abs(numeric)))
    return worst

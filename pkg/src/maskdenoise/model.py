"""Window-attention denoiser with optional token masking.

The network: a 1x1 convolution embeds each pixel into C channels (pixels
never mix at this stage), a stack of shifted-window attention blocks
transforms the token map, and a 3x3 convolution head reconstructs RGB.
There is no global input-to-output skip: masked or noisy pixels must be
synthesized from context, not copied through.

Masking comes in two flavors, both replacing whole tokens with a mask
token (the zero vector by default):

- the input mask hits the token map once per forward pass, at a per-sample
  ratio drawn from ``policy.input_ratio_range``;
- the attention mask hits the rows entering each attention layer's Q/K/V
  projections, independently per layer, at ``policy.attention_ratio``.

Inference mode turns both off and is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

SHIFT_INVALID_BIAS = -100.0  # large finite penalty; keeps logits NaN-safe


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    channels: int = 32
    window: int = 8
    heads: int = 4
    depth: int = 4
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.channels <= 0 or self.window <= 0 or self.heads <= 0 or self.depth <= 0:
            raise ValueError("channels, window, heads, depth must be positive")
        if self.channels % self.heads:
            raise ValueError("channels must be divisible by heads")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    def to_meta(self, learnable_tokens: bool) -> np.ndarray:
        return np.array(
            [self.channels, self.window, self.heads, self.depth,
             self.mlp_ratio, float(learnable_tokens)],
            dtype=np.float32,
        )

    @classmethod
    def from_meta(cls, meta: np.ndarray) -> tuple["ModelConfig", bool]:
        c, m, h, d, ratio, learnable = (float(v) for v in np.asarray(meta).ravel())
        cfg = cls(channels=int(c), window=int(m), heads=int(h), depth=int(d),
                  mlp_ratio=ratio)
        return cfg, bool(learnable)


@dataclass(frozen=True)
class MaskPolicy:
    """What masking to apply during a forward pass."""

    input_ratio_range: tuple[float, float] = (0.75, 0.85)
    attention_ratio: float = 0.75
    token_mode: str = "fixed-zero"
    mode: str = "train"

    def __post_init__(self):
        lo, hi = self.input_ratio_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("input_ratio_range must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.attention_ratio <= 1.0:
            raise ValueError("attention_ratio must lie in [0, 1]")
        if self.token_mode not in ("fixed-zero", "learnable"):
            raise ValueError(f"unknown token_mode {self.token_mode!r}")
        if self.mode not in ("train", "inference"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def masking_active(self) -> bool:
        return self.mode == "train"


INFERENCE = MaskPolicy(mode="inference")
NO_MASKS = MaskPolicy(input_ratio_range=(0.0, 0.0), attention_ratio=0.0)


@dataclass
class AttentionParams:
    """Everything one window-attention layer needs."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    bias_table: Tensor  # ((2M-1)^2, heads)
    rel_index: np.ndarray  # (M^2, M^2) into the table
    heads: int
    attention_token: Tensor  # (C,)
    shifted: bool = False


# ---------------------------------------------------------------------------
# building blocks


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02,
                 dtype=np.float32) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def relative_position_index(m: int) -> np.ndarray:
    """Map each (query, key) pair in an MxM window to a bias-table row.

    Relative offsets (dy, dx) each span [-(M-1), M-1], giving (2M-1)^2
    distinct rows.
    """
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]
    rel = rel.transpose(1, 2, 0).copy()
    rel[:, :, 0] += m - 1
    rel[:, :, 1] += m - 1
    rel[:, :, 0] *= 2 * m - 1
    return rel.sum(-1)


def shift_validity_bias(hp: int, wp: int, m: int, shift: int) -> np.ndarray:
    """Per-window additive bias forbidding attention across the cyclic seam.

    Region labels are painted on the unshifted canvas; windows of the label
    map then reproduce exactly the wrap structure of the shifted feature
    map, so pairs with differing labels get a large negative bias.
    """
    canvas = np.zeros((hp, wp))
    spans = (slice(0, -m), slice(-m, -shift), slice(-shift, None))
    label = 0
    for hs in spans:
        for ws in spans:
            canvas[hs, ws] = label
            label += 1
    wins = (
        canvas.reshape(hp // m, m, wp // m, m)
        .transpose(0, 2, 1, 3)
        .reshape(-1, m * m)
    )
    diff = wins[:, None, :] - wins[:, :, None]
    return np.where(diff != 0, SHIFT_INVALID_BIAS, 0.0)


def window_partition(x: Tensor, m: int) -> Tensor:
    """(B, H, W, C) -> (B * HW/M^2, M^2, C) of non-overlapping MxM windows."""
    b, h, w, c = x.shape
    if h % m or w % m:
        raise ShapeError(f"window size {m} does not divide spatial dims ({h}, {w})")
    t = T.reshape(x, (b, h // m, m, w // m, m, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (b * (h // m) * (w // m), m * m, c))


def window_merge(wins: Tensor, m: int, batch: int, height: int, width: int) -> Tensor:
    """Inverse of :func:`window_partition` for the given target geometry."""
    expected = batch * (height // m) * (width // m)
    if height % m or width % m or wins.shape[0] != expected:
        raise ShapeError(
            f"cannot merge {wins.shape[0]} windows into ({batch}, {height}, {width})"
        )
    c = wins.shape[-1]
    t = T.reshape(wins, (batch, height // m, width // m, m, m, c))
    t = T.transpose(t, (0, 1, 3, 2, 4, 5))
    return T.reshape(t, (batch, height, width, c))


def replace_tokens(tokens: Tensor, mask: np.ndarray, token: Tensor) -> Tensor:
    """Substitute ``token`` wherever ``mask`` is set; differentiable in both."""
    keep = Tensor((~mask).astype(tokens.dtype)[..., None])
    drop = Tensor(mask.astype(tokens.dtype)[..., None])
    return tokens * keep + token * drop


def draw_input_ratios(policy: MaskPolicy, batch: int,
                      rng: np.random.Generator) -> np.ndarray:
    """One input-mask ratio per sample, uniform over the policy's range."""
    lo, hi = policy.input_ratio_range
    return rng.uniform(lo, hi, size=batch)


def apply_input_mask(tokens: Tensor, ratio, token: Tensor,
                     rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
    """Independently replace each spatial token with probability ``ratio``.

    ``ratio`` may be a scalar or one value per batch sample. Returns the
    masked tokens and the boolean map of replaced positions.
    """
    b, h, w, _ = tokens.shape
    ratio = np.broadcast_to(np.asarray(ratio, dtype=np.float64), (b,))
    if ratio.min() < 0 or ratio.max() > 1:
        raise ValueError("mask ratio must lie in [0, 1]")
    if ratio.max() == 0:
        return tokens, np.zeros((b, h, w), dtype=bool)
    mask = rng.random((b, h, w)) < ratio[:, None, None]
    return replace_tokens(tokens, mask, token), mask


def window_attention(x: Tensor, params: AttentionParams, policy: MaskPolicy,
                     rng: np.random.Generator | None = None,
                     validity_bias: np.ndarray | None = None) -> Tensor:
    """Multi-head self-attention within each window of an (nW, M^2, C) stack.

    In train mode each token row is first replaced by the attention mask
    token with probability ``policy.attention_ratio``; queries, keys and
    values are all computed from the substituted rows.
    """
    nw, n, c = x.shape
    heads = params.heads
    d = c // heads

    if policy.masking_active and policy.attention_ratio > 0:
        if rng is None:
            raise ValueError("train-mode attention needs an rng")
        mask = rng.random((nw, n)) < policy.attention_ratio
        x = replace_tokens(x, mask, params.attention_token)

    flat = T.reshape(x, (nw * n, c))
    q = T.matmul(flat, params.wq) + params.bq
    k = T.matmul(flat, params.wk) + params.bk
    v = T.matmul(flat, params.wv) + params.bv

    def split(t):  # (nW*N, C) -> (nW, heads, N, D)
        return T.transpose(T.reshape(t, (nw, n, heads, d)), (0, 2, 1, 3))

    q, k, v = split(q), split(k), split(v)
    scores = T.matmul(q * (1.0 / np.sqrt(d)), T.transpose(k, (0, 1, 3, 2)))

    bias = T.take_rows(params.bias_table, params.rel_index.ravel())
    bias = T.transpose(T.reshape(bias, (n, n, heads)), (2, 0, 1))
    scores = scores + bias  # broadcast over windows

    if validity_bias is not None:
        vb = np.asarray(validity_bias, dtype=x.dtype)
        if vb.shape[0] != nw:
            if nw % vb.shape[0]:
                raise ShapeError("validity bias does not tile the window stack")
            vb = np.tile(vb, (nw // vb.shape[0], 1, 1))
        scores = scores + Tensor(vb[:, None, :, :])

    attn = T.softmax_lastdim(scores)
    out = T.matmul(attn, v)  # (nW, heads, N, D)
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (nw * n, c))
    out = T.matmul(out, params.wo) + params.bo
    return T.reshape(out, (nw, n, c))


# ---------------------------------------------------------------------------
# the full model


class MaskedDenoiser:
    """Parameter container plus the forward pass."""

    def __init__(self, cfg: ModelConfig, learnable_tokens: bool = False,
                 seed: int = 0, dtype=np.float32, params: dict | None = None):
        self.cfg = cfg
        self.learnable_tokens = learnable_tokens
        self.params: dict[str, Tensor] = {}
        if params is not None:
            self.params = dict(params)
        else:
            self._init_params(np.random.default_rng([int(seed), 0]), dtype)
        self._zero_token = Tensor(np.zeros(cfg.channels, dtype=dtype))
        self._rel_index = relative_position_index(cfg.window)

    def _init_params(self, rng, dtype):
        cfg = self.cfg
        c, hidden = cfg.channels, int(round(cfg.mlp_ratio * cfg.channels))
        table_rows = (2 * cfg.window - 1) ** 2

        def p(name, arr):
            self.params[name] = Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

        p("embed.w", trunc_normal(rng, (3, c), dtype=dtype))
        p("embed.b", np.zeros(c))
        for i in range(cfg.depth):
            pre = f"blocks.{i}"
            p(f"{pre}.ln1.g", np.ones(c))
            p(f"{pre}.ln1.b", np.zeros(c))
            for nm in ("wq", "wk", "wv", "wo"):
                p(f"{pre}.attn.{nm}", trunc_normal(rng, (c, c), dtype=dtype))
            for nm in ("bq", "bk", "bv", "bo"):
                p(f"{pre}.attn.{nm}", np.zeros(c))
            p(f"{pre}.attn.bias_table", np.zeros((table_rows, cfg.heads)))
            p(f"{pre}.ln2.g", np.ones(c))
            p(f"{pre}.ln2.b", np.zeros(c))
            p(f"{pre}.mlp.w1", trunc_normal(rng, (c, hidden), dtype=dtype))
            p(f"{pre}.mlp.b1", np.zeros(hidden))
            p(f"{pre}.mlp.w2", trunc_normal(rng, (hidden, c), dtype=dtype))
            p(f"{pre}.mlp.b2", np.zeros(c))
        p("head.w", trunc_normal(rng, (3, 3, c, 3), dtype=dtype))
        p("head.b", np.zeros(3))
        if self.learnable_tokens:
            p("mask.input_token", np.zeros(c))
            p("mask.attention_token", np.zeros(c))

    # -- tokens ------------------------------------------------------------
    def input_token(self) -> Tensor:
        if self.learnable_tokens:
            return self.params["mask.input_token"]
        return self._zero_token

    def attention_token(self) -> Tensor:
        if self.learnable_tokens:
            return self.params["mask.attention_token"]
        return self._zero_token

    def attn_params(self, i: int, shifted: bool) -> AttentionParams:
        g = self.params
        pre = f"blocks.{i}.attn"
        return AttentionParams(
            wq=g[f"{pre}.wq"], bq=g[f"{pre}.bq"],
            wk=g[f"{pre}.wk"], bk=g[f"{pre}.bk"],
            wv=g[f"{pre}.wv"], bv=g[f"{pre}.bv"],
            wo=g[f"{pre}.wo"], bo=g[f"{pre}.bo"],
            bias_table=g[f"{pre}.bias_table"],
            rel_index=self._rel_index,
            heads=self.cfg.heads,
            attention_token=self.attention_token(),
            shifted=shifted,
        )

    # -- forward -----------------------------------------------------------
    def embed(self, img: Tensor) -> Tensor:
        """Project (B, H, W, 3) pixels to C-channel tokens, one pixel at a time.

        A 1x1 convolution: no spatial mixing, so noise in one pixel cannot
        leak into its neighbors' tokens.
        """
        b, h, w, _ = img.shape
        flat = T.reshape(img, (b * h * w, 3))
        x = T.matmul(flat, self.params["embed.w"]) + self.params["embed.b"]
        return T.reshape(x, (b, h, w, self.cfg.channels))

    def forward(self, img, policy: MaskPolicy = INFERENCE,
                rng: np.random.Generator | None = None,
                collect_features: bool = False):
        """Run the network.

        ``img`` is (B, H, W, 3) or (H, W, 3), values expected in [0, 1].
        Returns the reconstruction with the input's shape; with
        ``collect_features`` also a list of per-layer token maps (one after
        every attention residual and every MLP residual, as numpy arrays).
        """
        cfg = self.cfg
        x_in = img if isinstance(img, Tensor) else Tensor(img)
        squeeze = x_in.data.ndim == 3
        if squeeze:
            x_in = T.reshape(x_in, (1,) + x_in.shape)
        if x_in.data.ndim != 4 or x_in.shape[3] != 3:
            raise ShapeError(f"expected (B, H, W, 3) image, got {x_in.shape}")
        b, h, w, _ = x_in.shape

        if policy.masking_active and rng is None:
            raise ValueError("train-mode forward needs an rng")

        x = self.embed(x_in)

        if policy.masking_active:
            ratios = draw_input_ratios(policy, b, rng)
            x, _ = apply_input_mask(x, ratios, self.input_token(), rng)

        m = cfg.window
        pad_b = (-h) % m
        pad_r = (-w) % m
        if pad_b or pad_r:
            x = T.pad_edge2d(x, pad_b, pad_r)
        hp, wp = h + pad_b, w + pad_r

        shift = m // 2
        valid = shift_validity_bias(hp, wp, m, shift) if cfg.depth > 1 and shift > 0 else None
        feats: list[np.ndarray] = []

        for i in range(cfg.depth):
            shifted = bool(i % 2) and shift > 0
            y = T.layer_norm(x, self.params[f"blocks.{i}.ln1.g"],
                             self.params[f"blocks.{i}.ln1.b"])
            if shifted:
                y = T.roll2d(y, -shift, -shift)
            wins = window_partition(y, m)
            wins = window_attention(wins, self.attn_params(i, shifted), policy, rng,
                                    validity_bias=valid if shifted else None)
            y = window_merge(wins, m, b, hp, wp)
            if shifted:
                y = T.roll2d(y, shift, shift)
            x = x + y
            if collect_features:
                feats.append(x.data.copy())

            y = T.layer_norm(x, self.params[f"blocks.{i}.ln2.g"],
                             self.params[f"blocks.{i}.ln2.b"])
            flat = T.reshape(y, (b * hp * wp, cfg.channels))
            hid = T.gelu(T.matmul(flat, self.params[f"blocks.{i}.mlp.w1"])
                         + self.params[f"blocks.{i}.mlp.b1"])
            out = T.matmul(hid, self.params[f"blocks.{i}.mlp.w2"]) \
                + self.params[f"blocks.{i}.mlp.b2"]
            x = x + T.reshape(out, (b, hp, wp, cfg.channels))
            if collect_features:
                feats.append(x.data.copy())

        x = T.conv3x3(x, self.params["head.w"], self.params["head.b"])
        if pad_b or pad_r:
            x = T.crop2d(x, h, w)
        if squeeze:
            x = T.reshape(x, x.shape[1:])
        return (x, feats) if collect_features else x

    # -- persistence ---------------------------------------------------------
    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.params.items()}
        out["meta.model"] = self.cfg.to_meta(self.learnable_tokens)
        return out

    @classmethod
    def from_state(cls, tensors: dict[str, np.ndarray],
                   dtype=np.float32) -> "MaskedDenoiser":
        if "meta.model" not in tensors:
            raise KeyError("state is missing the meta.model record")
        cfg, learnable = ModelConfig.from_meta(tensors["meta.model"])
        model = cls(cfg, learnable_tokens=learnable, dtype=dtype, params={})
        probe = cls(cfg, learnable_tokens=learnable, seed=0, dtype=dtype)
        for name, ref in probe.params.items():
            if name not in tensors:
                raise KeyError(f"state is missing parameter {name!r}")
            arr = np.asarray(tensors[name], dtype=dtype)
            if arr.shape != ref.data.shape:
                raise ShapeError(f"parameter {name!r} has shape {arr.shape}, "
                                 f"expected {ref.data.shape}")
            model.params[name] = Tensor(arr.copy(), requires_grad=True)
        return model


def denoise_image(model: MaskedDenoiser, img: np.ndarray) -> np.ndarray:
    """Inference-mode restoration, clipped back to the valid image range."""
    out = model.forward(img, INFERENCE)
    return np.clip(out.data, 0.0, 1.0)

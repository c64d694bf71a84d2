"""
Masking mechanics
=================

The trainer hides most of the image from the network. This script walks
through the two mechanisms on tiny arrays so every moving part is visible:

  1. input masking: whole embedded tokens are replaced by a mask token at a
     per-sample ratio drawn from a range (default 0.75-0.85);
  2. attention masking: inside every attention layer, rows are replaced
     again at a fixed ratio (default 0.75) before Q/K/V are computed.

Both default to a zero mask token; with both ratios at zero the train-mode
forward is bit-identical to plain inference.
"""

import numpy as np

from maskdenoise.model import (
    INFERENCE,
    MaskedDenoiser,
    MaskPolicy,
    ModelConfig,
    NO_MASKS,
    apply_input_mask,
    draw_input_ratios,
    shift_validity_bias,
    window_merge,
    window_partition,
)
from maskdenoise.tensor import Tensor

rng = np.random.default_rng(0)

# --- per-sample masking ratios ---------------------------------------------
policy = MaskPolicy()  # input 0.75-0.85, attention 0.75
ratios = draw_input_ratios(policy, 6, rng)
print("drawn input-mask ratios:", np.round(ratios, 3))

# --- input masking on an embedded token map --------------------------------
tokens = Tensor(np.ones((1, 20, 20, 8), dtype=np.float32))
mask_token = Tensor(np.zeros(8, dtype=np.float32))
masked, mask_map = apply_input_mask(tokens, 0.8, mask_token, rng)
print(f"masked {int(mask_map.sum())} of {mask_map.size} tokens at ratio 0.8")
print("surviving-token energy fraction:",
      round(float(masked.data.mean()), 3), "(should be near 0.2)")

# --- window partition round trip --------------------------------------------
x = Tensor(np.arange(1 * 16 * 16 * 4, dtype=np.float32).reshape(1, 16, 16, 4))
wins = window_partition(x, 8)
print("windows:", wins.shape, "-> merged back equal:",
      bool(np.array_equal(window_merge(wins, 8, 1, 16, 16).data, x.data)))

# --- what the shift validity bias blocks ------------------------------------
# after a cyclic shift, tokens wrapped around the border land in windows
# with unrelated neighbors; a -100 bias keeps attention away from them.
bias = shift_validity_bias(16, 16, 8, 4)
corner = bias[-1]  # bottom-right window mixes four wrapped quadrants
blocked = corner < 0
print(f"corner window: {int(blocked.sum())} of {blocked.size} "
      "query-key pairs blocked")
row = np.where(blocked[0], "x", ".").reshape(8, 8)
print("first query's allowed keys (8x8 window, x = blocked):")
print("\n".join(" ".join(r) for r in row))

# --- train mode without masks is exactly inference --------------------------
model = MaskedDenoiser(ModelConfig(channels=8, window=8, heads=2, depth=2), seed=1)
img = np.random.default_rng(2).random((1, 16, 16, 3)).astype(np.float32)
plain = model.forward(Tensor(img)).data
nomask = model.forward(Tensor(img), NO_MASKS, rng=np.random.default_rng(3)).data
print("zero-ratio train pass bit-equal to inference:",
      bool(np.array_equal(plain, nomask)))

# --- and with masks on, every pass sees a different image -------------------
a = model.forward(Tensor(img), policy, rng=np.random.default_rng(4)).data
b = model.forward(Tensor(img), policy, rng=np.random.default_rng(5)).data
print("two masked passes differ:", not np.array_equal(a, b),
      f"(mean abs gap {np.abs(a - b).mean():.4f})")
print("inference is rng-free and repeatable:",
      bool(np.array_equal(plain, model.forward(Tensor(img), INFERENCE).data)))

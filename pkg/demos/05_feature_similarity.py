"""
Comparing representations with linear CKA
=========================================

Centered kernel alignment scores how similar two sets of features are,
ignoring rotations and uniform scaling. Here we train a small masked model
briefly, then compare its per-layer features against its own untrained
initialization on the same probe image: early layers barely move, later
layers drift as training progresses.
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import zoom

from maskdenoise.cka import cka_matrix, feature_stats
from maskdenoise.imageio import save_image
from maskdenoise.model import MaskedDenoiser, MaskPolicy, ModelConfig
from maskdenoise.noise import NoiseSpec
from maskdenoise.tensor import Tensor
from maskdenoise.training import TrainConfig, train
from maskdenoise.checkpoint import load as load_checkpoint

OUT = Path(__file__).parent / "out" / "cka"
DATA = OUT / "data"
DATA.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(11)
for i in range(8):
    img = np.clip(zoom(rng.random((6, 6, 3)), (16, 16, 1), order=3), 0, 1)
    save_image(img, DATA / f"img_{i}.png")

model_cfg = ModelConfig(channels=16, window=8, heads=2, depth=2)
cfg = TrainConfig(
    dataset_dir=str(DATA),
    out_dir=str(OUT / "run"),
    crop=32,
    batch=4,
    total_iters=300,
    milestones=(150, 225),
    lr0=5e-4,
    noise=NoiseSpec("gaussian", 25.0),
    policy=MaskPolicy(),  # masked training, default ratios
    model=model_cfg,
    seed=21,
    checkpoint_every=300,
    log_every=100,
)
print("training a small masked model...")
final = train(cfg)

trained = MaskedDenoiser.from_state(load_checkpoint(final))
untrained = MaskedDenoiser(model_cfg, seed=cfg.seed)  # same init the run started from

# one probe image, identical for both models; features are the token maps
# after every attention residual and every MLP residual
probe = np.clip(zoom(np.random.default_rng(5).random((6, 6, 3)), (16, 16, 1), order=3), 0, 1)
_, feats_t = trained.forward(Tensor(probe.astype(np.float32)), collect_features=True)
_, feats_u = untrained.forward(Tensor(probe.astype(np.float32)), collect_features=True)

# sample the same 512 spatial positions from every layer
h, w = probe.shape[:2]
pos = np.random.default_rng(42).choice(h * w, size=512, replace=False)
flat_t = [f.reshape(-1, f.shape[-1])[pos] for f in feats_t]
flat_u = [f.reshape(-1, f.shape[-1])[pos] for f in feats_u]

m = cka_matrix(flat_t, flat_u)
names = [f"{kind}{i}" for i in range(model_cfg.depth) for kind in ("attn", "mlp")]
print("\nCKA (rows: trained layers, cols: untrained layers)")
print("        " + "  ".join(f"{n:>6}" for n in names))
for name, row in zip(names, m):
    print(f"{name:>6}  " + "  ".join(f"{v:6.3f}" for v in row))

diag = np.diag(m)
print("\nlayer-by-layer agreement with the initialization:")
for name, v in zip(names, diag):
    bar = "#" * int(round(v * 40))
    print(f"  {name:>6} {v:5.3f} {bar}")
print("(1.0 = unchanged by training; lower = the layer learned something)")

stats = feature_stats(flat_t[-1])
print(f"\nlast-layer feature stats: overall mean {stats['overall_mean']:.4f}, "
      f"per-dim std in [{stats['std'].min():.3f}, {stats['std'].max():.3f}]")

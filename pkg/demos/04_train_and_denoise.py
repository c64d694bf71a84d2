"""
Train a small denoiser end to end
=================================

Builds a toy dataset on the fly, trains a compact model for a few hundred
iterations (about a minute of CPU), then denoises a held-out image and
reports PSNR/SSIM. Everything lands under demos/out/walkthrough/: the
dataset, the run manifest, the checkpoints, and the before/after images.

This run disables masking so the visible denoising win arrives quickly;
see 03_masking_mechanics.py and 05_feature_similarity.py for the masked
variants.
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import zoom

from maskdenoise.checkpoint import load as load_checkpoint
from maskdenoise.imageio import save_image
from maskdenoise.metrics import compare
from maskdenoise.model import MaskedDenoiser, MaskPolicy, ModelConfig, denoise_image
from maskdenoise.noise import NoiseSpec
from maskdenoise.training import TrainConfig, read_manifest, train

OUT = Path(__file__).parent / "out" / "walkthrough"
DATA = OUT / "data"
DATA.mkdir(parents=True, exist_ok=True)


def toy_image(seed, size=96):
    rng = np.random.default_rng(seed)
    img = zoom(rng.random((6, 6, 3)), (size / 6, size / 6, 1), order=3)
    return np.clip(img, 0, 1)


for i in range(8):
    save_image(toy_image(300 + i), DATA / f"img_{i}.png")

noise = NoiseSpec("gaussian", 25.0)
cfg = TrainConfig(
    dataset_dir=str(DATA),
    out_dir=str(OUT / "run"),
    crop=32,
    batch=4,
    total_iters=800,
    milestones=(400, 600),
    lr0=5e-4,  # small model, short run: a hotter schedule than the default
    noise=noise,
    policy=MaskPolicy(input_ratio_range=(0.0, 0.0), attention_ratio=0.0),
    model=ModelConfig(channels=16, window=8, heads=2, depth=2),
    seed=3,
    checkpoint_every=400,
    log_every=100,
)

print(f"training {cfg.total_iters} iters on {len(list(DATA.glob('*.png')))} images...")
final = train(cfg)
print("final checkpoint:", final)

# the manifest records the config and the loss trajectory
events = read_manifest(Path(cfg.out_dir) / "manifest.jsonl")
logs = [e for e in events if e["event"] == "log"]
print("loss trajectory:", " -> ".join(f"{e['loss']:.3f}" for e in logs[::2]))

# load the checkpoint back and denoise an image the model never saw
model = MaskedDenoiser.from_state(load_checkpoint(final))
clean = toy_image(999)
noisy = noise.apply(clean, np.random.default_rng(17))
restored = denoise_image(model, noisy)

for name, img in (("clean", clean), ("noisy", noisy), ("restored", restored)):
    save_image(img, OUT / f"{name}.png")

before = compare(noisy, clean)
after = compare(restored, clean)
print(f"noisy    vs clean: {before.psnr_db:6.2f} dB  ssim {before.ssim:.4f}")
print(f"restored vs clean: {after.psnr_db:6.2f} dB  ssim {after.ssim:.4f}")

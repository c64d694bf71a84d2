"""Training loop: data sampling, L1 supervision, schedule, checkpoints, manifest.

Reproducibility contract: every run is a pure function of (config, seed).
Per-iteration randomness comes from generators seeded with
``[seed, stream, iteration]``, so iteration k depends only on the weights,
the optimizer state, and k itself. That makes resume-from-checkpoint
trivially equivalent to an uninterrupted run, and two runs with the same
seed produce bit-identical checkpoint files.

Stream ids: 0 = weight init, 1 = batch sampling and noise, 2 = mask draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import __version__
from .model import INFERENCE, MaskedDenoiser, MaskPolicy, ModelConfig
from .noise import NoiseSpec
from .optim import Adam, lr_at
from .tensor import Tensor, backward, l1_loss

RNG_ALGORITHM = "numpy-pcg64"

_STREAM_INIT = 0
_STREAM_DATA = 1
_STREAM_MASK = 2


class DatasetError(ValueError):
    """Dataset directory unusable for the requested configuration."""


class ConfigError(ValueError):
    """Config file contents violate the schema."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs. Defaults are desk-scale."""

    dataset_dir: str
    out_dir: str
    crop: int = 64
    batch: int = 8
    total_iters: int = 2000
    milestones: tuple[int, int] = (1000, 1500)
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    noise: NoiseSpec | None = NoiseSpec("gaussian", 15.0)
    policy: MaskPolicy = field(default_factory=MaskPolicy)
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 100
    init_from: str | None = None

    def __post_init__(self):
        m1, m2 = self.milestones
        if not m1 < m2 < self.total_iters:
            raise ConfigError("milestones must be strictly increasing and < total_iters")
        if self.batch < 1 or self.crop < 1 or self.total_iters < 1:
            raise ConfigError("batch, crop, total_iters must be >= 1")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("checkpoint_every and log_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dataset_dir": self.dataset_dir,
            "out_dir": self.out_dir,
            "crop": self.crop,
            "batch": self.batch,
            "total_iters": self.total_iters,
            "milestones": list(self.milestones),
            "lr0": self.lr0,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "noise": None if self.noise is None else self.noise.to_dict(),
            "policy": {
                "input_ratio_range": list(self.policy.input_ratio_range),
                "attention_ratio": self.policy.attention_ratio,
                "token_mode": self.policy.token_mode,
                "mode": self.policy.mode,
            },
            "model": {
                "channels": self.model.channels,
                "window": self.model.window,
                "heads": self.model.heads,
                "depth": self.model.depth,
                "mlp_ratio": self.model.mlp_ratio,
            },
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "log_every": self.log_every,
            "init_from": self.init_from,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("dataset_dir", "out_dir"):
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}")
        if "milestones" in d:
            ms = d["milestones"]
            if len(ms) != 2:
                raise ConfigError("config key 'milestones' needs exactly two values")
            d["milestones"] = (int(ms[0]), int(ms[1]))
        if d.get("noise") is not None and not isinstance(d["noise"], NoiseSpec):
            try:
                d["noise"] = NoiseSpec.from_dict(d["noise"])
            except (ValueError, KeyError, TypeError) as e:
                raise ConfigError(f"config section 'noise': {e}") from e
        if "policy" in d and not isinstance(d["policy"], MaskPolicy):
            p = dict(d["policy"])
            unknown = set(p) - {"input_ratio_range", "attention_ratio", "token_mode", "mode"}
            if unknown:
                raise ConfigError(f"config section 'policy': unknown keys {sorted(unknown)}")
            if "input_ratio_range" in p:
                p["input_ratio_range"] = tuple(p["input_ratio_range"])
            try:
                d["policy"] = MaskPolicy(**p)
            except ValueError as e:
                raise ConfigError(f"config section 'policy': {e}") from e
        if "model" in d and not isinstance(d["model"], ModelConfig):
            m = dict(d["model"])
            unknown = set(m) - {"channels", "window", "heads", "depth", "mlp_ratio"}
            if unknown:
                raise ConfigError(f"config section 'model': unknown keys {sorted(unknown)}")
            try:
                d["model"] = ModelConfig(**m)
            except ValueError as e:
                raise ConfigError(f"config section 'model': {e}") from e
        return cls(**d)


def load_train_config(path: str | Path) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return TrainConfig.from_dict(raw)


class ManifestWriter:
    """Append-only JSON-lines run log."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def write(self, event: str, **fields):
        record = {"event": event, **fields}
        with self.path.open("a") as fh:
            fh.write(json.dumps(record) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    return [json.loads(line) for line in lines if line.strip()]


# ---------------------------------------------------------------------------
# data


def load_dataset(dataset_dir: str | Path, crop: int) -> list[np.ndarray]:
    """Load every PNG under ``dataset_dir`` as float32; all must fit the crop."""
    from .imageio import load_image  # deferred: keeps import costs local

    root = Path(dataset_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    paths = sorted(root.glob("*.png"))
    if not paths:
        raise DatasetError(f"no .png images in {root}")
    images = []
    for p in paths:
        img = load_image(p).astype(np.float32)
        if img.shape[0] < crop or img.shape[1] < crop:
            raise DatasetError(
                f"image {p} is {img.shape[0]}x{img.shape[1]}, smaller than crop {crop}"
            )
        images.append(img)
    return images


def sample_batch(images: list[np.ndarray], crop: int, batch: int,
                 noise: NoiseSpec | None,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random crops plus their degraded copies, one noise draw per sample."""
    clean = np.empty((batch, crop, crop, 3), dtype=np.float32)
    noisy = np.empty_like(clean)
    for i in range(batch):
        img = images[int(rng.integers(len(images)))]
        y = int(rng.integers(img.shape[0] - crop + 1))
        x = int(rng.integers(img.shape[1] - crop + 1))
        patch = img[y : y + crop, x : x + crop]
        clean[i] = patch
        noisy[i] = patch if noise is None else noise.apply(patch, rng)
    return clean, noisy


# ---------------------------------------------------------------------------
# steps and loop


def train_step(model: MaskedDenoiser, batch: tuple[np.ndarray, np.ndarray],
               policy: MaskPolicy, opt: Adam, lr: float,
               rng: np.random.Generator) -> float:
    """One optimization step; returns the scalar L1 loss over the full image."""
    clean, noisy = batch
    opt.zero_grad()
    pred = model.forward(noisy, policy, rng)
    loss = l1_loss(pred, clean)
    backward(loss)
    opt.step(lr)
    return float(loss.data)


def _batch_psnr(model: MaskedDenoiser, batch: tuple[np.ndarray, np.ndarray]) -> float:
    clean, noisy = batch
    out = np.clip(model.forward(noisy, INFERENCE).data, 0.0, 1.0)
    mse = float(np.mean((out.astype(np.float64) - clean) ** 2))
    if mse == 0.0:
        return 100.0
    return min(100.0, 10.0 * np.log10(1.0 / mse))


def save_checkpoint(path: str | Path, model: MaskedDenoiser, opt: Adam,
                    iteration: int):
    tensors = model.state_tensors()
    tensors.update(opt.state_tensors())
    tensors["meta.iter"] = np.array([iteration], dtype=np.float32)
    ckpt.save(path, tensors)


def train(cfg: TrainConfig, resume_from: str | Path | None = None) -> Path:
    """Run (or resume) a training job; returns the final checkpoint path.

    ``resume_from`` continues a checkpointed run, restoring weights,
    optimizer state, and the iteration counter; ``cfg.init_from`` instead
    warm-starts only the weights and trains from iteration 0 (fine-tuning).
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = load_dataset(cfg.dataset_dir, cfg.crop)

    learnable = cfg.policy.token_mode == "learnable"
    start_iter = 0
    if resume_from is not None:
        state = ckpt.load(resume_from)
        model = MaskedDenoiser.from_state(state)
        opt = Adam(model.params, lr=cfg.lr0, beta1=cfg.beta1, beta2=cfg.beta2)
        opt.load_state_tensors(state)
        start_iter = int(state["meta.iter"][0])
    elif cfg.init_from is not None:
        model = MaskedDenoiser.from_state(ckpt.load(cfg.init_from))
        opt = Adam(model.params, lr=cfg.lr0, beta1=cfg.beta1, beta2=cfg.beta2)
    else:
        model = MaskedDenoiser(cfg.model, learnable_tokens=learnable, seed=cfg.seed)
        opt = Adam(model.params, lr=cfg.lr0, beta1=cfg.beta1, beta2=cfg.beta2)

    manifest = ManifestWriter(out_dir / "manifest.jsonl")
    manifest.write(
        "start",
        config=cfg.to_dict(),
        seed=cfg.seed,
        rng=RNG_ALGORITHM,
        version=__version__,
        resumed_at=start_iter if resume_from is not None else None,
    )

    final_path = out_dir / "model_final.mdnc"
    loss = float("nan")  # only reported if at least one step runs
    for it in range(start_iter, cfg.total_iters):
        lr = lr_at(it, cfg.lr0, cfg.milestones)
        rng_data = np.random.default_rng([cfg.seed, _STREAM_DATA, it])
        rng_mask = np.random.default_rng([cfg.seed, _STREAM_MASK, it])
        batch = sample_batch(images, cfg.crop, cfg.batch, cfg.noise, rng_data)
        loss = train_step(model, batch, cfg.policy, opt, lr, rng_mask)

        done = it + 1
        if done % cfg.log_every == 0 or it == start_iter:
            manifest.write("log", iter=done, loss=loss, lr=lr,
                           psnr=_batch_psnr(model, batch))
        if done % cfg.checkpoint_every == 0 and done < cfg.total_iters:
            path = out_dir / f"ckpt_{done:06d}.mdnc"
            save_checkpoint(path, model, opt, done)
            manifest.write("checkpoint", iter=done, path=str(path))

    save_checkpoint(final_path, model, opt, cfg.total_iters)
    manifest.write("checkpoint", iter=cfg.total_iters, path=str(final_path))
    manifest.write("end", iter=cfg.total_iters,
                   loss=loss if np.isfinite(loss) else None)
    return final_path

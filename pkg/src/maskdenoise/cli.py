"""Command-line interface.

Subcommands: synth (degrade images), train, denoise, eval (PSNR/SSIM
reports), features (per-layer activation dumps), cka (compare two dumps).
Every run writes a small JSON-lines manifest next to its primary output
recording the command, seed, and effective configuration. All randomness
flows from --seed; results are deterministic given identical inputs.

``MDN_THREADS`` caps the worker pool used for per-image work in directory
mode; output order never depends on scheduling.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import checkpoint as ckpt
from .cka import cka_matrix
from .imageio import load_image, save_image
from .metrics import psnr, ssim
from .model import INFERENCE, MaskedDenoiser, denoise_image
from .noise import NoiseSpec
from .training import (
    RNG_ALGORITHM,
    ManifestWriter,
    load_train_config,
    train,
)

_NOISE_FLAG = {
    "gaussian": "sigma255",
    "spatcorr": "sigma255",
    "speckle": "var",
    "poisson": "alpha",
    "saltpepper": "density",
    "mixture": "mix_level",
}

DEFAULT_FEATURE_POSITIONS = 1024


def _thread_count() -> int:
    env = os.environ.get("MDN_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("MDN_THREADS must be >= 1")
        return n
    return min(4, os.cpu_count() or 1)


def _map_ordered(fn, items):
    """Apply fn to items, possibly in parallel; results keep input order."""
    threads = _thread_count()
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_run_manifest(primary_out: Path, command: str, seed: int, config: dict):
    if primary_out.is_dir():
        path = primary_out / "manifest.jsonl"
    else:
        path = primary_out.with_name(primary_out.name + ".manifest.jsonl")
    ManifestWriter(path).write(
        "run", command=command, seed=seed, config=config,
        rng=RNG_ALGORITHM, version=__version__,
    )


def _png_listing(dir_path: Path) -> list[Path]:
    files = sorted(dir_path.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no .png files in {dir_path}")
    return files


# ---------------------------------------------------------------------------
# synth


def _noise_spec_from_args(args) -> NoiseSpec:
    given = {flag for flag in ("sigma255", "var", "alpha", "density", "mix_level")
             if getattr(args, flag) is not None}
    want = _NOISE_FLAG[args.noise]
    if given != {want}:
        flag = want.replace("_", "-")
        raise ValueError(
            f"noise family {args.noise!r} takes exactly --{flag} "
            f"(got: {sorted('--' + g.replace('_', '-') for g in given) or 'none'})"
        )
    return NoiseSpec(args.noise, float(getattr(args, want)))


def cmd_synth(args) -> int:
    spec = _noise_spec_from_args(args)
    src, dst = Path(args.src), Path(args.dst)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        files = _png_listing(src)

        def one(item):
            i, path = item
            rng = np.random.default_rng([args.seed, i])
            save_image(spec.apply(load_image(path), rng), dst / path.name)

        _map_ordered(one, list(enumerate(files)))
        _write_run_manifest(dst, "synth", args.seed,
                            {"noise": spec.to_dict(), "src": str(src), "count": len(files)})
    else:
        rng = np.random.default_rng([args.seed, 0])
        save_image(spec.apply(load_image(src), rng), dst)
        _write_run_manifest(dst, "synth", args.seed,
                            {"noise": spec.to_dict(), "src": str(src)})
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = load_train_config(args.config)
    final = train(cfg, resume_from=args.resume)
    print(final)
    return 0


# ---------------------------------------------------------------------------
# denoise


def _load_model(path: str) -> MaskedDenoiser:
    return MaskedDenoiser.from_state(ckpt.load(path))


def cmd_denoise(args) -> int:
    model = _load_model(args.model)
    src, dst = Path(args.src), Path(args.dst)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        files = _png_listing(src)
        # model weights are read-only during forward; concurrent inference is safe
        _map_ordered(
            lambda p: save_image(denoise_image(model, load_image(p)), dst / p.name),
            files,
        )
        _write_run_manifest(dst, "denoise", args.seed,
                            {"model": str(args.model), "src": str(src), "count": len(files)})
    else:
        save_image(denoise_image(model, load_image(src)), dst)
        _write_run_manifest(dst, "denoise", args.seed,
                            {"model": str(args.model), "src": str(src)})
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    clean_dir, noisy_dir = Path(args.clean), Path(args.noisy)
    clean_files = _png_listing(clean_dir)
    clean_names = [p.name for p in clean_files]
    noisy_names = [p.name for p in _png_listing(noisy_dir)]
    missing = sorted(set(clean_names) ^ set(noisy_names))
    if missing:
        raise ValueError(f"unpaired files between {clean_dir} and {noisy_dir}: {missing}")

    def one(name):
        a = load_image(clean_dir / name)
        b = load_image(noisy_dir / name)
        return name, psnr(a, b), ssim(a, b)

    rows = _map_ordered(one, clean_names)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "noise_spec", "psnr_db", "ssim"])
        for name, p_db, s in rows:
            writer.writerow([name, args.noise_label, f"{p_db:.4f}", f"{s:.6f}"])
        writer.writerow([
            "mean", args.noise_label,
            f"{np.mean([r[1] for r in rows]):.4f}",
            f"{np.mean([r[2] for r in rows]):.6f}",
        ])
    _write_run_manifest(out, "eval", args.seed,
                        {"clean": str(clean_dir), "noisy": str(noisy_dir),
                         "noise_label": args.noise_label, "images": len(rows)})
    return 0


# ---------------------------------------------------------------------------
# features / cka


def _sample_positions(h: int, w: int, count: int, seed: int) -> np.ndarray:
    """Deterministic sample of token positions, without replacement."""
    total = h * w
    count = min(count, total)
    return np.sort(np.random.default_rng([seed, 101]).choice(total, size=count,
                                                             replace=False))


def cmd_features(args) -> int:
    model = _load_model(args.model)
    img = load_image(args.image)
    _, feats = model.forward(img.astype(np.float32), INFERENCE, collect_features=True)
    h, w = img.shape[0], img.shape[1]
    pos = _sample_positions(h, w, args.positions, args.seed)
    ys, xs = pos // w, pos % w
    tensors = {
        f"layer_{i}": f[0, ys, xs, :] for i, f in enumerate(feats)
    }
    tensors["positions"] = pos.astype(np.float32)
    out = Path(args.out)
    ckpt.save(out, tensors)
    _write_run_manifest(out, "features", args.seed,
                        {"model": str(args.model), "image": str(args.image),
                         "layers": len(feats), "positions": int(pos.size)})
    return 0


def _load_feature_dump(path: str) -> tuple[list[np.ndarray], np.ndarray | None]:
    tensors = ckpt.load(path)
    layers = sorted(
        (name for name in tensors if name.startswith("layer_")),
        key=lambda s: int(s.split("_", 1)[1]),
    )
    if not layers:
        raise ValueError(f"no layer_<i> tensors in feature dump {path}")
    pos = tensors.get("positions")
    return [tensors[name].astype(np.float64) for name in layers], pos


def cmd_cka(args) -> int:
    feats_a, pos_a = _load_feature_dump(args.features_a)
    feats_b, pos_b = _load_feature_dump(args.features_b)
    if pos_a is not None and pos_b is not None and not np.array_equal(pos_a, pos_b):
        raise ValueError("feature dumps sample different positions; re-dump with one seed")
    mat = cka_matrix(feats_a, feats_b)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [f"layer_{j}" for j in range(mat.shape[1])])
        for i in range(mat.shape[0]):
            writer.writerow([f"layer_{i}"] + [f"{v:.6f}" for v in mat[i]])
    _write_run_manifest(out, "cka", args.seed,
                        {"features_a": str(args.features_a),
                         "features_b": str(args.features_b),
                         "shape": list(mat.shape)})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskdenoise",
        description="Masked training for generalizable image denoising.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="apply synthetic noise to PNG images")
    p.add_argument("src", help="input PNG file or directory")
    p.add_argument("dst", help="output PNG file or directory")
    p.add_argument("--noise", required=True, choices=sorted(_NOISE_FLAG))
    p.add_argument("--sigma255", type=float, help="std on the 0-255 scale (gaussian, spatcorr)")
    p.add_argument("--var", type=float, help="variance on the [0,1] scale (speckle)")
    p.add_argument("--alpha", type=float, help="scale of the shot-noise term (poisson)")
    p.add_argument("--density", type=float, help="affected-pixel fraction (saltpepper)")
    p.add_argument("--mix-level", type=int, dest="mix_level", help="composite level 1-4 (mixture)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train or resume a model")
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="restore PNG images with a trained model")
    p.add_argument("src", help="input PNG file or directory")
    p.add_argument("dst", help="output PNG file or directory")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="PSNR/SSIM report over paired directories")
    p.add_argument("--clean", required=True, help="directory of reference PNGs")
    p.add_argument("--noisy", required=True, help="directory of degraded/restored PNGs")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--noise-label", default="", dest="noise_label",
                   help="text recorded in the noise_spec column")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features", help="dump per-layer activations for one image")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--image", required=True, help="input PNG")
    p.add_argument("--out", required=True, help="output feature container")
    p.add_argument("--positions", type=int, default=DEFAULT_FEATURE_POSITIONS,
                   help="token positions to sample")
    p.add_argument("--seed", type=int, default=0,
                   help="position-sampling seed; keep equal across dumps to compare")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cka", help="CKA similarity matrix between two feature dumps")
    p.add_argument("--features-a", required=True, dest="features_a")
    p.add_argument("--features-b", required=True, dest="features_b")
    p.add_argument("--out", required=True, help="CSV matrix path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cka)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except Exception as e:  # single-line, machine-parsable failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

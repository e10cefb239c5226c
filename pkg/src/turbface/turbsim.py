"""Synthetic turbulence degradation: blur, geometric warp, and noise.

A degraded observation is produced from a clean image by blurring with a
point-spread function, warping with a random smooth displacement field,
and adding Gaussian noise, in that order. All randomness is drawn from
seeded generators, so every operation is a pure function of its inputs
and seed.
"""

import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imgio
from .util import derive_seed, numpy_rng, validate_image

log = logging.getLogger(__name__)

# Velocity random walk used for motion kernels. The trajectory starts at
# the kernel center with a Gaussian initial velocity (std WALK_V0), each
# step perturbs the velocity by a Gaussian (std WALK_JITTER) or, with
# probability WALK_IMPULSE_P, redraws it entirely (std WALK_IMPULSE_STD);
# speed is capped at WALK_VMAX pixels/step (keeps the splatted support
# 4-connected) and the walk reflects off the kernel border. Each of
# 8*size samples is splatted with bilinear weights.
WALK_V0 = 0.3
WALK_JITTER = 0.12
WALK_IMPULSE_P = 0.05
WALK_IMPULSE_STD = 0.6
WALK_VMAX = 0.75
WALK_STEPS_PER_SIDE = 8


@dataclass(frozen=True)
class BlurSpec:
    """Which blur kernel to build: gaussian(size, sigma_x, sigma_y, theta),
    motion(size), or identity (no blur)."""

    kind: str  # "gaussian" | "motion" | "identity"
    size: int = 0
    sigma_x: float = 0.0
    sigma_y: float = 0.0
    theta: float = 0.0

    def params(self) -> dict:
        if self.kind == "gaussian":
            return {
                "size": self.size,
                "sigma_x": self.sigma_x,
                "sigma_y": self.sigma_y,
                "theta": self.theta,
            }
        if self.kind == "motion":
            return {"size": self.size}
        return {}


IDENTITY_BLUR = BlurSpec(kind="identity")


@dataclass(frozen=True)
class DegradationConfig:
    """Knobs of the degradation pipeline.

    sigma       envelope std of a displacement bump, pixels
    eta         per-bump amplitude std, pixels (distortion strength)
    patch_count bumps added per iteration
    iterations  number of bump-accumulation iterations (M); 0 = no warp
    noise_std   additive Gaussian noise std
    blur        BlurSpec for the point-spread function
    seed        master seed; kernel/field/noise streams are derived from it
    """

    sigma: float = 16.0
    eta: float = 0.15
    patch_count: int = 4
    iterations: int = 0
    noise_std: float = 0.02
    blur: BlurSpec = IDENTITY_BLUR
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def _check_kernel_size(size: int) -> None:
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")


def gen_gaussian_kernel(size: int, sigma_x: float, sigma_y: float, theta: float = 0.0) -> np.ndarray:
    """Rotated anisotropic Gaussian kernel sampled at pixel centers.

    theta rotates the sigma_x axis counterclockwise; the kernel is
    normalized to sum 1. sigma_x == sigma_y makes the result independent
    of theta.
    """
    _check_kernel_size(size)
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError("sigmas must be > 0")
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    u = x * np.cos(theta) + y * np.sin(theta)
    v = -x * np.sin(theta) + y * np.cos(theta)
    k = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    return k / k.sum()


def gen_motion_kernel(size: int, rng: np.random.Generator) -> np.ndarray:
    """Random motion-blur kernel from a sub-pixel trajectory.

    The trajectory is the velocity random walk described at module top,
    splatted onto the grid with bilinear weights and normalized to sum 1.
    The nonzero support is 4-connected because per-step displacement is
    below one pixel.
    """
    _check_kernel_size(size)
    k = np.zeros((size, size), dtype=np.float64)
    hi = float(size - 1)
    pos = np.array([hi / 2.0, hi / 2.0])  # (y, x)
    vel = rng.normal(0.0, WALK_V0, 2)
    for _ in range(WALK_STEPS_PER_SIDE * size):
        if rng.random() < WALK_IMPULSE_P:
            vel = rng.normal(0.0, WALK_IMPULSE_STD, 2)
        else:
            vel = vel + rng.normal(0.0, WALK_JITTER, 2)
        speed = float(np.hypot(vel[0], vel[1]))
        if speed > WALK_VMAX:
            vel = vel * (WALK_VMAX / speed)
        pos = pos + vel
        for ax in (0, 1):
            if pos[ax] < 0.0:
                pos[ax] = -pos[ax]
                vel[ax] = -vel[ax]
            if pos[ax] > hi:
                pos[ax] = 2.0 * hi - pos[ax]
                vel[ax] = -vel[ax]
        y0, x0 = int(pos[0]), int(pos[1])
        fy, fx = pos[0] - y0, pos[1] - x0
        k[y0, x0] += (1 - fy) * (1 - fx)
        if x0 + 1 < size:
            k[y0, x0 + 1] += (1 - fy) * fx
        if y0 + 1 < size:
            k[y0 + 1, x0] += fy * (1 - fx)
        if y0 + 1 < size and x0 + 1 < size:
            k[y0 + 1, x0 + 1] += fy * fx
    return k / k.sum()


def build_kernel(spec: BlurSpec, rng: np.random.Generator | None = None) -> np.ndarray | None:
    """Materialize a BlurSpec; returns None for the identity blur."""
    if spec.kind == "identity":
        return None
    if spec.kind == "gaussian":
        return gen_gaussian_kernel(spec.size, spec.sigma_x, spec.sigma_y, spec.theta)
    if spec.kind == "motion":
        if rng is None:
            raise ValueError("motion kernels need an rng")
        return gen_motion_kernel(spec.size, rng)
    raise ValueError(f"unknown blur kind {spec.kind!r}")


def apply_blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D convolution with mirror (reflect-without-repeat) padding."""
    img = validate_image(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape[0] > img.shape[0] or kernel.shape[1] > img.shape[1]:
        raise ValueError(
            f"kernel {kernel.shape} larger than image {img.shape[:2]}"
        )
    out = np.empty_like(img)
    for c in range(3):
        out[:, :, c] = ndimage.convolve(img[:, :, c], kernel, mode="mirror")
    return out


def gen_deformation_field(h: int, w: int, cfg: DegradationConfig, rng: np.random.Generator) -> np.ndarray:
    """Random smooth displacement field of shape (h, w, 2) holding (dx, dy).

    For each of cfg.iterations rounds, cfg.patch_count bumps are added.
    A bump has a uniformly random center, a displacement amplitude with
    each component drawn from N(0, eta^2) pixels, and a Gaussian spatial
    envelope of std sigma truncated at radius 2*sigma.
    """
    if h < 8 or w < 8:
        raise ValueError("field sides must be >= 8")
    field = np.zeros((h, w, 2), dtype=np.float64)
    if cfg.iterations == 0:
        return field
    radius = int(np.ceil(2.0 * cfg.sigma))
    gy, gx = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(np.float64)
    dist2 = gx**2 + gy**2
    envelope = np.exp(-dist2 / (2.0 * cfg.sigma**2))
    envelope[dist2 > (2.0 * cfg.sigma) ** 2] = 0.0
    n_bumps = cfg.iterations * cfg.patch_count
    cy = rng.integers(0, h, n_bumps)
    cx = rng.integers(0, w, n_bumps)
    amp = rng.normal(0.0, cfg.eta, (n_bumps, 2))
    for i in range(n_bumps):
        y0 = max(cy[i] - radius, 0)
        y1 = min(cy[i] + radius + 1, h)
        x0 = max(cx[i] - radius, 0)
        x1 = min(cx[i] + radius + 1, w)
        patch = envelope[
            y0 - cy[i] + radius : y1 - cy[i] + radius,
            x0 - cx[i] + radius : x1 - cx[i] + radius,
        ]
        field[y0:y1, x0:x1, 0] += amp[i, 0] * patch
        field[y0:y1, x0:x1, 1] += amp[i, 1] * patch
    return field


def warp(img: np.ndarray, fld: np.ndarray) -> np.ndarray:
    """Backward warp: output(p) = bilinear sample of img at p + field(p).

    Sample coordinates are clamped to the image bounds. The zero field is
    the exact identity.
    """
    img = validate_image(img)
    fld = np.asarray(fld, dtype=np.float64)
    h, w = img.shape[:2]
    if fld.shape != (h, w, 2):
        raise ValueError(f"field shape {fld.shape} does not match image {img.shape[:2]}")
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = np.clip(gx + fld[:, :, 0], 0.0, w - 1.0)
    ys = np.clip(gy + fld[:, :, 1], 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (xs - x0)[:, :, None]
    wy = (ys - y0)[:, :, None]
    out = (
        (1.0 - wy) * (1.0 - wx) * img[y0, x0]
        + (1.0 - wy) * wx * img[y0, x1]
        + wy * (1.0 - wx) * img[y1, x0]
        + wy * wx * img[y1, x1]
    )
    return out


def degrade(img: np.ndarray, cfg: DegradationConfig) -> tuple[np.ndarray, dict]:
    """Blur, warp, add noise, clamp to [0, 1]; return (degraded, record).

    The record captures the blur kind and parameters, the iteration count,
    and the derived kernel/field/noise seeds.
    """
    img = validate_image(img)
    kernel_seed = derive_seed(cfg.seed, "kernel")
    field_seed = derive_seed(cfg.seed, "field")
    noise_seed = derive_seed(cfg.seed, "noise")

    kernel = build_kernel(cfg.blur, numpy_rng(kernel_seed))
    out = img if kernel is None else apply_blur(img, kernel)
    if cfg.iterations > 0:
        fld = gen_deformation_field(img.shape[0], img.shape[1], cfg, numpy_rng(field_seed))
        out = warp(out, fld)
    if cfg.noise_std > 0:
        noise = numpy_rng(noise_seed).normal(0.0, cfg.noise_std, out.shape)
        out = out + noise
    out = np.clip(out, 0.0, 1.0)
    record = {
        "blur_kind": cfg.blur.kind,
        "kernel_params": cfg.blur.params(),
        "M": cfg.iterations,
        "seed": cfg.seed,
        "kernel_seed": kernel_seed,
        "field_seed": field_seed,
        "noise_seed": noise_seed,
        "noise_std": cfg.noise_std,
    }
    return out, record


def generate_dataset(
    clean_dir,
    cfg_grid: list[DegradationConfig],
    out_dir,
    image_size: int = 128,
    master_seed: int = 0,
) -> Path:
    """Degrade every readable image in clean_dir with every config.

    Each (image, config) pair gets its own seed derived from
    (master_seed, record_index), so records are independent and the run
    is reproducible and parallelizable. Writes degraded PNGs plus clean
    resized copies under out_dir and returns the manifest path.
    """
    clean_dir = Path(clean_dir)
    out_dir = Path(out_dir)
    if not cfg_grid:
        raise ValueError("cfg_grid is empty")
    paths = sorted(
        p for p in clean_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if not paths:
        raise ValueError(f"no images found in {clean_dir}")
    (out_dir / "distorted").mkdir(parents=True, exist_ok=True)
    (out_dir / "clean").mkdir(parents=True, exist_ok=True)
    records = []
    index = 0
    for path in paths:
        try:
            img = read_clean(path, image_size)
        except Exception as exc:  # unreadable file: skip, keep going
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        clean_path = out_dir / "clean" / f"{path.stem}.png"
        imgio.write_image(clean_path, img)
        for cfg in cfg_grid:
            rec_seed = derive_seed(master_seed, cfg.seed, index)
            rec_cfg = DegradationConfig(**{**asdict_config(cfg), "seed": rec_seed})
            distorted, rec = degrade(img, rec_cfg)
            dist_path = out_dir / "distorted" / f"{path.stem}_{index:05d}.png"
            imgio.write_image(dist_path, distorted)
            records.append(
                {
                    "distorted_path": str(dist_path),
                    "clean_path": str(clean_path),
                    "blur_kind": rec["blur_kind"],
                    "kernel_params": rec["kernel_params"],
                    "M": rec["M"],
                    "seed": rec_seed,
                }
            )
            index += 1
    if not records:
        raise ValueError(f"no readable images in {clean_dir}")
    manifest_path = out_dir / "manifest.jsonl"
    imgio.write_manifest(manifest_path, records)
    return manifest_path


def read_clean(path, image_size: int) -> np.ndarray:
    return imgio.read_image(path, size=image_size)


def asdict_config(cfg: DegradationConfig) -> dict:
    d = asdict(cfg)
    d["blur"] = cfg.blur
    return d

"""Shared helpers: seeding, image validation, numpy<->torch conversion."""

import hashlib

import numpy as np
import torch

MIN_IMAGE_SIDE = 8


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of hashable parts.

    Uses sha256 of the string form, so the mapping is identical across
    processes and platforms (unlike the builtin ``hash``).
    """
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def numpy_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed) & (2**63 - 1))
    return gen


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the (H, W, 3) float-in-[0,1] contract and return the array."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < MIN_IMAGE_SIDE or img.shape[1] < MIN_IMAGE_SIDE:
        raise ValueError(
            f"{name} sides must be >= {MIN_IMAGE_SIDE}, got {img.shape[:2]}"
        )
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return img


def to_tensor(img: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, 3) numpy image -> (1, 3, H, W) torch tensor."""
    arr = np.ascontiguousarray(np.moveaxis(np.asarray(img), 2, 0))
    return torch.from_numpy(arr).to(dtype).unsqueeze(0)


def to_image(t: torch.Tensor, clamp: bool = True) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> (H, W, 3) float64 numpy image."""
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ValueError(f"expected a single image, got batch {t.shape[0]}")
        t = t[0]
    arr = np.moveaxis(t.detach().cpu().numpy().astype(np.float64), 0, 2)
    if clamp:
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

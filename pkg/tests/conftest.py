import numpy as np
import pytest


def make_face(size: int = 64, seed: int = 0) -> np.ndarray:
    """Procedural face-like test image: smooth background, oval, eyes, mouth.

    Structured enough that blur/warp visibly change it and PSNR is
    meaningful; no external data needed.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    base = np.stack(
        [
            0.35 + 0.3 * x,
            0.3 + 0.25 * y,
            0.4 + 0.2 * np.sin(2 * np.pi * (x + y) / 2),
        ],
        axis=2,
    )
    cx, cy = 0.5 + 0.05 * rng.standard_normal(), 0.48 + 0.04 * rng.standard_normal()
    rx, ry = 0.28 + 0.04 * rng.random(), 0.36 + 0.04 * rng.random()
    oval = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 < 1.0
    skin = np.array([0.85, 0.65, 0.55]) + 0.08 * rng.standard_normal(3)
    img = base.copy()
    img[oval] = skin
    for ex in (cx - 0.12, cx + 0.12):
        eye = ((x - ex) / 0.05) ** 2 + ((y - (cy - 0.1)) / 0.035) ** 2 < 1.0
        img[eye] = np.array([0.15, 0.12, 0.1])
    mouth = ((x - cx) / 0.12) ** 2 + ((y - (cy + 0.18)) / 0.04) ** 2 < 1.0
    img[mouth] = np.array([0.55, 0.2, 0.2])
    img += 0.02 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


@pytest.fixture
def face64():
    return make_face(64, seed=0)


@pytest.fixture
def face32():
    return make_face(32, seed=1)


@pytest.fixture
def clean_dir(tmp_path):
    """Directory with a few clean PNG test faces."""
    from turbface import imgio

    d = tmp_path / "clean"
    d.mkdir()
    for i in range(3):
        imgio.write_image(d / f"face{i}.png", make_face(32, seed=10 + i))
    return d

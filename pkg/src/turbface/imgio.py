"""PNG image I/O and the line-oriented dataset manifest format.

Images are stored as 8-bit-per-channel PNG. On read, intensities map
linearly to [0, 1]; on write, values are clamped to [0, 1] and quantized
with round-half-up to 8 bit.

A manifest is UTF-8 text with one JSON record per line. Field order is
fixed and documented: distorted_path, clean_path, blur_kind,
kernel_params, M, seed.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

MANIFEST_FIELDS = ("distorted_path", "clean_path", "blur_kind", "kernel_params", "M", "seed")


def read_image(path, size: int | None = None) -> np.ndarray:
    """Load a PNG/JPEG as an (H, W, 3) float64 array in [0, 1].

    If ``size`` is given, the image is center-cropped to square and
    bilinearly resized to (size, size) before conversion.
    """
    with PILImage.open(path) as im:
        im = im.convert("RGB")
        if size is not None:
            w, h = im.size
            side = min(w, h)
            left = (w - side) // 2
            top = (h - side) // 2
            im = im.crop((left, top, left + side, top + side))
            im = im.resize((size, size), PILImage.BILINEAR)
        arr = np.asarray(im, dtype=np.float64)
    return arr / 255.0


def write_image(path, img: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as 8-bit PNG (round half up)."""
    img = np.asarray(img, dtype=np.float64)
    quant = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(quant, mode="RGB").save(path, format="PNG")


def write_manifest(path, records: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            ordered = {k: rec[k] for k in MANIFEST_FIELDS}
            fh.write(json.dumps(ordered, sort_keys=False) + "\n")


def read_manifest(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records

"""Restoration quality metrics and the gallery identification protocol.

PSNR and SSIM follow the standard constructions for images in [0, 1];
the feature distance is the RMS difference of deep features from a
deterministic extractor. Identification ranks gallery embeddings by
cosine similarity and reports top-k hit rates.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy import signal

from . import imgio
from .util import derive_seed, to_tensor, validate_image

log = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1 / MSE) for images in [0, 1], capped at 100 dB."""
    a = validate_image(a, "a")
    b = validate_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _luminance(img: np.ndarray) -> np.ndarray:
    return img @ LUMA_WEIGHTS


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    w = np.exp(-(x**2 + y**2) / (2.0 * SSIM_SIGMA**2))
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM on luminance, 11x11 Gaussian window (sigma 1.5).

    Local statistics use only full windows (valid region), dynamic range
    is 1, stability constants K1=0.01 and K2=0.03.
    """
    a = validate_image(a, "a")
    b = validate_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for ssim")
    ya, yb = _luminance(a), _luminance(b)
    w = _ssim_window()
    mu_a = signal.correlate2d(ya, w, mode="valid")
    mu_b = signal.correlate2d(yb, w, mode="valid")
    var_a = signal.correlate2d(ya * ya, w, mode="valid") - mu_a * mu_a
    var_b = signal.correlate2d(yb * yb, w, mode="valid") - mu_b * mu_b
    cov = signal.correlate2d(ya * yb, w, mode="valid") - mu_a * mu_b
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def feature_distance(feat, a: np.ndarray, b: np.ndarray) -> float:
    """RMS difference of extracted features (size-independent scale)."""
    fa = feat(to_tensor(validate_image(a, "a"))).detach().numpy().astype(np.float64)
    fb = feat(to_tensor(validate_image(b, "b"))).detach().numpy().astype(np.float64)
    return float(np.sqrt(np.mean((fa - fb) ** 2)))


# --------------------------------------------------------- identification

@dataclass
class GalleryIndex:
    """Identity-labelled embeddings ranked against probe embeddings."""

    labels: list
    embeddings: np.ndarray  # (N, D)

    @classmethod
    def from_pairs(cls, pairs):
        if not pairs:
            raise ValueError("gallery must contain at least one identity")
        labels = [label for label, _ in pairs]
        embeddings = np.stack([np.asarray(v, dtype=np.float64) for _, v in pairs])
        return cls(labels, embeddings)


def top_k_accuracy(probes, gallery, ks=(1, 3, 5)) -> dict:
    """Fraction of probes whose label is among the k cosine-nearest
    gallery entries; ties broken by stable gallery order."""
    if isinstance(gallery, list):
        gallery = GalleryIndex.from_pairs(gallery)
    if len(gallery.labels) == 0:
        raise ValueError("empty gallery")
    if not probes:
        raise ValueError("no probes")
    gal = gallery.embeddings
    norms = np.linalg.norm(gal, axis=1)
    gal_n = gal / np.maximum(norms, 1e-12)[:, None]
    hits = {k: 0 for k in ks}
    for label, vec in probes:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (gal.shape[1],):
            raise ValueError(
                f"probe dim {vec.shape} does not match gallery dim {gal.shape[1]}"
            )
        sims = gal_n @ (vec / max(np.linalg.norm(vec), 1e-12))
        order = np.argsort(-sims, kind="stable")
        ranked = [gallery.labels[i] for i in order]
        for k in ks:
            if label in ranked[:k]:
                hits[k] += 1
    return {k: hits[k] / len(probes) for k in ks}


def stub_embedder(seed: int = 0, dim: int = 64):
    """Deterministic random-projection embedder for protocol tests.

    Pools the luminance to a 16x16 grid, projects with a seeded matrix,
    and L2-normalizes. Stands in for a real face recognizer, which is an
    external artifact.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    proj = rng.standard_normal((dim, 256)) / 16.0

    def embed(img: np.ndarray) -> np.ndarray:
        x = to_tensor(validate_image(img)).mean(dim=1, keepdim=True)
        pooled = F.adaptive_avg_pool2d(x, (16, 16)).numpy().ravel().astype(np.float64)
        vec = proj @ pooled
        return vec / max(np.linalg.norm(vec), 1e-12)

    return embed


# ------------------------------------------------------ dataset protocol

@dataclass
class MetricReport:
    rows: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def evaluate_dataset(
    manifest_path,
    checkpoints: dict | None,
    feat,
    out_dir=None,
    S: int = 10,
    seed: int = 0,
    extra_meta: dict | None = None,
) -> MetricReport:
    """Restore every manifest pair and score it against its ground truth.

    ``checkpoints`` maps {"dbn", "gdrn", "tdrn"} to checkpoint paths; when
    None the distorted image itself is scored (baseline). Missing files
    are skipped with a warning; an all-missing manifest is an error.
    Writes the delimited report, JSON sidecar, and figures when out_dir
    is given.
    """
    from .train import restore  # local import: train depends on this module

    records = imgio.read_manifest(manifest_path)
    rows = []
    for idx, rec in enumerate(records):
        try:
            distorted = imgio.read_image(rec["distorted_path"])
            clean = imgio.read_image(rec["clean_path"])
        except (OSError, ValueError) as exc:
            log.warning("skipping manifest row %d: %s", idx, exc)
            continue
        if checkpoints is None:
            restored = distorted
        else:
            restored = restore(
                distorted,
                checkpoints["dbn"],
                checkpoints["gdrn"],
                checkpoints["tdrn"],
                S=S,
                seed=derive_seed(seed, idx),
            )
        rows.append(
            {
                "index": idx,
                "distorted_path": rec["distorted_path"],
                "psnr": psnr(clean, restored),
                "ssim": ssim(clean, restored),
                "dvgg": feature_distance(feat, clean, restored),
            }
        )
    if not rows:
        raise ValueError(f"no evaluable rows in manifest {manifest_path}")
    aggregate = {
        "count": len(rows),
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
        "dvgg": float(np.mean([r["dvgg"] for r in rows])),
    }
    meta = {
        "manifest": str(manifest_path),
        "checkpoints": {k: str(v) for k, v in checkpoints.items()} if checkpoints else None,
        "S": S,
        "seed": seed,
    }
    if extra_meta:
        meta.update(extra_meta)
    report = MetricReport(rows=rows, aggregate=aggregate, meta=meta)
    if out_dir is not None:
        from . import report as report_mod

        report_mod.write_metric_report(report, out_dir)
    return report

"""Per-pixel uncertainty priors from repeated stochastic forward passes.

Feeding a degraded image through a dropout-equipped restorer S times with
independent masks yields a set of outputs whose per-pixel variance marks
the locations the network is unsure about. The variance of the deblurring
net is the blur prior; the variance of the dewarping net is the
distortion prior. Both are single-channel maps (channel-averaged).
"""

import numpy as np
import torch

from . import arch
from .util import derive_seed, to_tensor, torch_generator, validate_image


def mc_sample(net, img: np.ndarray, S: int = 10, seed: int = 0) -> np.ndarray:
    """Draw S stochastic outputs for one image; returns (S, H, W, 3) float64.

    The S copies run as one batch in mc_sample mode, so masks are
    independent per copy and the whole set is a pure function of
    (net, img, S, seed). Outputs are the raw network values (not clamped);
    clamping would flatten the variance signal near saturation.
    """
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    x = to_tensor(validate_image(img)).repeat(S, 1, 1, 1)
    gen = torch_generator(derive_seed(seed, net.spec.kind))
    with torch.no_grad():
        y = arch.forward(net, x, "mc_sample", gen)
    return np.moveaxis(y.numpy().astype(np.float64), 1, 3)


def pixel_variance(samples) -> np.ndarray:
    """Per-pixel population variance of a sample set, averaged over channels.

    Input is (S, H, W, 3); output is a nonnegative (H, W) float64 map.
    Samples are sorted per pixel before accumulation so the result is
    bit-identical under any permutation of the set, and identical samples
    give an exactly zero map (Welford deltas vanish).
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 4 or s.shape[3] != 3:
        raise ValueError(f"expected (S, H, W, 3) samples, got shape {s.shape}")
    s = np.sort(s, axis=0)
    mean = s[0].copy()
    m2 = np.zeros_like(mean)
    for i in range(1, s.shape[0]):
        delta = s[i] - mean
        mean += delta / (i + 1)
        m2 += delta * (s[i] - mean)
    var = m2 / s.shape[0]
    return var.mean(axis=2)


def estimate_priors(
    dbn, gdrn, img: np.ndarray, S: int = 10, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Blur and distortion prior maps for one degraded image.

    The two networks consume distinct mask streams (derived from their
    kind), so one seed drives both estimates reproducibly.
    """
    blur_prior = pixel_variance(mc_sample(dbn, img, S, seed))
    dist_prior = pixel_variance(mc_sample(gdrn, img, S, seed))
    return blur_prior, dist_prior


def prior_map_tensor(net, x: torch.Tensor, S: int, seed: int) -> torch.Tensor:
    """Variance map for one already-tensorized image, as (1, 1, H, W).

    Torch-native counterpart of mc_sample + pixel_variance used by the
    training loop; same sampling scheme, float32 accumulation.
    """
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValueError("expected a single (1, C, H, W) image tensor")
    gen = torch_generator(derive_seed(seed, net.spec.kind))
    with torch.no_grad():
        y = arch.forward(net, x.repeat(S, 1, 1, 1), "mc_sample", gen)
        y, _ = torch.sort(y, dim=0)
        mean = y[0].clone()
        m2 = torch.zeros_like(mean)
        for i in range(1, S):
            delta = y[i] - mean
            mean += delta / (i + 1)
            m2 += delta * (y[i] - mean)
        var = m2 / S
    return var.mean(dim=0, keepdim=True).unsqueeze(0)

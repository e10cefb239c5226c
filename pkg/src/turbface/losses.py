"""Training losses for the fusion restorer.

The edge-preserving loss compares first-order (horizontal/vertical) and
second-order (Laplacian) gradients of the restoration against the target,
reweighted per pixel by learned confidence maps; a -lambda_c*log(C)
term keeps the confidences from collapsing to zero. The total training
loss adds a plain L1 term and a feature-space (perceptual) term.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .arch import Checkpoint, NetworkSpec, init_parameters, load_checkpoint, save_checkpoint

LOG_EPS = 1e-6

GRAD_KEYS = ("h", "v", "s")

_STENCILS = {
    "h": [[-0.5, 0.0, 0.5]],
    "v": [[-0.5], [0.0], [0.5]],
    "s": [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]],
}


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 0.01
    lambda_g: float = 0.25
    lambda_p: float = 0.1

    def __post_init__(self):
        if self.lambda_c < 0 or self.lambda_g < 0 or self.lambda_p < 0:
            raise ValueError("loss weights must be >= 0")


def _apply_stencil(x: torch.Tensor, key: str) -> torch.Tensor:
    if x.ndim != 4:
        raise ValueError(f"expected (B, C, H, W) input, got shape {tuple(x.shape)}")
    if x.shape[2] < 3 or x.shape[3] < 3:
        raise ValueError("images must be at least 3x3 for gradient stencils")
    kernel = torch.tensor(_STENCILS[key], dtype=x.dtype, device=x.device)
    kh, kw = kernel.shape
    c = x.shape[1]
    xp = F.pad(x, (kw // 2, kw // 2, kh // 2, kh // 2), mode="reflect")
    weight = kernel.view(1, 1, kh, kw).repeat(c, 1, 1, 1)
    return F.conv2d(xp, weight, groups=c)


def grad_h(img: torch.Tensor) -> torch.Tensor:
    """Central horizontal difference, mirror padding, shape-preserving."""
    return _apply_stencil(img, "h")


def grad_v(img: torch.Tensor) -> torch.Tensor:
    """Central vertical difference (transpose of grad_h)."""
    return _apply_stencil(img, "v")


def laplacian(img: torch.Tensor) -> torch.Tensor:
    """4-neighbor Laplacian stencil, mirror padding, shape-preserving."""
    return _apply_stencil(img, "s")


GRAD_FNS = {"h": grad_h, "v": grad_v, "s": laplacian}


def confidence_term(
    grad_target: torch.Tensor,
    grad_restored: torch.Tensor,
    confidence: torch.Tensor,
    lambda_c: float,
) -> torch.Tensor:
    """Sum over pixels of C * |grad error|_1(channels) - lambda_c * log C.

    The log argument is clamped to [LOG_EPS, 1 - LOG_EPS] so the term stays
    finite even if a confidence saturates numerically.
    """
    err = (grad_restored - grad_target).abs().sum(dim=1, keepdim=True)
    logc = torch.log(confidence.clamp(LOG_EPS, 1.0 - LOG_EPS))
    return (confidence * err - lambda_c * logc).sum()


def confidence_loss(
    target: torch.Tensor,
    restored: torch.Tensor,
    cbs: dict,
    lambda_c: float = 0.01,
) -> tuple[torch.Tensor, dict]:
    """Edge-preserving loss over the three gradient directions.

    For each direction the matching confidence block maps the
    channel-concatenated (target grad, restored grad) pair to a per-pixel
    confidence; the per-pixel terms are summed over directions and
    normalized by the pixel count (batch * H * W), so the value is
    comparable across image sizes. Returns (loss, confidence maps).
    """
    if target.shape != restored.shape:
        raise ValueError(f"shape mismatch: {tuple(target.shape)} vs {tuple(restored.shape)}")
    if lambda_c < 0:
        raise ValueError("lambda_c must be >= 0")
    b, _, h, w = target.shape
    total = None
    maps = {}
    for key in GRAD_KEYS:
        gt = GRAD_FNS[key](target)
        gr = GRAD_FNS[key](restored)
        conf = cbs[key](torch.cat([gt, gr], dim=1))
        maps[key] = conf
        term = confidence_term(gt, gr, conf, lambda_c)
        total = term if total is None else total + term
    return total / (b * h * w), maps


def perceptual_loss(feat: nn.Module, target: torch.Tensor, restored: torch.Tensor) -> torch.Tensor:
    """Mean squared difference of deep features (squared L2 / element count)."""
    fa = feat(restored)
    fb = feat(target)
    return ((fa - fb) ** 2).mean()


def l1_loss(target: torch.Tensor, restored: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all pixels and channels."""
    if target.shape != restored.shape:
        raise ValueError(f"shape mismatch: {tuple(target.shape)} vs {tuple(restored.shape)}")
    return (restored - target).abs().mean()


def total_loss(
    target: torch.Tensor,
    restored: torch.Tensor,
    cbs: dict | None,
    feat: nn.Module | None,
    weights: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, dict]:
    """L1 + lambda_g * edge loss + lambda_p * perceptual loss.

    cbs may be None when lambda_g == 0 and feat may be None when
    lambda_p == 0 (the respective terms are skipped). Diagnostics carry
    each component tensor and the confidence maps.
    """
    l1 = l1_loss(target, restored)
    diagnostics = {"l1": l1, "lg": None, "lp": None, "conf": {}}
    total = l1
    if weights.lambda_g > 0:
        if cbs is None:
            raise ValueError("lambda_g > 0 requires confidence blocks")
        lg, maps = confidence_loss(target, restored, cbs, weights.lambda_c)
        diagnostics["lg"] = lg
        diagnostics["conf"] = maps
        total = total + weights.lambda_g * lg
    if weights.lambda_p > 0:
        if feat is None:
            raise ValueError("lambda_p > 0 requires a feature extractor")
        lp = perceptual_loss(feat, target, restored)
        diagnostics["lp"] = lp
        total = total + weights.lambda_p * lp
    diagnostics["total"] = total
    return total, diagnostics


class FeatureExtractor(nn.Module):
    """Frozen seeded conv stack standing in for a pretrained face descriptor.

    Four stages of 3x3 conv + ReLU + 2x average pooling (pooling skips
    once the spatial size reaches 1, so small images still map to valid
    features). Deterministic: the same image always yields the same
    features. Weights come from a recorded seed and never train, but
    gradients flow through to the input, so the perceptual loss remains
    differentiable w.r.t. the restoration.
    """

    CHANNELS = (3, 16, 32, 64, 64)

    def __init__(self, seed: int = 0):
        super().__init__()
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(self.CHANNELS[i], self.CHANNELS[i + 1], 3, padding=1)
                for i in range(len(self.CHANNELS) - 1)
            ]
        )
        self.spec = NetworkSpec("feat", 3)
        init_parameters(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        for conv in self.convs:
            x = F.relu(conv(x))
            if min(x.shape[-2:]) >= 2:
                x = F.avg_pool2d(x, 2, ceil_mode=True)
        return x


def save_feature_extractor(feat: FeatureExtractor, path) -> None:
    save_checkpoint(Checkpoint(spec=feat.spec, params=feat.state_dict()), path)


def load_feature_extractor(path) -> FeatureExtractor:
    ckpt = load_checkpoint(path, expected_kind="feat")
    feat = FeatureExtractor()
    feat.load_state_dict(ckpt.params)
    for p in feat.parameters():
        p.requires_grad_(False)
    return feat

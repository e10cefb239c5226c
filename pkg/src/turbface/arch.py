"""Network architectures and the checkpoint container.

Three encoder-decoder restorers share one multi-scale residual block:

* ``build_dbn`` / ``build_gdrn`` — identical U-shaped networks (trained for
  deblurring and for dewarping respectively) with Monte-Carlo dropout on
  every block output,
* ``build_tdrn`` — the fusion restorer that consumes the degraded image
  stacked with its two prior maps (5 input planes), no dropout,
* ``build_confidence_block`` — a small net mapping a pair of gradient
  images to a per-pixel confidence in (0, 1).

``forward`` runs a network in one of three modes: ``train`` and
``mc_sample`` draw independent inverted-dropout masks from an explicit
generator; ``deterministic`` disables dropout (no weight rescaling is
needed because masks are inverted at sample time).
"""

import json
import zipfile
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .util import sha256_bytes, torch_generator

FORMAT_VERSION = 1
FORWARD_MODES = ("train", "mc_sample", "deterministic")

# zip entries get a fixed timestamp so checkpoints are byte-reproducible
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class CheckpointError(Exception):
    """Raised for unreadable, corrupt, or mismatched checkpoint files."""


@dataclass(frozen=True)
class NetworkSpec:
    kind: str  # "dbn" | "gdrn" | "tdrn" | "cb" | "feat"
    in_channels: int
    dropout: float = 0.0


class MCDropout(nn.Module):
    """Elementwise inverted dropout driven by an explicit generator.

    Inactive by default; ``forward`` (the module-level function) switches
    it on for train/mc_sample modes. Each activation is zeroed
    independently with probability p and survivors are scaled by 1/(1-p).
    """

    def __init__(self, p: float):
        super().__init__()
        self.p = float(p)
        self.active = False
        self.generator = None

    def forward(self, x):
        if not self.active or self.p <= 0.0:
            return x
        mask = torch.rand(x.shape, generator=self.generator, dtype=x.dtype) >= self.p
        return x * mask.to(x.dtype) / (1.0 - self.p)


class Res2Block(nn.Module):
    """Multi-scale residual block.

    1x1 conv m->n, split into ``scale`` groups of width n/scale; group 1
    passes through, group i >= 2 applies a 3x3 conv to (its split + the
    previous group's output); concatenate, 1x1 conv n->n, add the identity
    skip (1x1 projection when m != n). ReLU follows every conv except the
    final merge. When n < scale or n % scale != 0 the split degrades to a
    single 3x3 path (plain residual block).
    """

    def __init__(self, m: int, n: int, scale: int = 4):
        super().__init__()
        if m < 1 or n < 1:
            raise ValueError("channel counts must be >= 1")
        self.in_channels = m
        self.out_channels = n
        self.scale = scale if (n >= scale and n % scale == 0) else 1
        self.conv_in = nn.Conv2d(m, n, 1)
        if self.scale == 1:
            self.convs = nn.ModuleList([nn.Conv2d(n, n, 3, padding=1)])
        else:
            w = n // self.scale
            self.convs = nn.ModuleList(
                [nn.Conv2d(w, w, 3, padding=1) for _ in range(self.scale - 1)]
            )
        self.conv_out = nn.Conv2d(n, n, 1)
        self.skip = nn.Conv2d(m, n, 1) if m != n else None

    def forward(self, x):
        h = F.relu(self.conv_in(x))
        if self.scale == 1:
            mid = F.relu(self.convs[0](h))
        else:
            splits = torch.split(h, self.out_channels // self.scale, dim=1)
            outs = [splits[0]]
            prev = splits[0]
            for conv, s in zip(self.convs, splits[1:]):
                prev = F.relu(conv(s + prev))
                outs.append(prev)
            mid = torch.cat(outs, dim=1)
        identity = x if self.skip is None else self.skip(x)
        return self.conv_out(mid) + identity


def _down(x):
    return F.avg_pool2d(x, 2)


def _up(x):
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class RestorerNet(nn.Module):
    """U-shaped restorer used for both the deblur and dewarp priors nets.

    Res2Block(3,64) - Down - Res2Block(64,64) - Down - Res2Block(64,64)x5
    - Up - Res2Block(64,64) - Up - Res2Block(64,16) - Res2Block(16,3),
    with additive encoder->decoder skips at every matching scale
    (including the outermost input->output pair, so the stack learns a
    correction) and dropout attached to every block output (10 sites).
    """

    def __init__(self, dropout: float = 0.2):
        super().__init__()
        self.enc0 = Res2Block(3, 64)
        self.enc1 = Res2Block(64, 64)
        self.mid = nn.ModuleList([Res2Block(64, 64) for _ in range(5)])
        self.dec1 = Res2Block(64, 64)
        self.dec0a = Res2Block(64, 16)
        self.dec0b = Res2Block(16, 3)
        self.drops = nn.ModuleList([MCDropout(dropout) for _ in range(10)])

    def forward(self, x):
        d = iter(self.drops)
        e0 = next(d)(self.enc0(x))
        e1 = next(d)(self.enc1(_down(e0)))
        h = _down(e1)
        for blk in self.mid:
            h = next(d)(blk(h))
        h = next(d)(self.dec1(_up(h) + e1))
        h = _up(h) + e0
        h = next(d)(self.dec0a(h))
        return next(d)(self.dec0b(h)) + x


class FusionRestorerNet(nn.Module):
    """Restorer that fuses the degraded image with its prior maps.

    Conv3x3(in,16) - Res2Block(16,64) - Down - Res2Block(64,64) - Down -
    Res2Block(64,64)x5 - Up - Res2Block(64,64) - Up - Res2Block(64,3),
    additive skips at every matching scale; the outermost skip adds the
    image planes (first 3 channels) to the output, so the stack learns a
    correction. Output is linear (clamping happens at image-save time).
    The default 5 input planes are the 3 image channels plus the blur and
    distortion prior maps; the ablation variants use 3 or 4.
    """

    def __init__(self, in_channels: int = 5):
        super().__init__()
        self.stem = nn.Conv2d(in_channels, 16, 3, padding=1)
        self.enc0 = Res2Block(16, 64)
        self.enc1 = Res2Block(64, 64)
        self.mid = nn.ModuleList([Res2Block(64, 64) for _ in range(5)])
        self.dec1 = Res2Block(64, 64)
        self.dec0 = Res2Block(64, 3)

    def forward(self, x):
        h = F.relu(self.stem(x))
        e0 = self.enc0(h)
        e1 = self.enc1(_down(e0))
        h = _down(e1)
        for blk in self.mid:
            h = blk(h)
        h = self.dec1(_up(h) + e1)
        return self.dec0(_up(h) + e0) + x[:, :3]


class ConfidenceBlock(nn.Module):
    """Res2Block(6,16) - Res2Block(16,16) - Res2Block(16,1) - Sigmoid.

    Input is the channel-concatenation of one gradient image of the target
    and the same gradient of the restoration; output is one confidence
    channel with values strictly in (0, 1).
    """

    def __init__(self):
        super().__init__()
        self.blocks = nn.Sequential(Res2Block(6, 16), Res2Block(16, 16), Res2Block(16, 1))

    def forward(self, x):
        return torch.sigmoid(self.blocks(x))


# ------------------------------------------------------------- builders

def init_parameters(net: nn.Module, seed: int) -> None:
    """Fan-in-scaled uniform init for weights, zeros for biases, seeded."""
    gen = torch_generator(seed)
    for name, p in net.named_parameters():
        with torch.no_grad():
            if p.ndim >= 2:
                fan_in = int(np.prod(p.shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                p.uniform_(-bound, bound, generator=gen)
            else:
                p.zero_()


def _tag(net: nn.Module, spec: NetworkSpec, init_seed: int) -> nn.Module:
    net.spec = spec
    init_parameters(net, init_seed)
    return net


def build_dbn(dropout: float = 0.2, init_seed: int = 0) -> nn.Module:
    return _tag(RestorerNet(dropout), NetworkSpec("dbn", 3, dropout), init_seed)


def build_gdrn(dropout: float = 0.2, init_seed: int = 0) -> nn.Module:
    return _tag(RestorerNet(dropout), NetworkSpec("gdrn", 3, dropout), init_seed)


def build_tdrn(in_channels: int = 5, init_seed: int = 0) -> nn.Module:
    return _tag(FusionRestorerNet(in_channels), NetworkSpec("tdrn", in_channels), init_seed)


def build_confidence_block(init_seed: int = 0) -> nn.Module:
    return _tag(ConfidenceBlock(), NetworkSpec("cb", 6), init_seed)


def build_from_spec(spec: NetworkSpec, init_seed: int = 0) -> nn.Module:
    if spec.kind == "dbn":
        return build_dbn(spec.dropout, init_seed)
    if spec.kind == "gdrn":
        return build_gdrn(spec.dropout, init_seed)
    if spec.kind == "tdrn":
        return build_tdrn(spec.in_channels, init_seed)
    if spec.kind == "cb":
        return build_confidence_block(init_seed)
    raise ValueError(f"unknown network kind {spec.kind!r}")


# -------------------------------------------------------------- forward

def _set_dropout(net: nn.Module, active: bool, generator) -> None:
    for mod in net.modules():
        if isinstance(mod, MCDropout):
            mod.active = active
            mod.generator = generator


def forward(net: nn.Module, x: torch.Tensor, mode: str = "deterministic", generator=None):
    """Run a built network in the given dropout mode.

    ``train`` and ``mc_sample`` draw independent masks from ``generator``;
    ``deterministic`` disables dropout entirely.
    """
    if mode not in FORWARD_MODES:
        raise ValueError(f"mode must be one of {FORWARD_MODES}, got {mode!r}")
    spec = net.spec
    if x.ndim != 4:
        raise ValueError(f"expected (B, C, H, W) input, got shape {tuple(x.shape)}")
    if x.shape[1] != spec.in_channels:
        raise ValueError(
            f"{spec.kind} expects {spec.in_channels} input channels, got {x.shape[1]}"
        )
    if spec.kind in ("dbn", "gdrn", "tdrn") and (x.shape[2] % 4 or x.shape[3] % 4):
        raise ValueError("spatial dims must be divisible by 4")
    active = mode in ("train", "mc_sample")
    if active and generator is None and spec.dropout > 0:
        raise ValueError(f"mode={mode!r} needs an explicit generator")
    _set_dropout(net, active, generator)
    try:
        return net(x)
    finally:
        _set_dropout(net, False, None)


def param_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def params_hash(state: dict) -> str:
    """sha256 over parameter names and raw little-endian bytes."""
    h_parts = []
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy()
        h_parts.append(name.encode() + arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return sha256_bytes(b"".join(h_parts))


# ----------------------------------------------------------- checkpoint

@dataclass
class Checkpoint:
    """Everything needed to resume: architecture descriptor, parameters,
    optimizer moments, iteration counter, and training RNG state."""

    spec: NetworkSpec
    params: dict
    optimizer: dict | None = None  # {"hyper": {...}, "state": {name: {...}}}
    iteration: int = 0
    rng_state: bytes | None = None


def _tensor_to_bytes(t: torch.Tensor) -> tuple[bytes, list, str]:
    arr = t.detach().cpu().numpy()
    arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr.tobytes(), list(arr.shape), arr.dtype.str


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the single-archive container (deterministic bytes).

    Entries: arch.json (versioned descriptor), meta.json (tensor manifest,
    optimizer scalars, iteration), data.bin (concatenated little-endian
    blobs in manifest order), rng.bin (optional generator state).
    """
    tensors = {}
    for name in sorted(ckpt.params):
        tensors[f"param/{name}"] = ckpt.params[name]
    opt_meta = None
    if ckpt.optimizer is not None:
        opt_meta = {"hyper": ckpt.optimizer["hyper"], "steps": {}, "names": []}
        for name in sorted(ckpt.optimizer["state"]):
            st = ckpt.optimizer["state"][name]
            opt_meta["names"].append(name)
            opt_meta["steps"][name] = float(st["step"])
            tensors[f"opt/{name}/exp_avg"] = st["exp_avg"]
            tensors[f"opt/{name}/exp_avg_sq"] = st["exp_avg_sq"]

    manifest = []
    blobs = []
    for name in sorted(tensors):
        data, shape, dtype = _tensor_to_bytes(tensors[name])
        manifest.append({"name": name, "shape": shape, "dtype": dtype})
        blobs.append(data)

    arch_json = json.dumps(
        {"format_version": FORMAT_VERSION, "spec": asdict(ckpt.spec)},
        sort_keys=True,
        separators=(",", ":"),
    )
    meta_json = json.dumps(
        {"iteration": ckpt.iteration, "tensors": manifest, "optimizer": opt_meta},
        sort_keys=True,
        separators=(",", ":"),
    )
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in (
            ("arch.json", arch_json.encode()),
            ("meta.json", meta_json.encode()),
            ("data.bin", b"".join(blobs)),
            ("rng.bin", ckpt.rng_state or b""),
        ):
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            zf.writestr(info, payload)


def load_checkpoint(path, expected_kind: str | None = None) -> Checkpoint:
    try:
        with zipfile.ZipFile(path, "r") as zf:
            arch = json.loads(zf.read("arch.json"))
            meta = json.loads(zf.read("meta.json"))
            data = zf.read("data.bin")
            rng = zf.read("rng.bin")
    except (OSError, KeyError, json.JSONDecodeError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if arch.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format_version {arch.get('format_version')}, "
            f"expected {FORMAT_VERSION}"
        )
    spec = NetworkSpec(**arch["spec"])
    if expected_kind is not None and spec.kind != expected_kind:
        raise CheckpointError(
            f"checkpoint {path} holds a {spec.kind!r} network, expected {expected_kind!r}"
        )
    tensors = {}
    offset = 0
    for entry in meta["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"checkpoint {path} data size mismatch")
    params = {
        name[len("param/") :]: t for name, t in tensors.items() if name.startswith("param/")
    }
    optimizer = None
    if meta.get("optimizer"):
        optimizer = {"hyper": meta["optimizer"]["hyper"], "state": {}}
        for name in meta["optimizer"]["names"]:
            optimizer["state"][name] = {
                "step": meta["optimizer"]["steps"][name],
                "exp_avg": tensors[f"opt/{name}/exp_avg"],
                "exp_avg_sq": tensors[f"opt/{name}/exp_avg_sq"],
            }
    return Checkpoint(
        spec=spec,
        params=params,
        optimizer=optimizer,
        iteration=int(meta["iteration"]),
        rng_state=bytes(rng) if rng else None,
    )


def net_from_checkpoint(ckpt: Checkpoint) -> nn.Module:
    net = build_from_spec(ckpt.spec)
    net.load_state_dict(ckpt.params)
    return net

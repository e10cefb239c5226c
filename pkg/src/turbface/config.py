"""Run configuration: strict schema, defaults, YAML echo, checksums.

Unknown keys are rejected so typos cannot silently fall back to defaults.
The fully resolved config is echoed into every run directory and the
echo parses back to the identical RunConfig.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .util import sha256_bytes


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    clean_dir: str | None = None
    image_size: int = 128


@dataclass
class DegradeSection:
    sigma: float = 16.0
    eta: float = 0.15
    patch_count: int = 4
    noise_std: float = 0.02
    m_grid: list = field(default_factory=lambda: [1000, 4000, 7000, 10000, 13000, 16000, 19000])
    isotropic_kernels: int = 8
    anisotropic_kernels: int = 8
    motion_kernels: int = 8
    motion_size_min: int = 11
    motion_size_max: int = 27
    gaussian_sigma_min: float = 1.0
    gaussian_sigma_max: float = 4.0
    gaussian_kernel_size: int = 21
    grid_subsample: int | None = None
    roles: list = field(default_factory=lambda: ["deblur", "dewarp", "deturbulence"])


@dataclass
class NetSection:
    manifest: str | None = None
    learning_rate: float = 2e-4
    batch_size: int = 10
    iterations: int = 100_000
    checkpoint_interval: int = 1000


@dataclass
class TdrnSection(NetSection):
    iterations: int = 150_000
    dbn_checkpoint: str | None = None
    gdrn_checkpoint: str | None = None


@dataclass
class TrainSection:
    dbn: NetSection = field(default_factory=NetSection)
    gdrn: NetSection = field(default_factory=NetSection)
    tdrn: TdrnSection = field(default_factory=TdrnSection)


@dataclass
class PriorsSection:
    S: int = 10
    dropout_rate: float = 0.2


@dataclass
class LossSection:
    lambda_c: float = 0.01
    lambda_g: float = 0.25
    lambda_p: float = 0.1


@dataclass
class EvalSection:
    metrics: list = field(default_factory=lambda: ["psnr", "ssim", "dvgg"])
    ks: list = field(default_factory=lambda: [1, 3, 5])
    feature_seed: int = 0


@dataclass
class AblateSection:
    train_manifest: str | None = None
    test_manifest: str | None = None
    iterations: int = 400
    prior_iterations: int = 200
    batch_size: int = 8
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    dbn_checkpoint: str | None = None
    gdrn_checkpoint: str | None = None


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    degrade: DegradeSection = field(default_factory=DegradeSection)
    train: TrainSection = field(default_factory=TrainSection)
    priors: PriorsSection = field(default_factory=PriorsSection)
    loss: LossSection = field(default_factory=LossSection)
    eval: EvalSection = field(default_factory=EvalSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    seed: int = 0


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {path or 'root'} must be a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path or 'config root'}")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            continue
        if dataclasses.is_dataclass(f.type):
            kwargs[name] = _build(f.type, data[name], f"{path}.{name}" if path else name)
        else:
            kwargs[name] = data[name]
    return cls(**kwargs)


def load_config(path=None) -> RunConfig:
    """Parse a YAML config file (or defaults when path is None)."""
    raw = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        raw = yaml.safe_load(text) or {}
    return _build(RunConfig, raw, "")


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def echo_config(cfg: RunConfig, path) -> Path:
    """Write the fully resolved config; parsing it back gives cfg exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(to_dict(cfg), sort_keys=True), encoding="utf-8")
    return path


def config_checksum(cfg: RunConfig) -> str:
    return sha256_bytes(json.dumps(to_dict(cfg), sort_keys=True).encode("utf-8"))

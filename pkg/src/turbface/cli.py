"""Command-line entry points wiring the full pipeline:
degrade -> train {dbn|gdrn|tdrn} -> restore -> evaluate -> ablate.

Every command resolves one run directory, echoes the resolved config
into it, and is idempotent given identical config and seeds. Flag values
override config-file keys, which override defaults. The default run root
comes from $TURBFACE_RUN_ROOT (falling back to ./runs).
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import imgio, report, turbsim
from .arch import CheckpointError
from .config import ConfigError, RunConfig
from .evaluate import evaluate_dataset
from .losses import FeatureExtractor, LossWeights
from .train import (
    ROLE_FOR_KIND,
    AblationConfig,
    PairDataset,
    TrainConfig,
    latest_checkpoint,
    read_loss_log,
    restore,
    run_ablation,
    train_restorer,
    train_tdrn,
)
from .turbsim import IDENTITY_BLUR, BlurSpec, DegradationConfig
from .util import derive_seed, numpy_rng

log = logging.getLogger(__name__)

RUN_ROOT_ENV = "TURBFACE_RUN_ROOT"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _default_out(command: str, cfg: RunConfig) -> Path:
    root = os.environ.get(RUN_ROOT_ENV, "runs")
    return Path(root) / command / config_mod.config_checksum(cfg)[:12]


def _prepare_run_dir(command: str, cfg: RunConfig, out) -> Path:
    run_dir = Path(out) if out else _default_out(command, cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_mod.echo_config(cfg, run_dir / "config.echo.yaml")
    return run_dir


def build_degradation_grid(deg, role: str, seed: int) -> list[DegradationConfig]:
    """Materialize the blur x warp-strength grid for one dataset role.

    deblur pairs get blur only (no warp, no noise), dewarp pairs get warp
    only, deturbulence pairs get the full pipeline.
    """
    rng = numpy_rng(derive_seed(seed, "grid", role))
    if role in ("deblur", "deturbulence"):
        kernels = []
        for _ in range(deg.isotropic_kernels):
            s = float(rng.uniform(deg.gaussian_sigma_min, deg.gaussian_sigma_max))
            kernels.append(BlurSpec("gaussian", deg.gaussian_kernel_size, s, s, 0.0))
        for _ in range(deg.anisotropic_kernels):
            sx, sy = rng.uniform(deg.gaussian_sigma_min, deg.gaussian_sigma_max, 2)
            theta = float(rng.uniform(0.0, np.pi))
            kernels.append(
                BlurSpec("gaussian", deg.gaussian_kernel_size, float(sx), float(sy), theta)
            )
        odd_sizes = list(range(deg.motion_size_min | 1, deg.motion_size_max + 1, 2))
        for _ in range(deg.motion_kernels):
            kernels.append(BlurSpec("motion", int(rng.choice(odd_sizes))))
    else:
        kernels = [IDENTITY_BLUR]
    ms = list(deg.m_grid) if role in ("dewarp", "deturbulence") else [0]
    noise = deg.noise_std if role == "deturbulence" else 0.0
    grid = [
        DegradationConfig(
            sigma=deg.sigma,
            eta=deg.eta,
            patch_count=deg.patch_count,
            iterations=int(m),
            noise_std=noise,
            blur=kernel,
            seed=derive_seed(seed, role, i),
        )
        for i, (kernel, m) in enumerate(product(kernels, ms))
    ]
    if deg.grid_subsample is not None and deg.grid_subsample < len(grid):
        keep = rng.choice(len(grid), size=deg.grid_subsample, replace=False)
        grid = [grid[i] for i in sorted(keep)]
    return grid


# ------------------------------------------------------------- commands

def cmd_degrade(cfg: RunConfig, clean_dir, out_dir) -> dict:
    """Generate degraded datasets (one manifest per configured role)."""
    clean_dir = Path(clean_dir) if clean_dir else (cfg.data.clean_dir and Path(cfg.data.clean_dir))
    if not clean_dir:
        raise ConfigError("missing config key data.clean_dir (or --clean-dir flag)")
    if not Path(clean_dir).is_dir():
        raise ConfigError(f"clean_dir {clean_dir} is not a directory")
    run_dir = _prepare_run_dir("degrade", cfg, out_dir)
    manifests = {}
    for role in cfg.degrade.roles:
        grid = build_degradation_grid(cfg.degrade, role, cfg.seed)
        manifest = turbsim.generate_dataset(
            clean_dir,
            grid,
            run_dir / role,
            image_size=cfg.data.image_size,
            master_seed=derive_seed(cfg.seed, "dataset", role),
        )
        n = len(imgio.read_manifest(manifest))
        manifests[role] = manifest
        print(f"degrade[{role}]: {n} pairs -> {manifest}")
    return manifests


def cmd_train(cfg: RunConfig, which: str, out_dir, iterations=None, resume=False, S=None) -> Path:
    """Train one network and write checkpoints, loss log, and loss figure."""
    section = getattr(cfg.train, which)
    if section.manifest is None:
        raise ConfigError(f"missing config key train.{which}.manifest")
    if which == "tdrn":
        for key in ("dbn_checkpoint", "gdrn_checkpoint"):
            if getattr(section, key) is None:
                raise ConfigError(f"missing config key train.tdrn.{key}")
    run_dir = _prepare_run_dir(f"train-{which}", cfg, out_dir)
    ds = PairDataset.from_manifest(section.manifest, ROLE_FOR_KIND[which])
    tcfg = TrainConfig(
        learning_rate=section.learning_rate,
        batch_size=section.batch_size,
        iterations=iterations if iterations is not None else section.iterations,
        S=S if S is not None else cfg.priors.S,
        seed=cfg.seed,
        checkpoint_interval=section.checkpoint_interval,
        dropout=cfg.priors.dropout_rate,
        loss_weights=LossWeights(cfg.loss.lambda_c, cfg.loss.lambda_g, cfg.loss.lambda_p),
        feature_seed=cfg.eval.feature_seed,
    )
    resume_path = latest_checkpoint(run_dir, which) if resume else None
    if resume_path is not None:
        print(f"resuming from {resume_path}")
    if which == "tdrn":
        result = train_tdrn(
            ds, section.dbn_checkpoint, section.gdrn_checkpoint, tcfg, run_dir, resume_path
        )
    else:
        result = train_restorer(which, ds, tcfg, run_dir, resume_path)
    report.plot_loss_log(read_loss_log(result.log_path), run_dir / f"{which}_loss.png")
    print(f"train[{which}]: {tcfg.iterations} iterations -> {result.checkpoint_path}")
    return result.checkpoint_path


def cmd_restore(cfg: RunConfig, dbn, gdrn, tdrn, input_path, out_dir, S=None, seed=None) -> list:
    """Restore a file or directory of files; filenames are preserved."""
    run_dir = _prepare_run_dir("restore", cfg, out_dir)
    input_path = Path(input_path)
    if input_path.is_dir():
        files = sorted(p for p in input_path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    else:
        files = [input_path]
    S = S if S is not None else cfg.priors.S
    seed = seed if seed is not None else cfg.seed
    written = []
    for path in files:
        try:
            img = imgio.read_image(path)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable input %s: %s", path, exc)
            continue
        out = restore(img, dbn, gdrn, tdrn, S=S, seed=derive_seed(seed, path.name))
        target = run_dir / f"{path.stem}.png"
        imgio.write_image(target, out)
        written.append(target)
    print(f"restore: {len(written)} image(s) -> {run_dir}")
    return written


def cmd_evaluate(cfg: RunConfig, manifest, dbn, gdrn, tdrn, out_dir, S=None) -> Path:
    """Score restorations of every manifest pair; write report + figures."""
    run_dir = _prepare_run_dir("evaluate", cfg, out_dir)
    checkpoints = None
    if dbn or gdrn or tdrn:
        if not (dbn and gdrn and tdrn):
            raise ConfigError("evaluate needs either all of --dbn/--gdrn/--tdrn or none")
        checkpoints = {"dbn": dbn, "gdrn": gdrn, "tdrn": tdrn}
    feat = FeatureExtractor(seed=cfg.eval.feature_seed)
    rep = evaluate_dataset(
        manifest,
        checkpoints,
        feat,
        out_dir=run_dir,
        S=S if S is not None else cfg.priors.S,
        seed=cfg.seed,
        extra_meta={"config_checksum": config_mod.config_checksum(cfg)},
    )
    print(
        f"evaluate: {rep.aggregate['count']} rows, mean psnr {rep.aggregate['psnr']:.2f} dB "
        f"-> {run_dir / 'report.csv'}"
    )
    return run_dir / "report.csv"


def cmd_ablate(cfg: RunConfig, out_dir) -> Path:
    """Train the restorer variants and write the comparison report."""
    ab = cfg.ablate
    for key in ("train_manifest", "test_manifest"):
        if getattr(ab, key) is None:
            raise ConfigError(f"missing config key ablate.{key}")
    run_dir = _prepare_run_dir("ablate", cfg, out_dir)
    ds_train = PairDataset.from_manifest(ab.train_manifest, "deturbulence")
    ds_test = PairDataset.from_manifest(ab.test_manifest, "deturbulence")
    acfg = AblationConfig(
        iterations=ab.iterations,
        prior_iterations=ab.prior_iterations,
        batch_size=ab.batch_size,
        S=cfg.priors.S,
        dropout=cfg.priors.dropout_rate,
        seeds=tuple(ab.seeds),
        loss_weights=LossWeights(cfg.loss.lambda_c, cfg.loss.lambda_g, cfg.loss.lambda_p),
        feature_seed=cfg.eval.feature_seed,
        master_seed=cfg.seed,
        dbn_checkpoint=ab.dbn_checkpoint,
        gdrn_checkpoint=ab.gdrn_checkpoint,
    )
    rows, detail = run_ablation(ds_train, ds_test, acfg)
    report.write_ablation_report(
        rows,
        run_dir,
        meta={
            "seeds": list(ab.seeds),
            "iterations": ab.iterations,
            "per_seed": detail,
            "config_checksum": config_mod.config_checksum(cfg),
        },
    )
    for row in rows:
        print(
            f"ablate[{row['variant']}]: psnr {row['psnr']:.2f} dB  ssim {row['ssim']:.3f}  "
            f"dvgg {row['dvgg']:.4f}"
        )
    return run_dir / "ablation.csv"


# ------------------------------------------------------------- argparse

def _add_common(parser):
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="run directory (default under $TURBFACE_RUN_ROOT)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="turbface",
        description="Synthesize, restore, and evaluate turbulence-degraded face images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="generate degraded datasets")
    _add_common(p)
    p.add_argument("--clean-dir", help="directory of clean images")

    p = sub.add_parser("train", help="train one network")
    p.add_argument("which", choices=["dbn", "gdrn", "tdrn"])
    _add_common(p)
    p.add_argument("--iterations", type=int, help="override iteration count")
    p.add_argument("--S", type=int, help="stochastic passes per prior estimate")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.add_argument("--manifest", help="override the training manifest path")
    p.add_argument("--dbn", help="override train.tdrn.dbn_checkpoint")
    p.add_argument("--gdrn", help="override train.tdrn.gdrn_checkpoint")

    p = sub.add_parser("restore", help="restore degraded image(s)")
    _add_common(p)
    p.add_argument("--dbn", required=True)
    p.add_argument("--gdrn", required=True)
    p.add_argument("--tdrn", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--S", type=int)

    p = sub.add_parser("evaluate", help="score restorations against ground truth")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--dbn")
    p.add_argument("--gdrn")
    p.add_argument("--tdrn")
    p.add_argument("--S", type=int)

    p = sub.add_parser("ablate", help="run the restorer-variant comparison")
    _add_common(p)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.command == "degrade":
            cmd_degrade(cfg, args.clean_dir, args.out)
        elif args.command == "train":
            if args.manifest:
                section = getattr(cfg.train, args.which)
                cfg = _replace_section(cfg, args.which, replace(section, manifest=args.manifest))
            if args.which == "tdrn" and (args.dbn or args.gdrn):
                section = cfg.train.tdrn
                if args.dbn:
                    section = replace(section, dbn_checkpoint=args.dbn)
                if args.gdrn:
                    section = replace(section, gdrn_checkpoint=args.gdrn)
                cfg = _replace_section(cfg, "tdrn", section)
            cmd_train(cfg, args.which, args.out, iterations=args.iterations, resume=args.resume, S=args.S)
        elif args.command == "restore":
            cmd_restore(cfg, args.dbn, args.gdrn, args.tdrn, args.input, args.out, S=args.S, seed=args.seed)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.manifest, args.dbn, args.gdrn, args.tdrn, args.out, S=args.S)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.out)
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _replace_section(cfg: RunConfig, which: str, section) -> RunConfig:
    train = replace(cfg.train, **{which: section})
    return replace(cfg, train=train)


if __name__ == "__main__":
    sys.exit(main())

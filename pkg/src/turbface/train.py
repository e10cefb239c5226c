"""Training loops and the end-to-end restoration procedure.

The two priors networks train on their specialty pairs with plain L1 and
dropout active. The fusion restorer trains on degraded/clean pairs: per
batch, the frozen priors networks produce per-image variance maps that
are stacked with the degraded image, and the restorer plus its three
confidence blocks update under the combined loss. Every logged number is
a pure function of (config, seeds, dataset); only wall_ms is exempt.
"""

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import arch, priors
from .arch import Checkpoint, load_checkpoint, save_checkpoint
from .evaluate import feature_distance, psnr, ssim
from .losses import FeatureExtractor, LossWeights, l1_loss, total_loss
from .util import derive_seed, to_image, to_tensor, torch_generator, validate_image

log = logging.getLogger(__name__)

ROLE_FOR_KIND = {"dbn": "deblur", "gdrn": "dewarp", "tdrn": "deturbulence"}
PAPER_ITERATIONS = {"dbn": 100_000, "gdrn": 100_000, "tdrn": 150_000}
LOG_FIELDS = ("iter", "L1", "Lg", "Lp", "Lfinal", "wall_ms")


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 10
    iterations: int = 1000
    S: int = 10
    seed: int = 0
    checkpoint_interval: int = 1000
    dropout: float = 0.2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    loss_weights: LossWeights = field(default_factory=LossWeights)
    feature_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def default_train_config(which: str, **overrides) -> TrainConfig:
    """Paper-schedule defaults for one of dbn/gdrn/tdrn."""
    base = dict(iterations=PAPER_ITERATIONS[which])
    base.update(overrides)
    return TrainConfig(**base)


class PairDataset:
    """Lazy (input, target) image pairs with a declared role.

    role is one of deblur (blurred -> clean), dewarp (warped -> clean),
    deturbulence (fully degraded -> clean). Entries are either path pairs
    (loaded and cached on first access) or in-memory array pairs.
    """

    ROLES = ("deblur", "dewarp", "deturbulence")

    def __init__(self, pairs: list, role: str):
        if role not in self.ROLES:
            raise ValueError(f"role must be one of {self.ROLES}, got {role!r}")
        if not pairs:
            raise ValueError("dataset is empty")
        self.pairs = list(pairs)
        self.role = role
        self._cache: dict = {}
        self._shape = None

    @classmethod
    def from_manifest(cls, manifest_path, role: str) -> "PairDataset":
        from . import imgio

        records = imgio.read_manifest(manifest_path)
        return cls([(r["distorted_path"], r["clean_path"]) for r in records], role)

    @classmethod
    def from_arrays(cls, pairs: list, role: str) -> "PairDataset":
        ds = cls(pairs, role)
        for i, (x, y) in enumerate(pairs):
            ds._cache[i] = (validate_image(x), validate_image(y))
        return ds

    def __len__(self):
        return len(self.pairs)

    def get(self, i: int):
        if i not in self._cache:
            from . import imgio

            x_path, y_path = self.pairs[i]
            self._cache[i] = (imgio.read_image(x_path), imgio.read_image(y_path))
        x, y = self._cache[i]
        if self._shape is None:
            self._shape = x.shape
        if x.shape != self._shape or y.shape != self._shape:
            raise ValueError(f"pair {i} has shape {x.shape}/{y.shape}, expected {self._shape}")
        return x, y


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    checkpoint_path: Path | None
    log: list
    log_path: Path | None


# -------------------------------------------------------------- plumbing

def _batch(ds: PairDataset, idxs) -> tuple[torch.Tensor, torch.Tensor]:
    xs, ys = [], []
    for j in idxs:
        x, y = ds.get(int(j))
        xs.append(to_tensor(x))
        ys.append(to_tensor(y))
    return torch.cat(xs), torch.cat(ys)


def _generator_state(gen: torch.Generator) -> bytes:
    return gen.get_state().numpy().tobytes()


def _set_generator_state(gen: torch.Generator, data: bytes) -> None:
    gen.set_state(torch.from_numpy(np.frombuffer(data, dtype=np.uint8).copy()))


def _optimizer_payload(optimizer, names) -> dict:
    sd = optimizer.state_dict()
    group = sd["param_groups"][0]
    hyper = {"lr": group["lr"], "betas": list(group["betas"]), "eps": group["eps"]}
    state = {}
    for pos, name in enumerate(names):
        st = sd["state"].get(pos)
        if st is None:
            continue
        step = st["step"]
        state[name] = {
            "step": float(step.item() if torch.is_tensor(step) else step),
            "exp_avg": st["exp_avg"],
            "exp_avg_sq": st["exp_avg_sq"],
        }
    return {"hyper": hyper, "state": state}


def _make_optimizer(params, cfg: TrainConfig, payload: dict | None, names):
    if payload is not None:
        hyper = payload["hyper"]
        opt = torch.optim.Adam(
            params, lr=hyper["lr"], betas=tuple(hyper["betas"]), eps=hyper["eps"]
        )
        sd = opt.state_dict()
        state = {}
        for pos, name in enumerate(names):
            if name in payload["state"]:
                st = payload["state"][name]
                state[pos] = {
                    "step": torch.tensor(st["step"]),
                    "exp_avg": st["exp_avg"].clone(),
                    "exp_avg_sq": st["exp_avg_sq"].clone(),
                }
        sd["state"] = state
        opt.load_state_dict(sd)
        return opt
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.eps)


class _LossLog:
    """Append-only JSONL loss log; one record per iteration."""

    def __init__(self, path: Path | None):
        self.path = path
        self.records: list[dict] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


def read_loss_log(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _ckpt_path(run_dir: Path, kind: str, iteration: int) -> Path:
    return run_dir / f"{kind}_{iteration:07d}.ckpt"


def latest_checkpoint(run_dir, kind: str) -> Path | None:
    run_dir = Path(run_dir)
    candidates = sorted(run_dir.glob(f"{kind}_*.ckpt"))
    return candidates[-1] if candidates else None


def _as_checkpoint(src, expected_kind: str | None = None) -> Checkpoint:
    if isinstance(src, Checkpoint):
        if expected_kind and src.spec.kind != expected_kind:
            raise arch.CheckpointError(
                f"expected a {expected_kind!r} checkpoint, got {src.spec.kind!r}"
            )
        return src
    return load_checkpoint(src, expected_kind=expected_kind)


# -------------------------------------------------------- priors helpers

class _PriorCache:
    """Per-image prior maps, keyed by dataset index.

    Pass seeds derive from (prior_seed, index) only, so a cached map is
    bit-identical to recomputing it inside the loop; the cache is a pure
    speedup.
    """

    def __init__(self, dbn, gdrn, S: int, prior_seed: int):
        self.dbn = dbn
        self.gdrn = gdrn
        self.S = S
        self.prior_seed = prior_seed
        self._maps: dict[int, tuple[torch.Tensor, torch.Tensor]] = {}

    def get(self, index: int, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if index not in self._maps:
            seed = derive_seed(self.prior_seed, index)
            b = priors.prior_map_tensor(self.dbn, x, self.S, seed)
            d = priors.prior_map_tensor(self.gdrn, x, self.S, seed)
            self._maps[index] = (b, d)
        return self._maps[index]


def _stack_prior_inputs(x, idxs, cache: _PriorCache | None, use_priors: str) -> torch.Tensor:
    if use_priors == "none":
        return x
    rows = []
    for row, j in enumerate(idxs):
        xi = x[row : row + 1]
        b, d = cache.get(int(j), xi)
        if use_priors == "b":
            rows.append(torch.cat([xi, b], dim=1))
        else:
            rows.append(torch.cat([xi, b, d], dim=1))
    return torch.cat(rows)


# ------------------------------------------------------- priors training

def train_restorer(kind: str, ds: PairDataset, cfg: TrainConfig, run_dir=None, resume=None) -> TrainResult:
    """Train the deblur (dbn) or dewarp (gdrn) network with L1 and Adam.

    Dropout stays active in train mode; a loss record is emitted per
    iteration and checkpoints are written at cfg.checkpoint_interval into
    run_dir. ``resume`` continues bit-exactly from a saved checkpoint.
    """
    if kind not in ("dbn", "gdrn"):
        raise ValueError(f"kind must be dbn or gdrn, got {kind!r}")
    if ds.role != ROLE_FOR_KIND[kind]:
        raise ValueError(f"{kind} expects a {ROLE_FOR_KIND[kind]!r} dataset, got {ds.role!r}")
    run_dir = Path(run_dir) if run_dir is not None else None

    builder = arch.build_dbn if kind == "dbn" else arch.build_gdrn
    net = builder(dropout=cfg.dropout, init_seed=derive_seed(cfg.seed, kind, "init"))
    names = [n for n, _ in net.named_parameters()]
    g_train = torch_generator(derive_seed(cfg.seed, kind, "train"))

    start_iter = 0
    opt_payload = None
    if resume is not None:
        ckpt = _as_checkpoint(resume, expected_kind=kind)
        net.load_state_dict(ckpt.params)
        opt_payload = ckpt.optimizer
        if ckpt.rng_state:
            _set_generator_state(g_train, ckpt.rng_state)
        start_iter = ckpt.iteration
    optimizer = _make_optimizer(list(net.parameters()), cfg, opt_payload, names)

    logger = _LossLog(run_dir / f"{kind}_loss.jsonl" if run_dir else None)
    ckpt_path = None

    def snapshot(iteration):
        return Checkpoint(
            spec=net.spec,
            params={k: v.detach().clone() for k, v in net.state_dict().items()},
            optimizer=_optimizer_payload(optimizer, names),
            iteration=iteration,
            rng_state=_generator_state(g_train),
        )

    for it in range(start_iter, cfg.iterations):
        t0 = time.perf_counter()
        idxs = torch.randint(len(ds), (cfg.batch_size,), generator=g_train)
        x, y = _batch(ds, idxs)
        out = arch.forward(net, x, "train", g_train)
        loss = l1_loss(y, out)
        val = loss.item()
        if not np.isfinite(val):
            raise TrainingDiverged(f"{kind} loss became {val} at iteration {it}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        logger.append(
            {
                "iter": it,
                "L1": val,
                "Lg": 0.0,
                "Lp": 0.0,
                "Lfinal": val,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )
        if run_dir is not None and (it + 1) % cfg.checkpoint_interval == 0:
            ckpt_path = _ckpt_path(run_dir, kind, it + 1)
            save_checkpoint(snapshot(it + 1), ckpt_path)

    final = snapshot(cfg.iterations)
    if run_dir is not None:
        ckpt_path = _ckpt_path(run_dir, kind, cfg.iterations)
        save_checkpoint(final, ckpt_path)
    return TrainResult(final, ckpt_path, logger.records, logger.path)


# ------------------------------------------------------- fusion training

def _build_cbs(seed: int) -> dict:
    return {
        key: arch.build_confidence_block(init_seed=derive_seed(seed, "cb", key))
        for key in ("h", "v", "s")
    }


def _train_fusion(
    ds: PairDataset,
    cfg: TrainConfig,
    *,
    in_channels: int,
    use_priors: str,
    dbn=None,
    gdrn=None,
    kind_label: str = "tdrn",
    run_dir=None,
    resume=None,
) -> TrainResult:
    if ds.role != "deturbulence":
        raise ValueError(f"fusion training expects a deturbulence dataset, got {ds.role!r}")
    if use_priors != "none" and (dbn is None or gdrn is None):
        raise ValueError("prior-fed variants need both priors networks")
    run_dir = Path(run_dir) if run_dir is not None else None
    weights = cfg.loss_weights

    net = arch.build_tdrn(in_channels, init_seed=derive_seed(cfg.seed, "tdrn", "init"))
    cbs = _build_cbs(cfg.seed) if weights.lambda_g > 0 else None
    feat = FeatureExtractor(seed=cfg.feature_seed) if weights.lambda_p > 0 else None

    params = list(net.parameters())
    names = [f"tdrn.{n}" for n, _ in net.named_parameters()]
    if cbs is not None:
        for key in ("h", "v", "s"):
            params += list(cbs[key].parameters())
            names += [f"cb_{key}.{n}" for n, _ in cbs[key].named_parameters()]
    g_train = torch_generator(derive_seed(cfg.seed, "tdrn", "train"))

    start_iter = 0
    opt_payload = None
    if resume is not None:
        ckpt = _as_checkpoint(resume, expected_kind="tdrn")
        state = ckpt.params
        net.load_state_dict({k[5:]: v for k, v in state.items() if k.startswith("tdrn.")})
        if cbs is not None:
            for key in ("h", "v", "s"):
                prefix = f"cb_{key}."
                cbs[key].load_state_dict(
                    {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}
                )
        opt_payload = ckpt.optimizer
        if ckpt.rng_state:
            _set_generator_state(g_train, ckpt.rng_state)
        start_iter = ckpt.iteration
    optimizer = _make_optimizer(params, cfg, opt_payload, names)

    freeze_hashes = None
    cache = None
    if use_priors != "none":
        freeze_hashes = (arch.params_hash(dbn.state_dict()), arch.params_hash(gdrn.state_dict()))
        cache = _PriorCache(dbn, gdrn, cfg.S, derive_seed(cfg.seed, "priors"))

    def check_frozen():
        if freeze_hashes is None:
            return
        now = (arch.params_hash(dbn.state_dict()), arch.params_hash(gdrn.state_dict()))
        if now != freeze_hashes:
            raise RuntimeError("priors network parameters changed during fusion training")

    logger = _LossLog(run_dir / f"{kind_label}_loss.jsonl" if run_dir else None)
    ckpt_path = None

    def snapshot(iteration):
        state = {f"tdrn.{k}": v.detach().clone() for k, v in net.state_dict().items()}
        if cbs is not None:
            for key in ("h", "v", "s"):
                state.update(
                    {f"cb_{key}.{k}": v.detach().clone() for k, v in cbs[key].state_dict().items()}
                )
        return Checkpoint(
            spec=net.spec,
            params=state,
            optimizer=_optimizer_payload(optimizer, names),
            iteration=iteration,
            rng_state=_generator_state(g_train),
        )

    for it in range(start_iter, cfg.iterations):
        t0 = time.perf_counter()
        idxs = torch.randint(len(ds), (cfg.batch_size,), generator=g_train)
        x, y = _batch(ds, idxs)
        inp = _stack_prior_inputs(x, idxs, cache, use_priors)
        out = arch.forward(net, inp, "train", g_train)
        loss, diag = total_loss(y, out, cbs, feat, weights)
        val = loss.item()
        if not np.isfinite(val):
            raise TrainingDiverged(f"fusion loss became {val} at iteration {it}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        logger.append(
            {
                "iter": it,
                "L1": diag["l1"].item(),
                "Lg": diag["lg"].item() if diag["lg"] is not None else 0.0,
                "Lp": diag["lp"].item() if diag["lp"] is not None else 0.0,
                "Lfinal": val,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )
        if run_dir is not None and (it + 1) % cfg.checkpoint_interval == 0:
            check_frozen()
            ckpt_path = _ckpt_path(run_dir, kind_label, it + 1)
            save_checkpoint(snapshot(it + 1), ckpt_path)

    check_frozen()
    final = snapshot(cfg.iterations)
    if run_dir is not None:
        ckpt_path = _ckpt_path(run_dir, kind_label, cfg.iterations)
        save_checkpoint(final, ckpt_path)
    return TrainResult(final, ckpt_path, logger.records, logger.path)


def train_tdrn(ds: PairDataset, dbn_ckpt, gdrn_ckpt, cfg: TrainConfig, run_dir=None, resume=None) -> TrainResult:
    """Train the fusion restorer against frozen priors networks.

    Per batch, per-image blur/distortion maps come from S stochastic
    passes of the loaded dbn/gdrn (their parameters are hash-checked to
    stay frozen); the restorer and the three confidence blocks update
    jointly under the combined loss.
    """
    if dbn_ckpt is None or gdrn_ckpt is None:
        raise ValueError("train_tdrn requires both dbn and gdrn checkpoints")
    dbn = arch.net_from_checkpoint(_as_checkpoint(dbn_ckpt, "dbn"))
    gdrn = arch.net_from_checkpoint(_as_checkpoint(gdrn_ckpt, "gdrn"))
    return _train_fusion(
        ds,
        cfg,
        in_channels=5,
        use_priors="bd",
        dbn=dbn,
        gdrn=gdrn,
        run_dir=run_dir,
        resume=resume,
    )


# -------------------------------------------------------------- restore

def _fusion_state_from_checkpoint(ckpt: Checkpoint):
    net = arch.build_tdrn(ckpt.spec.in_channels)
    net.load_state_dict({k[5:]: v for k, v in ckpt.params.items() if k.startswith("tdrn.")})
    return net


def restore_with_nets(
    img: np.ndarray, net, dbn, gdrn, use_priors: str = "bd", S: int = 10, seed: int = 0
) -> np.ndarray:
    """Run one degraded image through a fusion net with fresh priors."""
    img = validate_image(img)
    x = to_tensor(img)
    if use_priors == "none":
        inp = x
    else:
        b, d = priors.estimate_priors(dbn, gdrn, img, S=S, seed=seed)
        maps = [torch.from_numpy(b).to(torch.float32)[None, None]]
        if use_priors == "bd":
            maps.append(torch.from_numpy(d).to(torch.float32)[None, None])
        inp = torch.cat([x, *maps], dim=1)
    with torch.no_grad():
        out = arch.forward(net, inp, "deterministic")
    return to_image(out, clamp=True)


def restore(img: np.ndarray, dbn_ckpt, gdrn_ckpt, tdrn_ckpt, S: int = 10, seed: int = 0) -> np.ndarray:
    """Restore one degraded image: estimate priors with dropout active,
    then run the fusion restorer deterministically; output in [0, 1]."""
    dbn = arch.net_from_checkpoint(_as_checkpoint(dbn_ckpt, "dbn"))
    gdrn = arch.net_from_checkpoint(_as_checkpoint(gdrn_ckpt, "gdrn"))
    tdrn_loaded = _as_checkpoint(tdrn_ckpt, "tdrn")
    net = _fusion_state_from_checkpoint(tdrn_loaded)
    return restore_with_nets(img, net, dbn, gdrn, use_priors="bd", S=S, seed=seed)


# -------------------------------------------------------------- ablation

ABLATION_VARIANTS = (
    ("bn", 3, "none", False),
    ("bn+b", 4, "b", False),
    ("bn+b+d", 5, "bd", False),
    ("tdrn", 5, "bd", True),
)


@dataclass
class AblationConfig:
    iterations: int = 400
    prior_iterations: int = 200
    learning_rate: float = 2e-4
    batch_size: int = 8
    S: int = 10
    dropout: float = 0.2
    seeds: tuple = (0, 1, 2)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    feature_seed: int = 0
    master_seed: int = 0
    dbn_checkpoint: object = None
    gdrn_checkpoint: object = None
    # knobs for the self-trained priors nets (used when no checkpoints given)
    prior_blur_sigma: float = 2.0
    prior_warp_iterations: int = 60


def run_ablation(ds_train: PairDataset, ds_test: PairDataset, cfg: AblationConfig, out_dir=None):
    """Train the four restorer variants and score them on the test pairs.

    Variants: plain 3-channel net (L1 + perceptual loss), + blur prior
    (4 channels), + both priors (5 channels), and the full setup with the
    confidence-guided loss. Metrics are averaged over cfg.seeds; the
    degraded-input baseline row comes first. Returns (variant_rows,
    per_seed_detail) and writes the report when out_dir is given.
    """
    feat = FeatureExtractor(seed=cfg.feature_seed)

    if cfg.dbn_checkpoint is not None and cfg.gdrn_checkpoint is not None:
        dbn = arch.net_from_checkpoint(_as_checkpoint(cfg.dbn_checkpoint, "dbn"))
        gdrn = arch.net_from_checkpoint(_as_checkpoint(cfg.gdrn_checkpoint, "gdrn"))
    else:
        dbn, gdrn = _quick_prior_nets(ds_train, cfg)

    def eval_net(net, use_priors):
        scores = []
        for i in range(len(ds_test)):
            x, y = ds_test.get(i)
            restored = restore_with_nets(
                x, net, dbn, gdrn, use_priors, S=cfg.S,
                seed=derive_seed(cfg.master_seed, "eval", i),
            )
            scores.append(
                (psnr(y, restored), ssim(y, restored), feature_distance(feat, y, restored))
            )
        arr = np.array(scores)
        return arr.mean(axis=0)

    baseline = []
    for i in range(len(ds_test)):
        x, y = ds_test.get(i)
        baseline.append((psnr(y, x), ssim(y, x), feature_distance(feat, y, x)))
    baseline = np.array(baseline).mean(axis=0)

    detail = {name: [] for name, *_ in ABLATION_VARIANTS}
    for seed in cfg.seeds:
        for name, in_ch, use_priors, full_loss in ABLATION_VARIANTS:
            weights = (
                cfg.loss_weights
                if full_loss
                else replace(cfg.loss_weights, lambda_g=0.0)
            )
            tcfg = TrainConfig(
                learning_rate=cfg.learning_rate,
                batch_size=min(cfg.batch_size, len(ds_train)),
                iterations=cfg.iterations,
                S=cfg.S,
                seed=derive_seed(cfg.master_seed, "variant", name, seed),
                checkpoint_interval=max(cfg.iterations, 1),
                dropout=cfg.dropout,
                loss_weights=weights,
                feature_seed=cfg.feature_seed,
            )
            result = _train_fusion(
                ds_train,
                tcfg,
                in_channels=in_ch,
                use_priors=use_priors,
                dbn=dbn if use_priors != "none" else None,
                gdrn=gdrn if use_priors != "none" else None,
            )
            net = _fusion_state_from_checkpoint(result.checkpoint)
            detail[name].append(eval_net(net, use_priors))
            log.info("ablation %s seed %s done", name, seed)

    rows = [
        {
            "variant": "distorted",
            "psnr": float(baseline[0]),
            "ssim": float(baseline[1]),
            "dvgg": float(baseline[2]),
        }
    ]
    for name, *_ in ABLATION_VARIANTS:
        mean = np.mean(detail[name], axis=0)
        rows.append(
            {
                "variant": name,
                "psnr": float(mean[0]),
                "ssim": float(mean[1]),
                "dvgg": float(mean[2]),
            }
        )
    if out_dir is not None:
        from . import report as report_mod

        report_mod.write_ablation_report(
            rows, out_dir, meta={"seeds": list(cfg.seeds), "iterations": cfg.iterations}
        )
    per_seed = {
        name: [[float(v) for v in run] for run in runs] for name, runs in detail.items()
    }
    return rows, per_seed


def _quick_prior_nets(ds_train: PairDataset, cfg: AblationConfig):
    """Train throwaway priors nets on specialty pairs synthesized from the
    clean targets (blur-only for the deblurrer, warp-only for the dewarper)."""
    from .turbsim import BlurSpec, DegradationConfig, degrade

    deblur_pairs, dewarp_pairs = [], []
    for i in range(len(ds_train)):
        _, clean = ds_train.get(i)
        bcfg = DegradationConfig(
            blur=BlurSpec("gaussian", 7, cfg.prior_blur_sigma, cfg.prior_blur_sigma, 0.0),
            iterations=0,
            noise_std=0.0,
            seed=derive_seed(cfg.master_seed, "prior-blur", i),
        )
        wcfg = DegradationConfig(
            iterations=cfg.prior_warp_iterations,
            noise_std=0.0,
            seed=derive_seed(cfg.master_seed, "prior-warp", i),
        )
        deblur_pairs.append((degrade(clean, bcfg)[0], clean))
        dewarp_pairs.append((degrade(clean, wcfg)[0], clean))

    base = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=min(cfg.batch_size, len(ds_train)),
        iterations=cfg.prior_iterations,
        S=cfg.S,
        seed=derive_seed(cfg.master_seed, "prior-nets"),
        checkpoint_interval=max(cfg.prior_iterations, 1),
        dropout=cfg.dropout,
    )
    dbn_res = train_restorer("dbn", PairDataset.from_arrays(deblur_pairs, "deblur"), base)
    gdrn_res = train_restorer("gdrn", PairDataset.from_arrays(dewarp_pairs, "dewarp"), base)
    return arch.net_from_checkpoint(dbn_res.checkpoint), arch.net_from_checkpoint(gdrn_res.checkpoint)

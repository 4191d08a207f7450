"""Two-phase optimization: teacher pretraining, then weakly-supervised student
training with frozen-teacher distillation, plus evaluation and checkpointing.

Determinism contract: a fixed seed fixes the parameter init, the per-epoch
shuffle, the augmentation draws, and the Chamfer subsampling, so reruns on one
machine produce bit-identical loss curves and resuming from a checkpoint
reproduces the uninterrupted trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import Checkpoint, checkpoint_from_model, load_optimizer_state
from .data import ColorImage, DepthMap, SamplePair, augment, downsample_image
from .errors import ConfigError, TrainingDivergedError
from .losses import (
    DEFAULT_AFFINITY_CAP,
    DEFAULT_CHAMFER_MAX_POINTS,
    LossWeights,
    distill_loss,
    mden_loss,
    reconstruction_loss,
    total_loss,
)
from .metrics import aggregate_reports, compute_metrics, mirror_average_predict
from .networks import DepthNet, NetworkConfig, color_to_tensor, normalize_depth_input
from .resize import bilinear_resize, scaled_size

ALL_LOSS_TERMS = ("LR", "HR", "net", "distill")

# stream tags so derived rngs never collide
_TAG_SPLIT, _TAG_SHUFFLE, _TAG_AUGMENT, _TAG_CHAMFER = 11, 12, 13, 14


@dataclass
class TrainingConfig:
    """Optimization recipe; defaults follow the training protocol."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    epochs: int = 100
    batch_size: int = 4
    max_lr: float = 3.5e-4
    weight_decay: float = 1e-2
    warmup_frac: float = 0.3
    min_lr_ratio: float = 1.0 / 25.0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    mu: float = 0.5
    seed: int = 0
    ablation: tuple[str, ...] = ALL_LOSS_TERMS
    augment: bool = True
    val_fraction: float = 0.1
    eval_every: int = 1
    grad_clip: float | None = None
    chamfer_max_points: int = DEFAULT_CHAMFER_MAX_POINTS
    affinity_cap: int = DEFAULT_AFFINITY_CAP

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.max_lr <= 0:
            raise ConfigError("max_lr must be positive")
        if not (0.0 <= self.warmup_frac <= 1.0):
            raise ConfigError("warmup_frac must lie in [0, 1]")
        if not (0.0 < self.min_lr_ratio <= 1.0):
            raise ConfigError("min_lr_ratio must lie in (0, 1]")
        if not (0.0 < self.mu < 1.0):
            raise ConfigError("mu must lie in (0, 1)")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must lie in [0, 1)")
        self.ablation = tuple(self.ablation)
        unknown = set(self.ablation) - set(ALL_LOSS_TERMS)
        if unknown:
            raise ConfigError(f"unknown loss terms in ablation mask: {sorted(unknown)}")


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list[dict]

    @property
    def checkpoint(self) -> Checkpoint:
        return self.best


def one_cycle_lr(step: int, total_steps: int, max_lr: float,
                 warmup_frac: float = 0.3, min_lr_ratio: float = 1.0 / 25.0) -> float:
    """1-cycle schedule over total steps: linear ramp from max_lr*min_lr_ratio
    up to max_lr at the warmup peak, then cosine anneal back down to the floor
    at the final step."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    step = min(max(step, 0), total_steps - 1)
    floor = max_lr * min_lr_ratio
    peak = int(round(warmup_frac * (total_steps - 1)))
    if step <= peak:
        t = 1.0 if peak == 0 else step / peak
        return floor + (max_lr - floor) * t
    t = (step - peak) / (total_steps - 1 - peak)
    return floor + (max_lr - floor) * 0.5 * (1.0 + math.cos(math.pi * t))


def split_dataset(n: int, val_fraction: float, seed: int):
    """Seeded shuffle split into (train_indices, val_indices)."""
    order = np.random.default_rng([seed, _TAG_SPLIT]).permutation(n)
    n_val = int(round(n * val_fraction))
    if n_val >= n:
        n_val = n - 1
    val = np.sort(order[:n_val]).tolist()
    train = np.sort(order[n_val:]).tolist()
    return train, val


def _augment_seed(seed: int, epoch: int, index: int):
    return [seed, _TAG_AUGMENT, epoch, index]


def _chamfer_seed(seed: int, epoch: int, step: int, sample: int) -> int:
    return int(np.random.default_rng([seed, _TAG_CHAMFER, epoch, step, sample]).integers(2**31))


def _batch_tensors(pairs: list[SamplePair], mu: float):
    """Stack a uniform-shape batch: HR color, LR gt values, LR gt masks."""
    shapes = {(p.color_hr.height, p.color_hr.width) for p in pairs}
    if len(shapes) != 1:
        raise ConfigError("batches require uniform image dims; got " + str(sorted(shapes)))
    x_hr = torch.stack([color_to_tensor(p.color_hr) for p in pairs])
    gt_vals = torch.stack([torch.from_numpy(p.depth_lr.values) for p in pairs])
    gt_mask = torch.stack([torch.from_numpy(p.depth_lr.valid) for p in pairs])
    return x_hr, gt_vals, gt_mask


def train_step(model: DepthNet, batch: list[SamplePair], config: TrainingConfig, *,
               optimizer: torch.optim.Optimizer, lr: float,
               teacher: DepthNet | None = None,
               epoch: int = 0, step: int = 0) -> dict:
    """One optimizer step on a batch of sample pairs.

    Per sample: the LR color input is the downsampled HR input; both pass
    through the shared-weight student; the frozen teacher digests the LR
    ground truth for distillation taps. The batch loss is the mean of the
    per-sample losses; parameters are updated in place with decoupled weight
    decay. Returns the loss breakdown.
    """
    for group in optimizer.param_groups:
        group["lr"] = lr
    want_distill = "distill" in config.ablation
    if want_distill and teacher is None:
        raise ConfigError("distillation enabled but no teacher provided")
    mden_terms = tuple(t for t in config.ablation if t != "distill")
    weights = config.loss_weights
    mu = config.mu

    x_hr, gt_vals, gt_mask = _batch_tensors(batch, mu)
    x_lr = bilinear_resize(x_hr, *scaled_size(x_hr.shape[-2], x_hr.shape[-1], mu))
    model.train()
    out_hr = model(x_hr)
    out_lr = model(x_lr)

    teacher_taps = None
    if want_distill:
        teacher.eval()
        with torch.no_grad():
            t_in = torch.stack([
                normalize_depth_input(p.depth_lr, teacher.config.d_min, teacher.config.d_max)
                for p in batch
            ])
            teacher_taps = teacher(t_in)["taps"]

    n = len(batch)
    sums = {"mden": 0.0, "LR": 0.0, "HR": 0.0, "net": 0.0, "distill": 0.0}
    batch_loss = None
    for b in range(n):
        m_loss, comps = mden_loss(
            out_hr["depth"][b], out_lr["depth"][b], gt_vals[b],
            out_hr["centers"][b], out_lr["centers"][b], mu, weights,
            enabled=mden_terms, gt_valid=gt_mask[b],
            chamfer_max_points=config.chamfer_max_points,
            chamfer_seed=_chamfer_seed(config.seed, epoch, step, b),
            return_components=True,
        )
        if want_distill:
            tap_keys = sorted(teacher_taps.keys())
            d_loss = distill_loss(
                [teacher_taps[k][b] for k in tap_keys],
                [out_lr["taps"][k][b] for k in tap_keys],
                weights.w_distill,
                cap=config.affinity_cap,
            )
        else:
            d_loss = torch.zeros(())
        sample_loss = total_loss(m_loss, d_loss)
        batch_loss = sample_loss if batch_loss is None else batch_loss + sample_loss
        sums["mden"] += float(m_loss.detach())
        sums["distill"] += float(d_loss.detach())
        for key in ("LR", "HR", "net"):
            comp = comps[key]
            sums[key] += float(comp.detach()) if isinstance(comp, torch.Tensor) else comp
    batch_loss = batch_loss / n

    if not torch.isfinite(batch_loss):
        raise TrainingDivergedError(
            f"non-finite loss at epoch {epoch} step {step}: components "
            + str({k: v / n for k, v in sums.items()})
        )
    optimizer.zero_grad(set_to_none=True)
    batch_loss.backward()
    if config.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
    optimizer.step()

    result = {k: v / n for k, v in sums.items()}
    result["loss"] = float(batch_loss.detach())
    result["lr"] = lr
    return result


def make_predictor(model: DepthNet):
    """Lightweight ColorImage -> DepthMap closure around a student model."""
    cfg = model.config

    def predict(img: ColorImage) -> DepthMap:
        was_training = model.training
        model.eval()
        try:
            with torch.no_grad():
                out = model(color_to_tensor(img).unsqueeze(0))
        finally:
            model.train(was_training)
        vals = out["depth"][0].numpy()
        return DepthMap(
            np.clip(vals, cfg.d_min, cfg.d_max),
            np.ones_like(vals, dtype=bool), cfg.d_min, cfg.d_max,
        )

    return predict


def evaluate(model_or_ckpt, dataset, *, input_res: str = "hr", mirror: bool = True,
             cap: float | None = None, crop=None, mu: float | None = None,
             names=None):
    """Mirror-averaged evaluation against the matching-resolution ground truth.

    input_res 'hr' feeds the HR color image and scores against depth_hr_eval;
    'lr' feeds the downsampled color image and scores against depth_lr.
    Returns (aggregate report, list of (name, report)).
    """
    model = model_or_ckpt.build_model() if isinstance(model_or_ckpt, Checkpoint) else model_or_ckpt
    if input_res not in ("hr", "lr"):
        raise ConfigError(f"input_res must be 'hr' or 'lr', got {input_res!r}")
    predict = make_predictor(model)
    if names is None:
        names = getattr(dataset, "names", None) or [f"{i:05d}" for i in range(len(dataset))]
    per_image = []
    for i in range(len(dataset)):
        pair = dataset[i]
        if input_res == "hr":
            img = pair.color_hr
            gt = pair.depth_hr_eval
            if gt is None:
                raise ConfigError("HR evaluation needs depth_hr_eval ground truth")
        else:
            img = downsample_image(pair.color_hr, mu if mu is not None else pair.mu)
            gt = pair.depth_lr
        pred = mirror_average_predict(predict, img) if mirror else predict(img)
        rep = compute_metrics(pred, gt, cap, crop, mirror_averaged=mirror)
        per_image.append((names[i], rep))
    return aggregate_reports([r for _, r in per_image]), per_image


def evaluate_drn(model: DepthNet, depth_maps, names=None):
    """Teacher reconstruction quality: predict each LR map from itself."""
    cfg = model.config
    model.eval()
    per_image = []
    if names is None:
        names = [f"{i:05d}" for i in range(len(depth_maps))]
    for i in range(len(depth_maps)):
        d = depth_maps[i]
        with torch.no_grad():
            out = model(normalize_depth_input(d, cfg.d_min, cfg.d_max).unsqueeze(0))
        vals = out["depth"][0].numpy()
        pred = DepthMap(np.clip(vals, cfg.d_min, cfg.d_max),
                        np.ones_like(vals, dtype=bool), cfg.d_min, cfg.d_max)
        per_image.append((names[i], compute_metrics(pred, d)))
    return aggregate_reports([r for _, r in per_image]), per_image


def _epoch_batches(indices: list[int], batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, _TAG_SHUFFLE, epoch]).permutation(len(indices))
    shuffled = [indices[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def pretrain_drn(depth_maps, config: TrainingConfig, *, resume_from: Checkpoint | None = None) -> TrainResult:
    """Phase one: train the depth-reconstruction teacher on LR depth maps.

    Input and target are the same LR ground-truth map; the loss is the same
    reconstruction loss the student branches use (bin regularizer included).
    Augmentation is off by default for this phase. Best checkpoint is chosen
    by held-out delta1.
    """
    net_cfg = config.network.drn_variant()
    torch.manual_seed(config.seed)
    model = DepthNet(net_cfg)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.max_lr,
                                  weight_decay=config.weight_decay)
    start_epoch = 0
    if resume_from is not None:
        model.load_state_dict({k: torch.from_numpy(np.ascontiguousarray(v))
                               for k, v in resume_from.tensors.items()})
        opt_state = load_optimizer_state(resume_from)
        if opt_state is not None:
            optimizer.load_state_dict(opt_state)
        start_epoch = resume_from.epoch

    train_idx, val_idx = split_dataset(len(depth_maps), config.val_fraction, config.seed)
    steps_per_epoch = math.ceil(len(train_idx) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    weights = config.loss_weights

    history: list[dict] = []
    best = {"delta1": -1.0, "ckpt": None}
    global_step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, config.epochs):
        model.train()
        epoch_loss = 0.0
        n_steps = 0
        lr = 0.0
        for step, batch_idx in enumerate(_epoch_batches(train_idx, config.batch_size, config.seed, epoch)):
            maps = [depth_maps[i] for i in batch_idx]
            lr = one_cycle_lr(global_step, total_steps, config.max_lr,
                              config.warmup_frac, config.min_lr_ratio)
            for group in optimizer.param_groups:
                group["lr"] = lr
            x = torch.stack([normalize_depth_input(d, net_cfg.d_min, net_cfg.d_max) for d in maps])
            out = model(x)
            batch_loss = None
            for b, d in enumerate(maps):
                loss_b = reconstruction_loss(
                    out["depth"][b], d, out["centers"][b], weights,
                    chamfer_max_points=config.chamfer_max_points,
                    chamfer_seed=_chamfer_seed(config.seed, epoch, step, b),
                )
                batch_loss = loss_b if batch_loss is None else batch_loss + loss_b
            batch_loss = batch_loss / len(maps)
            if not torch.isfinite(batch_loss):
                raise TrainingDivergedError(f"teacher loss non-finite at epoch {epoch} step {step}")
            optimizer.zero_grad(set_to_none=True)
            batch_loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            epoch_loss += float(batch_loss.detach())
            n_steps += 1
            global_step += 1

        entry = {"epoch": epoch, "loss": epoch_loss / max(n_steps, 1), "lr": lr}
        if val_idx and ((epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1):
            agg, _ = evaluate_drn(model, [depth_maps[i] for i in val_idx])
            entry["val"] = {"rel": agg.rel, "delta1": agg.delta1}
            if agg.delta1 > best["delta1"]:
                best["delta1"] = agg.delta1
                best["ckpt"] = checkpoint_from_model(
                    model, epoch=epoch + 1, schedule_step=global_step,
                    metrics=entry["val"],
                )
        history.append(entry)

    final = checkpoint_from_model(model, epoch=config.epochs, schedule_step=global_step,
                                  optimizer=optimizer,
                                  metrics=history[-1].get("val") if history else None)
    best_ckpt = best["ckpt"] if best["ckpt"] is not None else final
    return TrainResult(best=best_ckpt, final=final, history=history)


def train(dataset, config: TrainingConfig, teacher: Checkpoint | DepthNet | None = None,
          *, resume_from: Checkpoint | None = None) -> TrainResult:
    """Phase two: weakly-supervised student training.

    Every epoch shuffles the training split with a seed derived from the epoch
    number, so training is deterministic and resumable. Periodic HR evaluation
    on the held-out split drives best-delta1 checkpoint selection.
    """
    if "distill" in config.ablation and teacher is None:
        raise ConfigError("ablation enables distillation but no teacher was given")
    teacher_model = None
    if teacher is not None:
        teacher_model = teacher.build_model() if isinstance(teacher, Checkpoint) else teacher
        teacher_model.eval()
        for p in teacher_model.parameters():
            p.requires_grad_(False)

    torch.manual_seed(config.seed)
    model = DepthNet(config.network)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.max_lr,
                                  weight_decay=config.weight_decay)
    start_epoch = 0
    if resume_from is not None:
        model.load_state_dict({k: torch.from_numpy(np.ascontiguousarray(v))
                               for k, v in resume_from.tensors.items()})
        opt_state = load_optimizer_state(resume_from)
        if opt_state is not None:
            optimizer.load_state_dict(opt_state)
        start_epoch = resume_from.epoch

    train_idx, val_idx = split_dataset(len(dataset), config.val_fraction, config.seed)
    steps_per_epoch = math.ceil(len(train_idx) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    history: list[dict] = []
    best = {"delta1": -1.0, "ckpt": None}
    global_step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, config.epochs):
        comps = {"loss": 0.0, "mden": 0.0, "LR": 0.0, "HR": 0.0, "net": 0.0, "distill": 0.0}
        n_steps = 0
        lr = 0.0
        for step, batch_idx in enumerate(_epoch_batches(train_idx, config.batch_size, config.seed, epoch)):
            batch = []
            for j in batch_idx:
                pair = dataset[j]
                if config.augment:
                    pair = augment(pair, _augment_seed(config.seed, epoch, j))
                batch.append(pair)
            lr = one_cycle_lr(global_step, total_steps, config.max_lr,
                              config.warmup_frac, config.min_lr_ratio)
            stats = train_step(model, batch, config, optimizer=optimizer, lr=lr,
                               teacher=teacher_model, epoch=epoch, step=step)
            for key in comps:
                comps[key] += stats.get(key, 0.0)
            n_steps += 1
            global_step += 1

        entry = {"epoch": epoch, "lr": lr}
        entry.update({k: v / max(n_steps, 1) for k, v in comps.items()})
        if val_idx and ((epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1):
            agg, _ = evaluate(model, _Subset(dataset, val_idx), input_res="hr", mirror=True)
            entry["val"] = {"rel": agg.rel, "delta1": agg.delta1}
            if agg.delta1 > best["delta1"]:
                best["delta1"] = agg.delta1
                best["ckpt"] = checkpoint_from_model(
                    model, epoch=epoch + 1, schedule_step=global_step, metrics=entry["val"],
                )
        history.append(entry)

    final = checkpoint_from_model(model, epoch=config.epochs, schedule_step=global_step,
                                  optimizer=optimizer,
                                  metrics=history[-1].get("val") if history else None)
    best_ckpt = best["ckpt"] if best["ckpt"] is not None else final
    return TrainResult(best=best_ckpt, final=final, history=history)


class _Subset:
    def __init__(self, dataset, indices):
        self.dataset = dataset
        self.indices = list(indices)
        base_names = getattr(dataset, "names", None)
        self.names = ([base_names[i] for i in self.indices] if base_names
                      else [f"{i:05d}" for i in self.indices])

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, i):
        return self.dataset[self.indices[i]]

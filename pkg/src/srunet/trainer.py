"""Mean-teacher semi-supervised training loop.

Per step: the teacher predicts pseudo-labels and a confidence mask on raw
unlabeled tiles; the unlabeled tiles are strongly augmented (flips replayed
onto the pseudo-labels); the student forwards labeled + augmented unlabeled
in one batch; supervised BCE + masked unsupervised BCE + regional contrast
are combined; the student takes an optimizer step and the teacher follows
by exponential moving average.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .dataio.augment import augment_pair, derive_seed, flip_decisions
from .dataio.types import DatasetSplit, Sample
from .metrics import ConfusionCounts, confusion, scores
from .network.checkpoint import save_checkpoint
from .network.model import NetworkConfig, SRUNet, build_model
from .objectives import (
    ConfidenceMask,
    LossBundle,
    ReCoConfig,
    combine,
    loss_reco,
    loss_sup,
    loss_unsup,
    sample_reco,
)


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 40
    ema_decay: float = 0.99
    poly_power: float = 0.9
    batch_labeled: int = 2
    batch_unlabeled: int = 2
    conf_threshold: float = 0.95
    alpha_unsup: float = 0.7
    alpha_ctr: float = 0.2
    # ramp the unlabeled losses in linearly over this fraction of training;
    # without a pretrained backbone the early teacher is too noisy to follow
    unsup_warmup_frac: float = 0.0
    optimizer: str = "sgd"
    reco: ReCoConfig = field(default_factory=ReCoConfig)
    reco_cross_pool: bool = True
    augment: bool = True
    max_steps: int | None = None
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer '{self.optimizer}'")
        if self.batch_labeled < 1:
            raise ValueError("batch_labeled must be >= 1")
        if not 0.0 <= self.unsup_warmup_frac <= 1.0:
            raise ValueError("unsup_warmup_frac must lie in [0, 1]")
        self.reco.validate()
        return self


@dataclass
class ModelState:
    student: SRUNet
    teacher: SRUNet
    optimizer: torch.optim.Optimizer
    step: int = 0
    epoch: int = 0


@dataclass
class FitResult:
    history: list[dict]
    best_iou: float
    best_epoch: int
    best_path: Path | None
    state: ModelState


def build_state(net_cfg: NetworkConfig, cfg: TrainConfig) -> ModelState:
    cfg.validate()
    student = build_model(net_cfg, seed=cfg.seed)
    teacher = SRUNet(net_cfg)
    teacher.load_state_dict(student.state_dict())
    for p in teacher.parameters():
        p.requires_grad_(False)
    if cfg.optimizer == "sgd":
        opt = torch.optim.SGD(student.parameters(), lr=cfg.lr0,
                              momentum=cfg.momentum,
                              weight_decay=cfg.weight_decay)
    else:
        opt = torch.optim.Adam(student.parameters(), lr=cfg.lr0,
                               weight_decay=cfg.weight_decay)
    state = ModelState(student=student, teacher=teacher, optimizer=opt)
    assert_teacher_frozen(state)
    return state


def assert_teacher_frozen(state: ModelState):
    """Structural check: no teacher parameter is optimized or requires grad."""
    optimized = {id(p) for group in state.optimizer.param_groups
                 for p in group["params"]}
    for p in state.teacher.parameters():
        if p.requires_grad or id(p) in optimized:
            raise AssertionError("teacher parameter reachable by the optimizer")


def lr_schedule(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Polynomial annealing: lr0 * (1 - step/total)^power."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return cfg.lr0 * (1.0 - step / total_steps) ** cfg.poly_power


def ema_update(teacher: SRUNet, student: SRUNet, decay: float):
    """teacher <- decay * teacher + (1 - decay) * student, every parameter
    and floating-point buffer; integer buffers copy over."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError("decay must lie in [0, 1]")
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise ValueError("teacher/student parameter sets differ")
    with torch.no_grad():
        for name, t in t_params.items():
            s = s_params[name]
            if t.shape != s.shape:
                raise ValueError(f"shape mismatch on {name}")
            t.mul_(decay).add_(s.detach() * (1.0 - decay))
        for (name, t), (_, s) in zip(teacher.named_buffers(),
                                     student.named_buffers()):
            if t.shape != s.shape:
                raise ValueError(f"shape mismatch on buffer {name}")
            if t.dtype.is_floating_point:
                t.mul_(decay).add_(s.detach() * (1.0 - decay))
            else:
                t.copy_(s)


def samples_to_batch(samples: list[Sample], device="cpu"):
    """Stack tiles into (images, maps, labels) float/long tensors."""
    imgs, maps, labels = [], [], []
    for s in samples:
        imgs.append(torch.from_numpy(np.ascontiguousarray(s.image)))
        maps.append(torch.from_numpy(np.ascontiguousarray(s.map)))
        if s.label is not None:
            labels.append(torch.from_numpy(np.ascontiguousarray(s.label)))
    images = torch.stack(imgs).permute(0, 3, 1, 2).float().div_(255.0).to(device)
    maps_t = torch.stack(maps).permute(0, 3, 1, 2).float().div_(255.0).to(device)
    labels_t = None
    if len(labels) == len(samples):
        labels_t = torch.stack(labels).long().to(device)
    return images, maps_t, labels_t


def _flip_tensor(t: torch.Tensor, hflip: bool, vflip: bool) -> torch.Tensor:
    if hflip:
        t = torch.flip(t, dims=[-1])
    if vflip:
        t = torch.flip(t, dims=[-2])
    return t


def _downsample_labels(labels: torch.Tensor, size) -> torch.Tensor:
    small = F.interpolate(labels.unsqueeze(1).float(), size=size, mode="nearest")
    return small.squeeze(1).long()


def train_step(state: ModelState, labeled: list[Sample],
               unlabeled: list[Sample], cfg: TrainConfig,
               lr: float | None = None, ssl_scale: float = 1.0) -> LossBundle:
    """One optimization step; mutates state in place and returns the losses.

    `ssl_scale` multiplies both unlabeled-loss weights (the warmup ramp).
    """
    if not labeled:
        raise ValueError("a training step requires at least one labeled tile")
    student, teacher = state.student, state.teacher
    device = next(student.parameters()).device
    alpha_unsup = cfg.alpha_unsup * ssl_scale
    alpha_ctr = cfg.alpha_ctr * ssl_scale

    l_img, l_map, l_lab = samples_to_batch(labeled, device)
    n_l = l_img.shape[0]

    pseudo = conf = None
    u_img = u_map = None
    if unlabeled:
        ur_img, ur_map, _ = samples_to_batch(unlabeled, device)
        teacher.eval()
        with torch.no_grad():
            t_probs = torch.softmax(teacher(ur_img, ur_map).logits, dim=1)
        pseudo = t_probs.argmax(dim=1)
        conf = ConfidenceMask.from_probs(t_probs, cfg.conf_threshold)
        mask_w = conf.w

        if cfg.augment:
            aug, pseudo_rows, mask_rows = [], [], []
            for i, s in enumerate(unlabeled):
                seed = derive_seed(cfg.seed, "unsup", state.step, i)
                aug.append(augment_pair(s, "strong", seed))
                hflip, vflip = flip_decisions(seed)
                pseudo_rows.append(_flip_tensor(pseudo[i], hflip, vflip))
                mask_rows.append(_flip_tensor(mask_w[i], hflip, vflip))
            u_img, u_map, _ = samples_to_batch(aug, device)
            pseudo = torch.stack(pseudo_rows)
            mask_w = torch.stack(mask_rows)
        else:
            u_img, u_map = ur_img, ur_map
        conf = ConfidenceMask(w=mask_w, threshold=cfg.conf_threshold)

    student.train()
    if unlabeled:
        images = torch.cat([l_img, u_img])
        maps = torch.cat([l_map, u_map])
    else:
        images, maps = l_img, l_map
    out = student(images, maps)
    probs = torch.softmax(out.logits, dim=1)
    road = probs[:, 1]

    sup = loss_sup(road[:n_l], l_lab)
    if unlabeled and alpha_unsup > 0:
        unsup = loss_unsup(road[n_l:], pseudo, conf)
    else:
        unsup = out.logits.new_zeros(())

    if alpha_ctr > 0:
        rep = out.representation
        rep_size = rep.shape[-2:]
        probs_small = F.interpolate(probs, size=rep_size, mode="nearest")
        lab_small = _downsample_labels(l_lab, rep_size)
        if unlabeled and cfg.reco_cross_pool:
            pseudo_small = _downsample_labels(pseudo, rep_size)
            rep_pool = rep
            probs_pool = probs_small
            lab_pool = torch.cat([lab_small, pseudo_small])
        else:
            rep_pool = rep[:n_l]
            probs_pool = probs_small[:n_l]
            lab_pool = lab_small
        gen = torch.Generator(device="cpu")
        gen.manual_seed(derive_seed(cfg.seed, "reco", state.step) % 2**63)
        sampled = sample_reco(rep_pool, probs_pool, lab_pool, cfg.reco, gen)
        if sampled:
            ctr = loss_reco(sampled, cfg.reco.temperature)
        else:
            ctr = out.logits.new_zeros(())
    else:
        ctr = out.logits.new_zeros(())

    bundle = combine(sup, unsup, ctr, alpha_unsup, alpha_ctr)
    state.optimizer.zero_grad(set_to_none=True)
    bundle.total.backward()
    if lr is not None:
        for group in state.optimizer.param_groups:
            group["lr"] = lr
    state.optimizer.step()
    ema_update(state.teacher, state.student, cfg.ema_decay)
    state.step += 1
    return bundle


@torch.no_grad()
def evaluate_model(model: SRUNet, samples: list[Sample],
                   threshold: float = 0.5) -> dict[str, float]:
    """Aggregate confusion over tiles; returns the score dict plus n_pixels."""
    model.eval()
    counts = ConfusionCounts()
    device = next(model.parameters()).device
    for s in samples:
        img, map_, _ = samples_to_batch([s], device)
        probs = torch.softmax(model(img, map_).logits, dim=1)
        pred = (probs[0, 1] > threshold).cpu().numpy().astype(np.uint8)
        counts = counts + confusion(pred, s.label)
    result = scores(counts)
    result["n_pixels"] = counts.total
    return result


class _Cycler:
    """Endless, independently shuffled pass over a sample pool."""

    def __init__(self, samples: list[Sample], seed: int, tag: str):
        self.samples = samples
        self.seed = seed
        self.tag = tag
        self.cycle = 0
        self.pos = 0
        self.order = self._reshuffle()

    def _reshuffle(self):
        rng = np.random.default_rng(
            derive_seed(self.seed, self.tag, self.cycle))
        return rng.permutation(len(self.samples))

    def take(self, n: int) -> list[Sample]:
        out = []
        while len(out) < n:
            if self.pos >= len(self.order):
                self.cycle += 1
                self.pos = 0
                self.order = self._reshuffle()
            out.append(self.samples[self.order[self.pos]])
            self.pos += 1
        return out


def fit(split: DatasetSplit, net_cfg: NetworkConfig, cfg: TrainConfig,
        val_samples: list[Sample], out_dir=None) -> FitResult:
    """Run the full schedule; keep the checkpoint with the best teacher IoU."""
    cfg.validate()
    if not val_samples:
        raise ValueError("validation set must not be empty")
    for s in val_samples:
        if s.label is None:
            raise ValueError("validation tiles must carry labels")
    split.validate()

    state = build_state(net_cfg, cfg)
    assert_teacher_frozen(state)

    steps_per_epoch = math.ceil(len(split.labeled) / cfg.batch_labeled)
    total_steps = steps_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_f = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_f = open(out_dir / "metrics.ndjson", "w")

    # the unlabeled pool only matters if some loss consumes it
    wants_unlabeled = (cfg.alpha_unsup > 0
                       or (cfg.alpha_ctr > 0 and cfg.reco_cross_pool))
    lab_cycle = _Cycler(split.labeled, cfg.seed, "order-lab")
    unlab_cycle = (_Cycler(split.unlabeled, cfg.seed, "order-unlab")
                   if split.unlabeled and wants_unlabeled else None)
    warmup_steps = int(round(cfg.unsup_warmup_frac * total_steps))

    history: list[dict] = []
    best_iou, best_epoch = -1.0, -1
    best_path = out_dir / "best.pt" if out_dir is not None else None
    try:
        done = False
        for epoch in range(cfg.epochs):
            state.epoch = epoch
            sums = {"loss_sup": 0.0, "loss_unsup": 0.0, "loss_ctr": 0.0}
            n_steps = 0
            lr = None
            for _ in range(steps_per_epoch):
                if state.step >= total_steps:
                    done = True
                    break
                lr = lr_schedule(state.step, total_steps, cfg)
                labeled = lab_cycle.take(cfg.batch_labeled)
                if cfg.augment:
                    labeled = [
                        augment_pair(s, "weak",
                                     derive_seed(cfg.seed, "sup", state.step, i))
                        for i, s in enumerate(labeled)
                    ]
                ssl_scale = (min(1.0, state.step / warmup_steps)
                             if warmup_steps > 0 else 1.0)
                unlabeled = (unlab_cycle.take(cfg.batch_unlabeled)
                             if unlab_cycle is not None and ssl_scale > 0
                             else [])
                bundle = train_step(state, labeled, unlabeled, cfg, lr=lr,
                                    ssl_scale=ssl_scale)
                vals = bundle.floats()
                for key in sums:
                    sums[key] += vals[key]
                n_steps += 1

            if n_steps == 0:
                break
            val = evaluate_model(state.teacher, val_samples)
            record = {
                "epoch": epoch,
                "loss_sup": sums["loss_sup"] / n_steps,
                "loss_unsup": sums["loss_unsup"] / n_steps,
                "loss_ctr": sums["loss_ctr"] / n_steps,
                "val_iou": val["iou_road"],
                "lr": lr,
            }
            history.append(record)
            if log_f is not None:
                log_f.write(json.dumps(record) + "\n")
                log_f.flush()
            if record["val_iou"] > best_iou:
                best_iou, best_epoch = record["val_iou"], epoch
                if out_dir is not None:
                    save_checkpoint(best_path, config=net_cfg,
                                    student=state.student,
                                    teacher=state.teacher,
                                    optimizer=state.optimizer,
                                    step=state.step, epoch=epoch,
                                    extra={"val_iou": best_iou,
                                           "train_config": dataclasses.asdict(cfg)})
            if done:
                break
        if out_dir is not None:
            save_checkpoint(out_dir / "last.pt", config=net_cfg,
                            student=state.student, teacher=state.teacher,
                            optimizer=state.optimizer, step=state.step,
                            epoch=state.epoch,
                            extra={"val_iou": history[-1]["val_iou"] if history
                                   else None,
                                   "train_config": dataclasses.asdict(cfg)})
    finally:
        if log_f is not None:
            log_f.close()

    return FitResult(history=history, best_iou=best_iou, best_epoch=best_epoch,
                     best_path=best_path, state=state)

"""Training losses: supervised BCE, confidence-masked unsupervised BCE, and
regional pixel contrast, combined as sup + a_u * unsup + a_c * ctr."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

_CLAMP = 1e-7


@dataclass
class ReCoConfig:
    num_queries: int = 128
    num_keys: int = 256
    temperature: float = 0.5
    hard_query_threshold: float = 0.97

    def validate(self) -> "ReCoConfig":
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.num_queries < 1 or self.num_keys < 1:
            raise ValueError("num_queries and num_keys must be >= 1")
        return self


@dataclass
class ConfidenceMask:
    """Hard {0,1} pixel weights: 1 where the max class probability exceeds
    the threshold."""

    w: torch.Tensor
    threshold: float = 0.95

    @classmethod
    def from_probs(cls, probs: torch.Tensor, threshold: float = 0.95):
        """probs: (..., C, H, W); the class axis is reduced."""
        conf = probs.max(dim=-3).values
        return cls(w=(conf > threshold).to(probs.dtype), threshold=threshold)

    @property
    def coverage(self) -> float:
        return float(self.w.mean())


@dataclass
class LossBundle:
    sup: torch.Tensor
    unsup: torch.Tensor
    ctr: torch.Tensor
    total: torch.Tensor
    alpha_unsup: float = 0.7
    alpha_ctr: float = 0.2

    def floats(self) -> dict[str, float]:
        return {
            "loss_sup": float(self.sup.detach()),
            "loss_unsup": float(self.unsup.detach()),
            "loss_ctr": float(self.ctr.detach()),
            "loss_total": float(self.total.detach()),
        }


@dataclass
class ClassSamples:
    """Contrastive sampling result for one class."""

    class_id: int
    queries: torch.Tensor   # Q x D, unit rows
    pos_key: torch.Tensor   # D, unit
    neg_keys: torch.Tensor  # K x D, unit rows


def _bce_elementwise(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    p = p.clamp(_CLAMP, 1.0 - _CLAMP)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))


def loss_sup(pred_probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy on the road-probability channel."""
    if pred_probs.shape != labels.shape:
        raise ValueError(
            f"shape mismatch: {tuple(pred_probs.shape)} vs {tuple(labels.shape)}"
        )
    return _bce_elementwise(pred_probs, labels.to(pred_probs.dtype)).mean()


def loss_unsup(student_probs: torch.Tensor, pseudo_labels: torch.Tensor,
               mask: ConfidenceMask) -> torch.Tensor:
    """BCE against teacher pseudo-labels, averaged over confident pixels.

    Returns an exact 0 when no pixel passes the confidence mask.
    """
    if student_probs.shape != pseudo_labels.shape:
        raise ValueError(
            f"shape mismatch: {tuple(student_probs.shape)} vs "
            f"{tuple(pseudo_labels.shape)}"
        )
    w = mask.w.to(student_probs.dtype)
    if w.shape != student_probs.shape:
        raise ValueError(
            f"mask shape {tuple(w.shape)} does not match "
            f"{tuple(student_probs.shape)}"
        )
    denom = w.sum()
    if denom.item() == 0:
        return student_probs.new_zeros(())
    bce = _bce_elementwise(student_probs, pseudo_labels.to(student_probs.dtype))
    return (bce * w).sum() / denom


def pseudo_labels_from(probs: torch.Tensor) -> torch.Tensor:
    """Per-pixel argmax over the class axis at dim -3."""
    return probs.argmax(dim=-3)


def sample_reco(representation: torch.Tensor, pred_probs: torch.Tensor,
                labels: torch.Tensor, cfg: ReCoConfig,
                generator: torch.Generator | None = None) -> list[ClassSamples]:
    """Build per-class query/key sets for the regional contrastive loss.

    Args:
        representation: B x D x h x w feature map.
        pred_probs: B x C x h x w class probabilities at the same scale.
        labels: B x h x w integer class ids (ground truth or pseudo).
        cfg: sampling parameters.
        generator: torch RNG for reproducible sampling.

    Queries for a class are drawn from its hard pixels (predicted class
    probability below the threshold), topped up from the remaining class
    pixels when hard ones are scarce.  The positive key is the mean of the
    class's normalized representations; negative keys are individual
    representations sampled (with replacement) from the other classes.
    """
    cfg.validate()
    b, d, h, w = representation.shape
    n_classes = pred_probs.shape[1]
    if pred_probs.shape[-2:] != (h, w) or labels.shape != (b, h, w):
        raise ValueError("representation, probabilities, and labels must share "
                         "batch and spatial dims")

    reps = representation.permute(0, 2, 3, 1).reshape(-1, d)
    reps = F.normalize(reps, dim=1)
    probs_flat = pred_probs.permute(0, 2, 3, 1).reshape(-1, n_classes)
    labels_flat = labels.reshape(-1)

    out = []
    for c in range(n_classes):
        class_idx = (labels_flat == c).nonzero(as_tuple=True)[0]
        other_idx = (labels_flat != c).nonzero(as_tuple=True)[0]
        if class_idx.numel() == 0 or other_idx.numel() == 0:
            continue

        class_reps = reps[class_idx]
        pos_key = class_reps.mean(dim=0)
        norm = pos_key.norm()
        if norm < 1e-8:
            raise ValueError(f"class {c} mean representation has zero norm")
        pos_key = pos_key / norm

        n_take = min(cfg.num_queries, class_idx.numel())
        hard = (probs_flat[class_idx, c] < cfg.hard_query_threshold)
        hard_idx = hard.nonzero(as_tuple=True)[0]
        easy_idx = (~hard).nonzero(as_tuple=True)[0]
        picked = hard_idx[torch.randperm(hard_idx.numel(), generator=generator)]
        picked = picked[:n_take]
        if picked.numel() < n_take:
            pad = easy_idx[torch.randperm(easy_idx.numel(), generator=generator)]
            picked = torch.cat([picked, pad[: n_take - picked.numel()]])
        queries = class_reps[picked]

        neg_pick = torch.randint(other_idx.numel(), (cfg.num_keys,),
                                 generator=generator)
        neg_keys = reps[other_idx[neg_pick]]
        out.append(ClassSamples(class_id=c, queries=queries, pos_key=pos_key,
                                neg_keys=neg_keys))
    return out


def loss_reco(samples: list[ClassSamples], temperature: float = 0.5) -> torch.Tensor:
    """InfoNCE over the sampled sets, averaged within then across classes."""
    if not samples:
        raise ValueError("no sampled classes to contrast")
    per_class = []
    for s in samples:
        for name, vec in (("queries", s.queries), ("neg_keys", s.neg_keys),
                          ("pos_key", s.pos_key.unsqueeze(0))):
            if vec.norm(dim=-1).min() < 1e-6:
                raise ValueError(f"zero-norm vector in {name} for class "
                                 f"{s.class_id}")
        pos = (s.queries @ s.pos_key) / temperature            # Q
        neg = (s.queries @ s.neg_keys.T) / temperature         # Q x K
        logits = torch.cat([pos.unsqueeze(1), neg], dim=1)
        per_class.append((torch.logsumexp(logits, dim=1) - pos).mean())
    return torch.stack(per_class).mean()


def combine(sup: torch.Tensor, unsup: torch.Tensor, ctr: torch.Tensor,
            alpha_unsup: float = 0.7, alpha_ctr: float = 0.2) -> LossBundle:
    for name, value in (("sup", sup), ("unsup", unsup), ("ctr", ctr)):
        if not bool(torch.isfinite(torch.as_tensor(value)).all()):
            raise ValueError(f"non-finite {name} loss")
    total = sup + alpha_unsup * unsup + alpha_ctr * ctr
    return LossBundle(sup=sup, unsup=unsup, ctr=ctr, total=total,
                      alpha_unsup=alpha_unsup, alpha_ctr=alpha_ctr)

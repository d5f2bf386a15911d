"""Composite training objective: weighted BCE + Dice per head, summed.

Every supervised map (final segmentation plus per-FFS body and boundary
maps) is scored with the same two-term stage loss

    lambda1 * weighted_bce + lambda2 * dice_loss

with defaults (1, 10).  Reduction is mean over pixels, mean over batch,
sum over heads.

Pixel weighting for the BCE term comes in three modes.  The published
weight formula ``w_i = 1 / log(beta + G_i / sum(G))`` divides by zero
for background pixels at the default ``beta = 1``; it is kept verbatim
(eps-guarded) as ``weighting="literal"`` for auditing.  The default
``"guarded"`` mode uses the class-frequency balancing form it resembles,
``w_i = 1 / log(1.02 + p_class(i))`` with ``p_class`` the pixel
frequency of the pixel's class in the target, which up-weights the rarer
class.  ``"uniform"`` disables weighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, ParameterError, ShapeError
from .model import ForwardOutputs

__all__ = [
    "LossWeights",
    "BatchTargets",
    "dice_loss",
    "weighted_bce",
    "pixel_weights",
    "stage_loss",
    "total_loss",
]

WEIGHTING_MODES = ("guarded", "literal", "uniform")
GUARD_BETA = 1.02
LITERAL_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 10.0
    beta: float = 1.0
    enable_body: bool = True
    enable_bound: bool = True
    weighting: str = "guarded"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ParameterError("lambda1 and lambda2 must be >= 0")
        if self.weighting not in WEIGHTING_MODES:
            raise ParameterError(
                f"weighting must be one of {WEIGHTING_MODES}, got {self.weighting!r}"
            )


@dataclass
class BatchTargets:
    """Batched (N, 1, H, W) float tensors of the three supervision masks."""

    final: torch.Tensor
    body: torch.Tensor
    bound: torch.Tensor


def _as_batch(t: torch.Tensor) -> torch.Tensor:
    if t.ndim == 2:
        return t.reshape(1, -1)
    return t.reshape(t.shape[0], -1)


def _check_shapes(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(
            f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ"
        )


def dice_loss(
    pred_prob: torch.Tensor, target: torch.Tensor, smooth: float = 1.0
) -> torch.Tensor:
    """Soft Dice loss, per sample then averaged over the batch."""
    _check_shapes(pred_prob, target)
    p = _as_batch(pred_prob)
    g = _as_batch(target.to(pred_prob.dtype))
    inter = (p * g).sum(dim=1)
    denom = p.sum(dim=1) + g.sum(dim=1)
    return (1.0 - (2.0 * inter + smooth) / (denom + smooth)).mean()


def pixel_weights(
    target: torch.Tensor, beta: float = 1.0, weighting: str = "guarded"
) -> torch.Tensor:
    """Per-pixel BCE weights computed from each sample's target mask."""
    if weighting not in WEIGHTING_MODES:
        raise ParameterError(f"unknown weighting {weighting!r}")
    g = _as_batch(target.to(torch.float64))
    if weighting == "uniform":
        w = torch.ones_like(g)
    elif weighting == "guarded":
        p_fg = g.mean(dim=1, keepdim=True)
        w_fg = 1.0 / torch.log(GUARD_BETA + p_fg)
        w_bg = 1.0 / torch.log(GUARD_BETA + (1.0 - p_fg))
        w = torch.where(g > 0.5, w_fg, w_bg)
    else:  # literal
        fg_sum = g.sum(dim=1, keepdim=True)
        ratio = torch.where(fg_sum > 0, g / fg_sum.clamp(min=1.0), torch.zeros_like(g))
        denom = torch.log(torch.as_tensor(beta, dtype=g.dtype) + ratio)
        w = 1.0 / denom.clamp(min=LITERAL_EPS)
    return w.reshape(target.shape).to(target.device)


def weighted_bce(
    pred_logits: torch.Tensor,
    target: torch.Tensor,
    beta: float = 1.0,
    weighting: str = "guarded",
) -> torch.Tensor:
    """Pixel-weighted binary cross-entropy on logits, mean-reduced."""
    _check_shapes(pred_logits, target)
    target_f = target.to(pred_logits.dtype)
    w = pixel_weights(target, beta=beta, weighting=weighting).to(pred_logits.dtype)
    bce = F.binary_cross_entropy_with_logits(pred_logits, target_f, reduction="none")
    return (w * bce).mean()


def stage_loss(
    pred_logits: torch.Tensor,
    target: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """``lambda1 * weighted_bce + lambda2 * dice`` for one supervised map."""
    bce = weighted_bce(
        pred_logits, target, beta=weights.beta, weighting=weights.weighting
    )
    dice = dice_loss(torch.sigmoid(pred_logits), target)
    return weights.lambda1 * bce + weights.lambda2 * dice


def _shrink_to(target: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if target.shape[-2:] == size:
        return target
    # nearest-neighbor keeps the supervision masks binary
    return F.interpolate(target, size=size, mode="nearest")


def total_loss(
    outputs: ForwardOutputs,
    targets: BatchTargets,
    weights: LossWeights = LossWeights(),
) -> tuple[torch.Tensor, dict[str, float]]:
    """Final-map loss plus enabled per-FFS auxiliary losses.

    Returns the scalar loss and a per-term breakdown keyed by
    ``seg`` / ``body_<ffs>`` / ``bound_<ffs>``.
    """
    if weights.enable_body and not outputs.body_logits:
        raise ConfigurationError("enable_body is set but no body supervision maps exist")
    if weights.enable_bound and not outputs.bound_logits:
        raise ConfigurationError(
            "enable_bound is set but no boundary supervision maps exist"
        )

    terms: dict[str, torch.Tensor] = {}
    terms["seg"] = stage_loss(outputs.final_logits, targets.final, weights)
    if weights.enable_body:
        for name, logits in zip(outputs.ffs_names, outputs.body_logits):
            shrunk = _shrink_to(targets.body, logits.shape[-2:])
            terms[f"body_{name}"] = stage_loss(logits, shrunk, weights)
    if weights.enable_bound:
        for name, logits in zip(outputs.ffs_names, outputs.bound_logits):
            shrunk = _shrink_to(targets.bound, logits.shape[-2:])
            terms[f"bound_{name}"] = stage_loss(logits, shrunk, weights)

    total = torch.stack(list(terms.values())).sum()
    return total, {k: float(v.detach()) for k, v in terms.items()}

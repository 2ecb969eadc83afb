"""Training criteria.

Cross-entropy, triplet (single and batch-mined), batched Chamfer
reconstruction terms, the per-stage composites, and the KL/JS distribution
terms used only by the ablation grid. Everything is a pure function of its
tensor inputs.
"""

from __future__ import annotations

from collections.abc import Mapping
from typing import NamedTuple

import torch
import torch.nn.functional as F

from .config_schema import LossConfig, MiningMode
from .errors import IncompleteDataError, InvalidArgumentError
from .utils.logger import get_logger

logger = get_logger(__name__)

STAGES = ("1exp", "1id", "1fus", "2exp", "2id", "3")
STAGE_TERMS: dict[str, tuple[str, ...]] = {
    "1exp": ("cls_exp",),
    "1id": ("cls_id",),
    "1fus": ("rec_ori",),
    "2exp": ("rec_exp", "tri", "cls_exp"),
    "2id": ("rec_id",),
    "3": ("cls_exp", "tri", "rec_exp", "rec_id", "rec_dis", "rec_ori"),
}
# stages where the ablation distribution term attaches to the expression feature
DISTRIBUTION_STAGES = ("2exp", "3")
RECON_KINDS = ("exp", "id", "dis", "ori")


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor | int) -> torch.Tensor:
    """Mean ``-log softmax(logits)[label]``.

    Args:
        logits: ``[C]`` or ``[B, C]``
        labels: Class id or ``[B]`` class ids

    Raises:
        InvalidArgumentError: A label is outside ``[0, C)``
    """
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    labels = torch.as_tensor(labels, dtype=torch.long, device=logits.device).reshape(-1)
    num_classes = logits.shape[-1]
    if labels.numel() != logits.shape[0]:
        raise InvalidArgumentError(f"{labels.numel()} labels for {logits.shape[0]} logit rows")
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidArgumentError(f"Label out of range [0, {num_classes}): {labels.tolist()}")
    return F.cross_entropy(logits, labels)


def triplet_loss(
    anchor: torch.Tensor, positive: torch.Tensor, negative: torch.Tensor, margin: float
) -> torch.Tensor:
    """``max(|A-P|^2 - |A-N|^2 + margin, 0)``, averaged over leading dimensions."""
    if not (anchor.shape[-1] == positive.shape[-1] == negative.shape[-1]):
        raise InvalidArgumentError(
            f"Triplet widths differ: {anchor.shape[-1]}, {positive.shape[-1]}, "
            f"{negative.shape[-1]}"
        )
    d_ap = ((anchor - positive) ** 2).sum(-1)
    d_an = ((anchor - negative) ** 2).sum(-1)
    return F.relu(d_ap - d_an + margin).mean()


class TripletResult(NamedTuple):
    value: torch.Tensor
    valid: int  # anchors (batch_hard) or triplets (batch_all) that entered the mean
    degenerate: bool


def pairwise_sq_distances(features: torch.Tensor) -> torch.Tensor:
    diff = features.unsqueeze(1) - features.unsqueeze(0)
    return (diff**2).sum(-1)


def batch_triplet(
    features: torch.Tensor,
    labels: torch.Tensor,
    margin: float,
    mode: MiningMode | str = MiningMode.BATCH_HARD,
) -> TripletResult:
    """Triplet loss mined inside a batch.

    batch_hard averages, over anchors that have both a positive and a
    negative, the loss of the hardest positive against the hardest negative.
    batch_all averages over every (a, p, n) triplet with a positive loss.
    A batch without any valid triplet returns 0 and is flagged degenerate.

    Args:
        features: ``[B, D]``
        labels: ``[B]``
        margin: Triplet margin
        mode: ``batch_hard`` or ``batch_all``
    """
    mode = MiningMode(mode)
    labels = torch.as_tensor(labels, device=features.device).reshape(-1)
    n = features.shape[0]
    dist = pairwise_sq_distances(features)
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(n, dtype=torch.bool, device=features.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    zero = features.sum() * 0.0

    if mode is MiningMode.BATCH_HARD:
        valid = pos_mask.any(1) & neg_mask.any(1)
        count = int(valid.sum())
        if count == 0:
            logger.warning("Degenerate triplet batch: no anchor has a positive and a negative")
            return TripletResult(zero, 0, True)
        hardest_pos = dist.masked_fill(~pos_mask, float("-inf")).max(dim=1)[0]
        hardest_neg = dist.masked_fill(~neg_mask, float("inf")).min(dim=1)[0]
        losses = F.relu(hardest_pos[valid] - hardest_neg[valid] + margin)
        return TripletResult(losses.mean(), count, False)

    triplet_mask = pos_mask.unsqueeze(2) & neg_mask.unsqueeze(1)
    if not bool(triplet_mask.any()):
        logger.warning("Degenerate triplet batch: no valid (anchor, positive, negative)")
        return TripletResult(zero, 0, True)
    losses = F.relu(dist.unsqueeze(2) - dist.unsqueeze(1) + margin) * triplet_mask
    violating = int((losses > 0).sum())
    if violating == 0:
        return TripletResult(zero, 0, False)
    return TripletResult(losses.sum() / violating, violating, False)


def chamfer_batch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-sample Chamfer distance ``[B]`` (mean squared NN distances, both ways).

    Nearest neighbours are found without autograd; the returned values are
    exact squared distances of the matched pairs, so gradients are the
    subgradient of the min.
    """
    if a.dim() == 2:
        a = a.unsqueeze(0)
    if b.dim() == 2:
        b = b.unsqueeze(0)
    if b.shape[0] == 1 and a.shape[0] > 1:
        b = b.expand(a.shape[0], -1, -1)
    if a.shape[0] != b.shape[0] or a.shape[-1] != 3 or b.shape[-1] != 3:
        raise InvalidArgumentError(f"Chamfer shapes {tuple(a.shape)} and {tuple(b.shape)}")
    out = []
    for x, y in zip(a, b):
        with torch.no_grad():
            d = torch.cdist(x.detach(), y.detach())
            nn_xy = d.argmin(dim=1)
            nn_yx = d.argmin(dim=0)
        d_xy = ((x - y[nn_xy]) ** 2).sum(-1).mean()
        d_yx = ((y - x[nn_yx]) ** 2).sum(-1).mean()
        out.append(d_xy + d_yx)
    return torch.stack(out)


def _require(mapping: Mapping[str, torch.Tensor], key: str, what: str) -> torch.Tensor:
    value = mapping.get(key)
    if value is None:
        raise IncompleteDataError(f"Reconstruction term needs {what} '{key}'")
    return value


def recon_loss(
    kind: str,
    outputs: Mapping[str, torch.Tensor],
    targets: Mapping[str, torch.Tensor],
    unit: float = 1.0,
) -> torch.Tensor:
    """Batch-averaged Chamfer reconstruction term.

    Args:
        kind: ``exp`` (output ``exp`` vs target ``mean_expression``), ``id``
            (``id`` vs ``neutral``), ``dis`` (``exp_id`` and ``id_exp`` vs
            ``mean_neutral``, summed) or ``ori`` (``fused`` vs ``original``)
        outputs: Reconstructions by name
        targets: Ground-truth clouds by name
        unit: Coordinates are divided by this length first

    Raises:
        IncompleteDataError: An output or target is missing
    """
    if kind not in RECON_KINDS:
        raise InvalidArgumentError(f"Unknown reconstruction kind '{kind}'")

    def cd(out_key: str, target_key: str) -> torch.Tensor:
        out = _require(outputs, out_key, "output")
        target = _require(targets, target_key, "target")
        return chamfer_batch(out / unit, target / unit).mean()

    if kind == "exp":
        return cd("exp", "mean_expression")
    if kind == "id":
        return cd("id", "neutral")
    if kind == "dis":
        return cd("exp_id", "mean_neutral") + cd("id_exp", "mean_neutral")
    return cd("fused", "original")


def stage_terms(stage: str, config: LossConfig, with_fusion: bool = True) -> tuple[str, ...]:
    """Term names that make up ``stage`` under the ablation toggles."""
    if stage not in STAGE_TERMS:
        raise InvalidArgumentError(f"Unknown stage '{stage}', expected one of {STAGES}")
    terms = list(STAGE_TERMS[stage])
    if stage in ("2exp", "3"):
        if not config.use_triplet:
            terms.remove("tri")
        if not config.use_cls:
            terms.remove("cls_exp")
    if stage == "3" and not with_fusion:
        terms.remove("rec_ori")
    if stage in DISTRIBUTION_STAGES and (config.use_kl or config.use_js):
        terms.append("dist")
    return tuple(terms)


def stage_loss(
    stage: str,
    parts: Mapping[str, torch.Tensor | float],
    config: LossConfig,
    with_fusion: bool = True,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Compose the objective of one training stage.

    Stage three weights ``rec_ori`` by ``lambda``; the distribution term
    (ablation only) is weighted by ``distribution_weight``; every other term
    has weight one.

    Returns:
        (total, breakdown of unweighted term values)

    Raises:
        InvalidArgumentError: A required term is missing from ``parts``
    """
    terms = stage_terms(stage, config, with_fusion)
    total: torch.Tensor | None = None
    breakdown: dict[str, float] = {}
    for name in terms:
        if name not in parts or parts[name] is None:
            raise InvalidArgumentError(f"Stage {stage} needs loss term '{name}'")
        value = parts[name]
        if not isinstance(value, torch.Tensor):
            value = torch.tensor(float(value))
        weight = 1.0
        if name == "rec_ori" and stage == "3":
            weight = config.lam
        elif name == "dist":
            weight = config.distribution_weight
        breakdown[name] = float(value.detach())
        total = weight * value if total is None else total + weight * value
    return total, breakdown


class DistributionResult(NamedTuple):
    value: torch.Tensor
    floored: int  # dimensions whose variance hit the floor


def gaussian_kl(
    mu1: torch.Tensor, var1: torch.Tensor, mu2: torch.Tensor, var2: torch.Tensor
) -> torch.Tensor:
    """Elementwise ``KL(N(mu1, var1) || N(mu2, var2))``."""
    return 0.5 * (torch.log(var2 / var1) + (var1 + (mu1 - mu2) ** 2) / var2 - 1.0)


def gaussian_js(
    mu1: torch.Tensor, var1: torch.Tensor, mu2: torch.Tensor, var2: torch.Tensor
) -> torch.Tensor:
    """Elementwise symmetric divergence against the moment-matched mixture."""
    mu_m = 0.5 * (mu1 + mu2)
    var_m = 0.5 * (var1 + var2) + 0.25 * (mu1 - mu2) ** 2
    return 0.5 * gaussian_kl(mu1, var1, mu_m, var_m) + 0.5 * gaussian_kl(mu2, var2, mu_m, var_m)


def distribution_loss(kind: str, features: torch.Tensor, eps: float = 1e-6) -> DistributionResult:
    """Divergence of the batch's per-dimension Gaussian from ``N(0, 1)``.

    Moments are population moments over the batch; the result is averaged
    over dimensions.

    Args:
        kind: ``kl`` or ``js``
        features: ``[B, D]`` with ``B >= 2``
        eps: Variance floor
    """
    if kind not in ("kl", "js"):
        raise InvalidArgumentError(f"Unknown distribution loss '{kind}'")
    if features.dim() == 1:
        features = features.unsqueeze(-1)
    if features.shape[0] < 2:
        raise InvalidArgumentError("Distribution loss needs a batch of at least 2")
    mu = features.mean(dim=0)
    var = features.var(dim=0, unbiased=False)
    low = var < eps
    floored = int(low.sum())
    if floored:
        logger.warning(f"{floored} feature dimensions have variance < {eps:g}; floored")
        var = var.clamp_min(eps)
    zero, one = torch.zeros_like(mu), torch.ones_like(var)
    div = gaussian_kl(mu, var, zero, one) if kind == "kl" else gaussian_js(mu, var, zero, one)
    return DistributionResult(div.mean(), floored)


"""Composite segmentation loss: BCE plus two supervised contrastive terms.

The total loss is

    total = l_sup + alpha * l_pd + beta * l_pe

where l_sup is pixel-wise binary cross entropy, l_pd contrasts pooled
patch features across the lesion-dense/lesion-sparse split, and l_pe
contrasts pooled edge (inner contour) features against background (outer
contour) features within a mini-batch.

Both contrastive terms share one anchor-wise building block: an InfoNCE
style average of -log softmax over the anchor's positives, with cosine
similarity scaled by a temperature. Anchors are always current-batch
features; memory-bank entries only enlarge the positive/negative candidate
sets and receive no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .features import (
    NORM_TOLERANCE,
    MemoryBank,
    PooledFeature,
    _check_unit_norm,
    vectors_of,
)

BCE_EPS = 1e-7


@dataclass
class ContrastiveConfig:
    """Weights and knobs shared by the contrastive losses.

    ``bank_sample_cap`` bounds how many memory-bank candidates per density
    class join each density-loss computation.
    """

    temperature: float = 0.05
    alpha: float = 0.02
    beta: float = 0.1
    bank_sample_cap: int = 64

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.bank_sample_cap < 0:
            raise ValueError("bank_sample_cap must be >= 0")


@dataclass
class LossBreakdown:
    """The three loss components and their weighted total."""

    l_sup: float
    l_pd: float
    l_pe: float
    total: float


def bce_loss(predictions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean pixel-wise binary cross entropy on probabilities.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = torch.as_tensor(predictions)
    t = torch.as_tensor(targets)
    if p.shape != t.shape:
        raise ValueError(
            f"prediction shape {tuple(p.shape)} does not match target shape {tuple(t.shape)}"
        )
    t = t.to(dtype=p.dtype)
    p = p.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()


def _stack(vectors: Sequence[torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    if len(vectors) == 0:
        return like.new_empty((0, like.shape[-1]))
    return torch.stack([torch.as_tensor(v) for v in vectors])


def supcon_term(
    anchor: torch.Tensor,
    positives: Sequence[torch.Tensor],
    negatives: Sequence[torch.Tensor],
    temperature: float,
) -> torch.Tensor | None:
    """Anchor-wise supervised contrastive term.

    Returns

        (-1/|P|) * sum_{q in P} log( exp(sim(q, a)/tau)
                                     / sum_{k in P u N} exp(sim(k, a)/tau) )

    with cosine similarity and a max-shifted log-sum-exp. Returns ``None``
    when there are no positives (the anchor contributes nothing). The value
    is always >= 0 since every softmax factor is <= 1.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    anchor = torch.as_tensor(anchor)
    if anchor.ndim != 1:
        raise ValueError(f"anchor must be a 1-D vector, got shape {tuple(anchor.shape)}")
    pos = _stack(list(positives), anchor)
    if pos.shape[0] == 0:
        return None
    neg = _stack(list(negatives), anchor)
    _check_unit_norm(anchor)
    for row in pos:
        _check_unit_norm(row)
    for row in neg:
        _check_unit_norm(row)
    candidates = torch.cat([pos, neg], dim=0)
    sims = F.cosine_similarity(candidates, anchor.unsqueeze(0), dim=1)
    logits = sims.clamp(-1.0, 1.0) / temperature
    log_denom = torch.logsumexp(logits, dim=0)
    return -(logits[: pos.shape[0]] - log_denom).mean()


def _dedup_candidates(
    batch: list[PooledFeature], sampled: list[PooledFeature]
) -> list[PooledFeature]:
    """Batch features plus bank samples, at most one candidate per source_id.

    Current-batch features win over bank snapshots of the same region, so
    an anchor never competes against its own stored copy.
    """
    seen = {f.source_id for f in batch}
    out = list(batch)
    for feat in sampled:
        if feat.source_id in seen:
            continue
        seen.add(feat.source_id)
        out.append(feat)
    return out


def _groupwise_supcon(
    vectors: torch.Tensor,
    group_ids: torch.Tensor,
    anchor_count: int,
    temperature: float,
    require_negative: bool,
) -> torch.Tensor | None:
    """Vectorized anchor-wise contrastive mean over a two-group candidate set.

    The first ``anchor_count`` rows act as anchors. For anchor i the
    positives are the same-group candidates other than itself and the
    negatives all other-group candidates, so the softmax denominator runs
    over every candidate except the anchor. Anchors without a positive
    (and, when ``require_negative``, without a negative) are skipped;
    returns None when nothing remains. Equals per-anchor supcon_term up to
    float reassociation.
    """
    norms = vectors.detach().norm(dim=1)
    worst = float((norms - 1.0).abs().max())
    if worst > NORM_TOLERANCE:
        raise ValueError(
            f"feature vectors must be L2-normalized; worst |norm - 1| = {worst:.3g}"
        )

    normed = vectors / vectors.norm(dim=1, keepdim=True)
    sims = normed[:anchor_count] @ normed.T
    logits = sims.clamp(-1.0, 1.0) / temperature  # (A, K)

    same = group_ids[:anchor_count, None] == group_ids[None, :]
    not_self = ~torch.eye(
        anchor_count, vectors.shape[0], dtype=torch.bool, device=vectors.device
    )
    pos_mask = same & not_self
    pos_counts = pos_mask.sum(dim=1)
    valid = pos_counts > 0
    if require_negative:
        valid &= (~same).any(dim=1)
    if not bool(valid.any()):
        return None

    denom = torch.logsumexp(logits.masked_fill(~not_self, float("-inf")), dim=1)
    pos_sum = (logits * pos_mask).sum(dim=1)
    terms = -(pos_sum[valid] / pos_counts[valid] - denom[valid])
    return terms.mean()


def _zero_like(features: Sequence[PooledFeature]) -> torch.Tensor:
    if features:
        v = features[0].vector
        return torch.zeros((), dtype=v.dtype, device=v.device)
    return torch.zeros(())


def density_loss(
    batch_features: Sequence[PooledFeature],
    bank: MemoryBank | None,
    config: ContrastiveConfig,
    seed: int = 0,
) -> torch.Tensor:
    """Patch-wise density loss over the current batch's pooled patch features.

    Every batch feature acts as an anchor; its positives are the same-tag
    candidates (batch plus a per-class bank sample, minus itself) and its
    negatives the other-tag candidates. Anchors lacking a positive or a
    negative are skipped, and the mean runs over the anchors that remain;
    with no valid anchor the loss is 0.
    """
    feats = list(batch_features)
    for f in feats:
        if f.tag not in ("dense", "sparse"):
            raise ValueError(f"density loss expects dense/sparse tags, got {f.tag!r}")
    if not feats:
        return _zero_like(feats)

    sampled: list[PooledFeature] = []
    if bank is not None and config.bank_sample_cap > 0 and len(bank) > 0:
        for i, tag in enumerate(("dense", "sparse")):
            sampled.extend(
                bank.sample(lambda t, tag=tag: t == tag, config.bank_sample_cap, seed=seed + i)
            )
    candidates = _dedup_candidates(feats, sampled)

    vectors = torch.stack([c.vector for c in candidates])
    groups = torch.tensor([1 if c.tag == "dense" else 0 for c in candidates])
    value = _groupwise_supcon(
        vectors, groups, anchor_count=len(feats), temperature=config.temperature,
        require_negative=True,
    )
    return _zero_like(feats) if value is None else value


def edge_loss(
    edge_features: Sequence[PooledFeature | torch.Tensor],
    background_features: Sequence[PooledFeature | torch.Tensor],
    config: ContrastiveConfig,
) -> torch.Tensor:
    """Patch-wise edge-aware loss over one mini-batch's contour features.

    Each edge feature and each background feature is an anchor whose
    positives are the other same-kind features and whose negatives are all
    other-kind features. Anchors without a positive are skipped with the
    divisor reduced accordingly; an all-skipped batch (e.g. a single image)
    yields 0.
    """
    edges = vectors_of(edge_features)
    backgrounds = vectors_of(background_features)
    ref = edges[0] if edges else (backgrounds[0] if backgrounds else None)
    zero = (
        torch.zeros((), dtype=ref.dtype, device=ref.device)
        if ref is not None
        else torch.zeros(())
    )
    if ref is None:
        return zero
    vectors = torch.stack(edges + backgrounds)
    groups = torch.tensor([0] * len(edges) + [1] * len(backgrounds))
    value = _groupwise_supcon(
        vectors, groups, anchor_count=vectors.shape[0], temperature=config.temperature,
        require_negative=False,
    )
    return zero if value is None else value


def total_loss(
    l_sup: float | torch.Tensor,
    l_pd: float | torch.Tensor,
    l_pe: float | torch.Tensor,
    config: ContrastiveConfig,
) -> LossBreakdown:
    """Combine components into total = l_sup + alpha*l_pd + beta*l_pe."""
    components = {"l_sup": float(l_sup), "l_pd": float(l_pd), "l_pe": float(l_pe)}
    for name, value in components.items():
        if not math.isfinite(value):
            raise ValueError(f"loss component {name} is not finite: {value!r}")
    total = (
        components["l_sup"]
        + config.alpha * components["l_pd"]
        + config.beta * components["l_pe"]
    )
    return LossBreakdown(
        l_sup=components["l_sup"],
        l_pd=components["l_pd"],
        l_pe=components["l_pe"],
        total=total,
    )

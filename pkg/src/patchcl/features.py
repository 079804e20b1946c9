"""Masked average pooling and a FIFO memory bank of feature snapshots.

Pooling collapses a C x H x W activation map to a single length-C vector
by averaging feature columns over a binary region mask and L2-normalizing
the result. Regions with zero mass cannot be pooled and are signalled with
``None`` so callers simply skip them.

The memory bank stores detached copies of normalized features together
with a class tag, evicting oldest-first once capacity is reached. It
enlarges the candidate sets of the contrastive losses across mini-batches
without letting gradients flow into stale snapshots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

VALID_TAGS = ("dense", "sparse", "edge", "background")

# |norm - 1| above this is treated as an unnormalized vector.
NORM_TOLERANCE = 1e-4


@dataclass
class PooledFeature:
    """An L2-normalized pooled feature vector with its class tag.

    ``source_id`` identifies the region the vector was pooled from, e.g.
    ``(sample_id, patch_index)`` or ``(sample_id, "edge")``; it is used to
    deduplicate candidates when batch and bank overlap.
    """

    vector: torch.Tensor
    tag: str
    source_id: tuple

    def __post_init__(self) -> None:
        if self.tag not in VALID_TAGS:
            raise ValueError(f"unknown tag {self.tag!r}; expected one of {VALID_TAGS}")


def masked_average_pool(
    activations: torch.Tensor | np.ndarray,
    region_mask: torch.Tensor | np.ndarray,
) -> torch.Tensor | None:
    """Average a C x H x W activation map over a binary region and normalize.

    Returns the L2-normalized length-C vector, or ``None`` when the region
    has zero mass (nothing to pool; the caller skips this region). Gradients
    flow through the activations only.
    """
    acts = torch.as_tensor(activations)
    if acts.ndim != 3:
        raise ValueError(f"expected C x H x W activations, got shape {tuple(acts.shape)}")
    mask = torch.as_tensor(np.asarray(region_mask) if isinstance(region_mask, np.ndarray) else region_mask)
    if mask.ndim != 2:
        raise ValueError(f"expected an H x W region mask, got shape {tuple(mask.shape)}")
    if acts.shape[-2:] != mask.shape:
        raise ValueError(
            f"activation spatial dims {tuple(acts.shape[-2:])} do not match mask shape {tuple(mask.shape)}"
        )
    mask = mask.to(dtype=acts.dtype)
    mass = mask.sum()
    if float(mass) == 0.0:
        return None
    pooled = (acts * mask).sum(dim=(-2, -1)) / mass
    norm = pooled.norm()
    if float(norm.detach()) == 0.0:
        # Degenerate all-zero feature; there is no direction to normalize.
        return None
    return pooled / norm


def _check_unit_norm(vector: torch.Tensor) -> None:
    norm = float(vector.detach().norm())
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(
            f"feature vector has norm {norm:.6g}, expected 1 within {NORM_TOLERANCE}"
        )


class MemoryBank:
    """Bounded FIFO store of detached, L2-normalized feature snapshots."""

    def __init__(self, capacity: int, rng_seed: int = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.rng_seed = rng_seed
        self._entries: deque[PooledFeature] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[PooledFeature, ...]:
        return tuple(self._entries)

    def push(self, features: Iterable[PooledFeature]) -> None:
        """Append snapshots in order, evicting oldest beyond capacity.

        Vectors are detached and copied so no gradient ever flows into a
        stored entry. Unnormalized vectors are rejected.
        """
        staged = []
        for feat in features:
            _check_unit_norm(feat.vector)
            staged.append(
                PooledFeature(feat.vector.detach().clone(), feat.tag, feat.source_id)
            )
        self._entries.extend(staged)

    def sample(
        self,
        tag_predicate: Callable[[str], bool],
        max_count: int,
        seed: int | None = None,
    ) -> list[PooledFeature]:
        """Uniform sample without replacement among entries matching the tag.

        Returns all matches when there are fewer than ``max_count``;
        deterministic given ``seed`` (falls back to the bank's rng_seed).
        """
        if max_count < 0:
            raise ValueError(f"max_count must be >= 0, got {max_count}")
        if max_count == 0:
            return []
        matches = [f for f in self._entries if tag_predicate(f.tag)]
        if len(matches) <= max_count:
            return matches
        rng = np.random.default_rng(self.rng_seed if seed is None else seed)
        chosen = rng.choice(len(matches), size=max_count, replace=False)
        return [matches[i] for i in chosen]


def vectors_of(features: Sequence[PooledFeature | torch.Tensor]) -> list[torch.Tensor]:
    """Extract raw vectors from a mixed sequence of features/tensors."""
    return [f.vector if isinstance(f, PooledFeature) else torch.as_tensor(f) for f in features]

"""Training loop: patch grid -> contours -> pooled features -> losses.

One step runs a forward pass, computes BCE against the ground truth plus
the density and edge-aware contrastive terms from features pooled against
GT-derived region masks, takes one Adam step on the weighted total, and
then pushes the step's detached density features into the memory bank.

The learning rate follows a step schedule (multiply by the decay factor
every ``lr_decay_every`` epochs) and every run is deterministic given the
config seed: shuffling, augmentation, and bank sampling all derive their
seeds from (seed, epoch, index).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import AugmentationConfig, Sample, augment
from .features import MemoryBank, PooledFeature, masked_average_pool
from .losses import (
    ContrastiveConfig,
    LossBreakdown,
    bce_loss,
    density_loss,
    edge_loss,
    total_loss,
)
from .morphology import FULL_3X3, StructuringElement, compose_contours
from .patching import PatchGrid, partition
from .unet import BackboneSpec, UNet, build_backbone

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Everything that determines a training run."""

    batch_size: int = 8
    lr_initial: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 80
    epochs: int = 240
    grid_n: int = 16
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    seed: int = 0
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    bank_capacity: int = 1024
    augmentation: AugmentationConfig | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.grid_n < 1:
            raise ValueError(f"grid_n must be >= 1, got {self.grid_n}")
        if self.lr_initial <= 0:
            raise ValueError("lr_initial must be > 0")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")
        if self.bank_capacity < 1:
            raise ValueError("bank_capacity must be >= 1")


def derive_seed(*parts: int) -> int:
    """Stable derived seed for (seed, epoch, index)-style streams."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def learning_rate_for_epoch(epoch: int, config: TrainConfig) -> float:
    """Step schedule: lr_initial * factor ** (epoch // decay_every)."""
    return config.lr_initial * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def make_optimizer(model: torch.nn.Module, config: TrainConfig) -> torch.optim.Adam:
    # Adam with stock betas/eps and no weight decay.
    return torch.optim.Adam(model.parameters(), lr=config.lr_initial)


def samples_to_tensors(
    batch: list[Sample], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack samples into B x 3 x H x W images and B x 1 x H x W masks."""
    images = np.stack([s.image for s in batch]).transpose(0, 3, 1, 2)
    masks = np.stack([s.mask for s in batch])[:, None]
    return (
        torch.as_tensor(images, dtype=dtype).contiguous(),
        torch.as_tensor(masks, dtype=dtype),
    )


def extract_density_features(
    feature_map: torch.Tensor,
    mask: np.ndarray,
    grid: PatchGrid,
    sample_id: str,
) -> list[PooledFeature]:
    """Pool the GT-masked feature columns of every lesion-bearing patch.

    Patches without any foreground pixel have nothing to pool and are
    skipped. Tags follow the patch's density class; source ids are
    (sample_id, flat patch index).
    """
    out = []
    for entry in grid:
        if entry.foreground_pixels == 0:
            continue
        top, left, h, w = entry.pixel_window
        vec = masked_average_pool(
            feature_map[:, top : top + h, left : left + w],
            mask[top : top + h, left : left + w],
        )
        if vec is None:
            continue
        out.append(
            PooledFeature(vec, entry.density_class, (sample_id, entry.row * grid.n + entry.col))
        )
    return out


def extract_contour_features(
    feature_map: torch.Tensor,
    mask: np.ndarray,
    grid: PatchGrid,
    sample_id: str,
    se: StructuringElement = FULL_3X3,
) -> tuple[list[PooledFeature], list[PooledFeature]]:
    """Pool edge/background features over the composed contour masks.

    Returns ([edge feature], [background feature]) for this image, either
    list empty when the corresponding contour has no pixels.
    """
    pair = compose_contours(grid, mask, se)
    edge_vec = masked_average_pool(feature_map, pair.inner)
    bg_vec = masked_average_pool(feature_map, pair.outer)
    edges = [PooledFeature(edge_vec, "edge", (sample_id, "edge"))] if edge_vec is not None else []
    backgrounds = (
        [PooledFeature(bg_vec, "background", (sample_id, "background"))]
        if bg_vec is not None
        else []
    )
    return edges, backgrounds


def train_step(
    model: UNet,
    optimizer: torch.optim.Optimizer,
    batch: list[Sample],
    bank: MemoryBank,
    config: TrainConfig,
    step: int = 0,
) -> LossBreakdown:
    """One optimization step on a prepared (already augmented) batch.

    Contrastive terms are only computed when their weight is nonzero, so
    an alpha=beta=0 run is literally a BCE-only step. The bank is updated
    in place with the step's detached density features after the optimizer
    step.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    cc = config.contrastive
    try:
        x, y = samples_to_tensors(batch)
        model.train()
        features, logits = model(x)
        probs = torch.sigmoid(logits)
        l_sup = bce_loss(probs, y)

        l_pd = None
        l_pe = None
        density_feats: list[PooledFeature] = []
        if cc.alpha > 0 or cc.beta > 0:
            grids = [partition(s.mask, config.grid_n) for s in batch]
        if cc.alpha > 0:
            for i, sample in enumerate(batch):
                density_feats.extend(
                    extract_density_features(features[i], sample.mask, grids[i], sample.id)
                )
            l_pd = density_loss(
                density_feats, bank, cc, seed=derive_seed(config.seed, step)
            )
        if cc.beta > 0:
            edge_feats: list[PooledFeature] = []
            bg_feats: list[PooledFeature] = []
            for i, sample in enumerate(batch):
                edges, backgrounds = extract_contour_features(
                    features[i], sample.mask, grids[i], sample.id
                )
                edge_feats.extend(edges)
                bg_feats.extend(backgrounds)
            l_pe = edge_loss(edge_feats, bg_feats, cc)

        loss = l_sup
        if l_pd is not None:
            loss = loss + cc.alpha * l_pd
        if l_pe is not None:
            loss = loss + cc.beta * l_pe

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        if density_feats:
            bank.push(density_feats)

        return total_loss(
            float(l_sup.detach()),
            0.0 if l_pd is None else float(l_pd.detach()),
            0.0 if l_pe is None else float(l_pe.detach()),
            cc,
        )
    except Exception as exc:
        raise RuntimeError(f"train step {step} failed: {exc}") from exc


def serialize_bank(bank: MemoryBank) -> dict:
    return {
        "capacity": bank.capacity,
        "rng_seed": bank.rng_seed,
        "entries": [
            {"vector": f.vector.cpu(), "tag": f.tag, "source_id": f.source_id}
            for f in bank.entries
        ],
    }


def restore_bank(payload: dict) -> MemoryBank:
    bank = MemoryBank(payload["capacity"], rng_seed=payload["rng_seed"])
    bank.push(
        PooledFeature(e["vector"], e["tag"], tuple(e["source_id"]))
        for e in payload["entries"]
    )
    return bank


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)


def config_from_dict(payload: dict) -> TrainConfig:
    payload = dict(payload)
    payload["contrastive"] = ContrastiveConfig(**payload["contrastive"])
    payload["backbone"] = BackboneSpec(**payload["backbone"])
    if payload.get("augmentation") is not None:
        aug = dict(payload["augmentation"])
        for key in ("rotation_range_degrees", "brightness_scale_range", "contrast_scale_range"):
            aug[key] = tuple(aug[key])
        payload["augmentation"] = AugmentationConfig(**aug)
    return TrainConfig(**payload)


def save_checkpoint(
    path: str | Path,
    model: UNet,
    optimizer: torch.optim.Optimizer,
    epoch: int,
    step: int,
    config: TrainConfig,
    bank: MemoryBank,
) -> Path:
    """Write a self-describing checkpoint (version-tagged container)."""
    path = Path(path)
    payload = {
        "version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "step": step,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict(),
        "torch_rng_state": torch.get_rng_state(),
        "config": config_to_dict(config),
        "bank": serialize_bank(bank),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    """Load a checkpoint, rejecting unknown container versions."""
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version mismatch in {path}: file has {version!r}, "
            f"this build expects {CHECKPOINT_VERSION}"
        )
    return payload


def _batched(indices: np.ndarray, batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield indices[start : start + batch_size]


def fit(
    model: UNet,
    dataset: list[Sample],
    config: TrainConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> Path:
    """Train for ``config.epochs`` epochs of deterministic shuffled batches.

    Writes one JSONL log row per step (step, epoch, lr, l_sup, l_pd, l_pe,
    total), checkpoints at every lr-decay boundary and at the end, and
    returns the final checkpoint path. ``resume_from`` continues a saved
    run with an identical trajectory.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    optimizer = make_optimizer(model, config)
    bank = MemoryBank(config.bank_capacity, rng_seed=config.seed)
    start_epoch = 0
    global_step = 0
    if resume_from is not None:
        state = load_checkpoint(resume_from)
        model.load_state_dict(state["model_state"])
        optimizer.load_state_dict(state["optimizer_state"])
        torch.set_rng_state(state["torch_rng_state"])
        bank = restore_bank(state["bank"])
        start_epoch = state["epoch"]
        global_step = state["step"]
    else:
        torch.manual_seed(config.seed)

    log_path = out_dir / "train_log.jsonl"
    mode = "a" if resume_from is not None else "w"
    with open(log_path, mode) as log:
        for epoch in range(start_epoch, config.epochs):
            lr = learning_rate_for_epoch(epoch, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = np.random.default_rng(derive_seed(config.seed, epoch)).permutation(
                len(dataset)
            )
            for chunk in _batched(order, config.batch_size):
                raw = [dataset[int(i)] for i in chunk]
                if config.augmentation is not None:
                    batch = [
                        augment(s, config.augmentation, derive_seed(config.seed, epoch, int(i)))
                        for s, i in zip(raw, chunk)
                    ]
                else:
                    batch = raw
                breakdown = train_step(model, optimizer, batch, bank, config, step=global_step)
                log.write(
                    json.dumps(
                        {
                            "step": global_step,
                            "epoch": epoch,
                            "lr": lr,
                            "l_sup": breakdown.l_sup,
                            "l_pd": breakdown.l_pd,
                            "l_pe": breakdown.l_pe,
                            "total": breakdown.total,
                        }
                    )
                    + "\n"
                )
                global_step += 1
            done = epoch + 1
            if done % config.lr_decay_every == 0 and done < config.epochs:
                save_checkpoint(
                    out_dir / f"checkpoint_epoch{done:04d}.pt",
                    model,
                    optimizer,
                    done,
                    global_step,
                    config,
                    bank,
                )
    final_path = save_checkpoint(
        out_dir / "checkpoint_final.pt",
        model,
        optimizer,
        config.epochs,
        global_step,
        config,
        bank,
    )
    return final_path


def model_from_checkpoint(payload: dict) -> tuple[UNet, TrainConfig]:
    """Rebuild the backbone described by a checkpoint and load its weights."""
    config = config_from_dict(payload["config"])
    model = build_backbone(config.backbone)
    model.load_state_dict(payload["model_state"])
    return model, config

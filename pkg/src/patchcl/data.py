"""Image/mask pairs: directory loading, synthetic generation, augmentation.

Samples pair an RGB image (H x W x 3 float in [0, 1]) with a binary
lesion mask (H x W in {0, 1}). The on-disk layout is

    <root>/<split>/images/{id}.jpg   (.jpeg/.png/.tif also accepted)
    <root>/<split>/masks/{id}.tif    (.png etc. also accepted)

where any nonzero mask pixel counts as lesion. The synthetic generator
produces a dark circular "fundus" field with bright elliptical blobs
whose exact support defines the mask, sized to mimic sparse exudates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".tif", ".tiff", ".bmp")

# Foreground proportion band the synthetic generator targets per image.
SYNTHETIC_PROPORTION_RANGE = (0.001, 0.2)


class PairingError(RuntimeError):
    """An image file has no mask with a matching basename."""


@dataclass
class Sample:
    """One RGB image with its binary ground-truth mask."""

    image: np.ndarray
    mask: np.ndarray
    id: str

    def validate(self) -> "Sample":
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got shape {self.image.shape}")
        if self.mask.shape != self.image.shape[:2]:
            raise ValueError(
                f"mask shape {self.mask.shape} does not match image shape {self.image.shape[:2]}"
            )
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must contain only 0 and 1")
        return self


@dataclass
class AugmentationConfig:
    """Random flip / rotation / photometric jitter plus resize-and-crop.

    Scale ranges are multiplicative; rotation is in degrees and must stay
    within [-180, 180]. ``crop`` selects the crop placement after the short
    side is resized to ``output_size`` ("random" for training, "center"
    otherwise).
    """

    horizontal_flip_prob: float = 0.5
    rotation_range_degrees: tuple[float, float] = (-180.0, 180.0)
    brightness_scale_range: tuple[float, float] = (0.5, 1.5)
    contrast_scale_range: tuple[float, float] = (0.5, 1.5)
    output_size: int = 256
    crop: str = "random"

    def __post_init__(self) -> None:
        lo, hi = self.rotation_range_degrees
        if lo > hi or lo < -180.0 or hi > 180.0:
            raise ValueError(
                f"rotation_range_degrees must be an interval within [-180, 180], got {self.rotation_range_degrees}"
            )
        for name in ("brightness_scale_range", "contrast_scale_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or lo > hi:
                raise ValueError(f"{name} must have 0 < low <= high, got {(lo, hi)}")
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ValueError("horizontal_flip_prob must be in [0, 1]")
        if self.output_size < 1:
            raise ValueError("output_size must be >= 1")
        if self.crop not in ("random", "center"):
            raise ValueError(f"crop must be 'random' or 'center', got {self.crop!r}")


def _read_image(path: Path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if arr is None:
        raise OSError(f"failed to read image file: {path}")
    return (arr[:, :, ::-1].astype(np.float32)) / 255.0  # BGR -> RGB


def _read_mask(path: Path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise OSError(f"failed to read mask file: {path}")
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return (arr > 0).astype(np.uint8)


def load_idrid_split(root_path: str | Path, split: str) -> list[Sample]:
    """Load image/mask pairs from ``<root>/<split>/{images,masks}``.

    Masks are binarized (any nonzero pixel becomes 1) and images scaled to
    [0, 1]. Samples come back sorted by id; an image without a matching
    mask raises PairingError naming the basename.
    """
    base = Path(root_path) / split
    images_dir = base / "images"
    masks_dir = base / "masks"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"missing images directory: {images_dir}")
    if not masks_dir.is_dir():
        raise FileNotFoundError(f"missing masks directory: {masks_dir}")

    image_files = sorted(
        (p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.stem,
    )
    samples = []
    for image_path in image_files:
        mask_path = None
        for ext in IMAGE_EXTENSIONS:
            candidate = masks_dir / (image_path.stem + ext)
            if candidate.exists():
                mask_path = candidate
                break
        if mask_path is None:
            raise PairingError(
                f"no mask found for image '{image_path.stem}' under {masks_dir}"
            )
        sample = Sample(
            image=_read_image(image_path),
            mask=_read_mask(mask_path),
            id=image_path.stem,
        )
        samples.append(sample.validate())
    return samples


def export_idrid_layout(samples: list[Sample], root_path: str | Path, split: str) -> Path:
    """Write samples to the on-disk layout that load_idrid_split reads.

    Images and masks are stored as PNG (lossless), masks with lesion
    pixels at 255.
    """
    base = Path(root_path) / split
    images_dir = base / "images"
    masks_dir = base / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        rgb = np.clip(sample.image * 255.0, 0, 255).round().astype(np.uint8)
        cv2.imwrite(str(images_dir / f"{sample.id}.png"), rgb[:, :, ::-1])
        cv2.imwrite(str(masks_dir / f"{sample.id}.png"), sample.mask * 255)
    return base


def _elliptical_blob(
    shape: tuple[int, int],
    center: tuple[float, float],
    axes: tuple[float, float],
    angle: float,
) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    dy = ys - center[0]
    dx = xs - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = c * dy + s * dx
    v = -s * dy + c * dx
    return ((u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0).astype(np.uint8)


def _synthetic_sample(rng: np.random.Generator, size: int, sample_id: str) -> Sample:
    # Dark circular fundus field with gentle radial falloff and texture.
    ys, xs = np.mgrid[0:size, 0:size]
    cy = cx = (size - 1) / 2.0
    radius = 0.47 * size
    dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
    field = (dist <= radius).astype(np.float32)
    falloff = np.clip(1.0 - (dist / radius) ** 2, 0.0, 1.0).astype(np.float32)
    texture = ndimage.gaussian_filter(
        rng.normal(0.0, 1.0, (size, size)), sigma=size / 32.0
    ).astype(np.float32)
    texture = 0.05 * texture / (np.abs(texture).max() + 1e-8)

    image = np.zeros((size, size, 3), dtype=np.float32)
    base = np.array([0.55, 0.28, 0.10], dtype=np.float32)  # reddish fundus tone
    for ch in range(3):
        image[:, :, ch] = field * (base[ch] * (0.55 + 0.45 * falloff) + texture) + 0.02
    image = np.clip(image, 0.0, 1.0)

    # Bright elliptical blobs; their exact union is the mask.
    area = size * size
    low, high = SYNTHETIC_PROPORTION_RANGE
    target = rng.uniform(0.003, 0.1)
    max_axis = min(20.0, size / 8.0)
    mask = np.zeros((size, size), dtype=np.uint8)
    placement_radius = radius * 0.82
    for attempt in range(200):
        if mask.sum() / area >= target:
            break
        min_axis = 2.0 if attempt == 0 else 1.0
        axes = rng.uniform(min_axis, max_axis, size=2)
        rho = placement_radius * np.sqrt(rng.uniform(0.0, 1.0))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        center = (cy + rho * np.sin(phi), cx + rho * np.cos(phi))
        blob = _elliptical_blob((size, size), center, tuple(axes), rng.uniform(0, np.pi))
        candidate = mask | blob
        if candidate.sum() / area > high:
            continue
        mask = candidate

    lesion = mask.astype(bool)
    count = int(lesion.sum())
    # Yellowish-white deposits, strictly brighter than the fundus field.
    color = np.array([0.95, 0.90, 0.62], dtype=np.float32)
    jitter = rng.normal(0.0, 0.015, (count, 3)).astype(np.float32)
    image[lesion] = np.clip(color + jitter, 0.75, 1.0)

    prop = count / area
    if not low <= prop <= high:
        raise RuntimeError(
            f"synthetic sample {sample_id} has foreground proportion {prop:.5f} "
            f"outside {SYNTHETIC_PROPORTION_RANGE}"
        )
    return Sample(image=image, mask=mask, id=sample_id).validate()


def make_synthetic_dataset(count: int, image_size: int, seed: int) -> list[Sample]:
    """Generate a deterministic synthetic lesion dataset.

    Every sample is a dark circular fundus-like field with randomly placed
    bright elliptical blobs (semi-axes 1-20 px); the blob union is the
    mask, and the per-image foreground proportion lies in [0.001, 0.2].
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if image_size < 64:
        raise ValueError(f"image_size must be >= 64, got {image_size}")
    rng = np.random.default_rng(seed)
    return [
        _synthetic_sample(rng, image_size, f"synthetic_{i:04d}") for i in range(count)
    ]


def _rotation_source_coords(
    shape: tuple[int, int], degrees: float
) -> tuple[np.ndarray, np.ndarray]:
    """Source coordinates of the inverse map for a rotation about the center.

    Exact right angles are snapped so that grid points land on grid points.
    """
    h, w = shape
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    if abs(c - round(c)) < 1e-12:
        c = float(round(c))
    if abs(s - round(s)) < 1e-12:
        s = float(round(s))
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    src_y = c * (ys - cy) - s * (xs - cx) + cy
    src_x = s * (ys - cy) + c * (xs - cx) + cx
    return src_y, src_x


def rotate_mask(mask: np.ndarray, degrees: float) -> np.ndarray:
    """Nearest-neighbor rotation of a binary mask (out-of-bounds -> 0)."""
    h, w = mask.shape
    src_y, src_x = _rotation_source_coords((h, w), degrees)
    ry = np.rint(src_y).astype(np.int64)
    rx = np.rint(src_x).astype(np.int64)
    valid = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
    out = np.zeros_like(mask)
    out[valid] = mask[ry[valid], rx[valid]]
    return out


def rotate_image(image: np.ndarray, degrees: float) -> np.ndarray:
    """Bilinear rotation of an H x W x C image (out-of-bounds -> 0)."""
    h, w = image.shape[:2]
    src_y, src_x = _rotation_source_coords((h, w), degrees)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    wy = (src_y - y0).astype(image.dtype)
    wx = (src_x - x0).astype(image.dtype)

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros((h, w) + image.shape[2:], dtype=image.dtype)
        out[ok] = image[yy[ok], xx[ok]]
        return out

    wy = wy[..., None] if image.ndim == 3 else wy
    wx = wx[..., None] if image.ndim == 3 else wx
    return (
        gather(y0, x0) * (1 - wy) * (1 - wx)
        + gather(y0, x0 + 1) * (1 - wy) * wx
        + gather(y0 + 1, x0) * wy * (1 - wx)
        + gather(y0 + 1, x0 + 1) * wy * wx
    )


def resize_to_short_side(
    image: np.ndarray, mask: np.ndarray, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Resize so the short side equals ``size`` (bilinear image, NN mask)."""
    h, w = mask.shape
    if min(h, w) == size:
        return image, mask
    scale = size / min(h, w)
    if h <= w:
        new_h, new_w = size, max(size, int(round(w * scale)))
    else:
        new_h, new_w = max(size, int(round(h * scale))), size
    image = cv2.resize(image, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
    mask = cv2.resize(mask, (new_w, new_h), interpolation=cv2.INTER_NEAREST)
    return image, mask


def crop_square(
    image: np.ndarray,
    mask: np.ndarray,
    size: int,
    mode: str = "center",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Crop a size x size window; ``mode`` is "center" or "random"."""
    h, w = mask.shape
    if h < size or w < size:
        raise ValueError(f"cannot crop {size}x{size} from {h}x{w}")
    if h == size and w == size:
        return image, mask
    if mode == "random":
        if rng is None:
            raise ValueError("random crop requires an rng")
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
    else:
        top = (h - size) // 2
        left = (w - size) // 2
    return (
        image[top : top + size, left : left + size],
        mask[top : top + size, left : left + size],
    )


def resize_and_crop(sample: Sample, size: int, mode: str = "center") -> Sample:
    """Deterministic resize-then-center-crop used at evaluation time."""
    image, mask = resize_to_short_side(sample.image, sample.mask, size)
    image, mask = crop_square(image, mask, size, mode="center")
    return Sample(
        image=np.ascontiguousarray(image, dtype=np.float32),
        mask=np.ascontiguousarray((mask > 0).astype(np.uint8)),
        id=sample.id,
    ).validate()


def augment(sample: Sample, config: AugmentationConfig, seed: int) -> Sample:
    """Random flip, rotation, photometric jitter, then resize-and-crop.

    Geometric transforms hit image and mask identically (mask via nearest
    neighbor, re-binarized); brightness/contrast touch the image only. The
    whole pipeline is deterministic given ``seed``.
    """
    rng = np.random.default_rng(seed)
    image = sample.image.astype(np.float32, copy=True)
    mask = sample.mask.astype(np.uint8, copy=True)

    if rng.random() < config.horizontal_flip_prob:
        image = image[:, ::-1].copy()
        mask = mask[:, ::-1].copy()

    angle = float(rng.uniform(*config.rotation_range_degrees))
    if angle != 0.0:
        image = rotate_image(image, angle)
        mask = rotate_mask(mask, angle)

    brightness = float(rng.uniform(*config.brightness_scale_range))
    if brightness != 1.0:
        image = image * brightness
    contrast = float(rng.uniform(*config.contrast_scale_range))
    if contrast != 1.0:
        mean = image.mean()
        image = (image - mean) * contrast + mean
    image = np.clip(image, 0.0, 1.0)

    image, mask = resize_to_short_side(image, mask, config.output_size)
    image, mask = crop_square(image, mask, config.output_size, mode=config.crop, rng=rng)

    return Sample(
        image=np.ascontiguousarray(image, dtype=np.float32),
        mask=np.ascontiguousarray((mask > 0).astype(np.uint8)),
        id=sample.id,
    ).validate()

"""Binary morphology and patch-wise inner/outer contour extraction.

The inner contour of a mask is the mask minus its erosion (foreground
pixels hugging the boundary from inside); the outer contour is the
dilation minus the mask (background pixels hugging it from outside).
Contours are extracted patch by patch with iteration counts that depend
on the patch's density class: dense patches use 2 erosion / 2 dilation
iterations, while sparse patches use 1 erosion / 5 dilation iterations so
that scattered tiny lesions pick up a wide band of surrounding background.
Out-of-bounds pixels count as background (no wrap or reflection), so
lesions touching a patch border never gain mass from outside the patch.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .patching import PatchGrid, patch_view

# (erosion, dilation) iteration counts per density class.
DENSE_ITERATIONS = (2, 2)
SPARSE_ITERATIONS = (1, 5)


@dataclass(frozen=True)
class StructuringElement:
    """A neighborhood of (dy, dx) offsets used by erosion and dilation.

    Must contain (0, 0) and be symmetric under negation, which keeps
    erosion and dilation dual under complement.
    """

    offsets: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        offs = frozenset((int(dy), int(dx)) for dy, dx in self.offsets)
        object.__setattr__(self, "offsets", offs)
        if (0, 0) not in offs:
            raise ValueError("structuring element must contain the origin (0, 0)")
        asymmetric = sorted(o for o in offs if (-o[0], -o[1]) not in offs)
        if asymmetric:
            raise ValueError(
                f"structuring element is not symmetric under negation: {asymmetric}"
            )

    @classmethod
    def square(cls, radius: int = 1) -> "StructuringElement":
        """Full (2r+1) x (2r+1) square of offsets."""
        offs = [
            (dy, dx)
            for dy in range(-radius, radius + 1)
            for dx in range(-radius, radius + 1)
        ]
        return cls(frozenset(offs))

    def footprint(self) -> np.ndarray:
        """Dense boolean array with the origin at its center."""
        r_dy = max(abs(dy) for dy, _ in self.offsets)
        r_dx = max(abs(dx) for _, dx in self.offsets)
        fp = np.zeros((2 * r_dy + 1, 2 * r_dx + 1), dtype=bool)
        for dy, dx in self.offsets:
            fp[dy + r_dy, dx + r_dx] = True
        return fp


# 8-connected default used throughout the pipeline.
FULL_3X3 = StructuringElement.square(1)


@dataclass
class ContourPair:
    """Inner (foreground-side) and outer (background-side) contour masks."""

    inner: np.ndarray
    outer: np.ndarray


def _as_binary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary (values 0/1)")
    return mask.astype(np.uint8, copy=False)


def erode(
    mask: np.ndarray,
    se: StructuringElement = FULL_3X3,
    iterations: int = 1,
) -> np.ndarray:
    """Binary erosion: a pixel survives iff every se-offset lands on a 1.

    Out-of-bounds neighbors count as 0, so foreground touching the border
    erodes away. ``iterations=0`` is the identity.
    """
    m = _as_binary(mask)
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    if iterations == 0:
        return m.copy()
    out = ndimage.binary_erosion(
        m.astype(bool), structure=se.footprint(), iterations=iterations, border_value=0
    )
    return out.astype(np.uint8)


def dilate(
    mask: np.ndarray,
    se: StructuringElement = FULL_3X3,
    iterations: int = 1,
) -> np.ndarray:
    """Binary dilation: a pixel turns on iff any se-offset hits a 1.

    Out-of-bounds neighbors contribute nothing. ``iterations=0`` is the
    identity.
    """
    m = _as_binary(mask)
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    if iterations == 0:
        return m.copy()
    out = ndimage.binary_dilation(
        m.astype(bool), structure=se.footprint(), iterations=iterations, border_value=0
    )
    return out.astype(np.uint8)


def patch_contours(
    patch_mask: np.ndarray,
    density_class: str,
    se: StructuringElement = FULL_3X3,
) -> ContourPair:
    """Inner/outer contours of one patch mask.

    inner = mask - erode(mask, e_iters); outer = dilate(mask, d_iters) - mask,
    with (e_iters, d_iters) = (2, 2) for dense patches and (1, 5) for sparse
    ones. An all-zero patch yields empty contours.
    """
    m = _as_binary(patch_mask)
    if density_class == "dense":
        e_iters, d_iters = DENSE_ITERATIONS
    elif density_class == "sparse":
        e_iters, d_iters = SPARSE_ITERATIONS
    else:
        raise ValueError(f"unknown density class: {density_class!r}")
    inner = m - erode(m, se, e_iters)
    outer = dilate(m, se, d_iters) - m
    return ContourPair(inner=inner, outer=outer)


def _stacked_morphology(patches: np.ndarray, fp: np.ndarray, iterations: int, op) -> np.ndarray:
    # A (1, kh, kw) structure keeps every slice of the stack independent,
    # so this equals per-patch 2-D morphology with the same border policy.
    if iterations == 0:
        return patches.copy()
    out = op(patches.astype(bool), structure=fp[None], iterations=iterations, border_value=0)
    return out.astype(np.uint8)


def compose_contours(
    grid: PatchGrid,
    gt_mask: np.ndarray,
    se: StructuringElement = FULL_3X3,
) -> ContourPair:
    """Per-patch contours written back into full-resolution masks.

    Each patch is processed independently (no morphology across patch
    seams); the per-patch results are placed into their pixel windows.
    Equivalent to running patch_contours on every window; patches are
    batched per density class for speed.
    """
    gt = _as_binary(gt_mask)
    if gt.shape != (grid.height, grid.width):
        raise ValueError(
            f"grid of {grid.height}x{grid.width} does not match mask shape {gt.shape}"
        )
    inner = np.zeros_like(gt)
    outer = np.zeros_like(gt)
    fp = se.footprint()
    by_class = {"dense": [], "sparse": []}
    for entry in grid:
        if entry.foreground_pixels > 0:
            by_class[entry.density_class].append(entry)
    for density_class, entries in by_class.items():
        if not entries:
            continue
        e_iters, d_iters = DENSE_ITERATIONS if density_class == "dense" else SPARSE_ITERATIONS
        stack = np.stack([patch_view(gt, e) for e in entries])
        eroded = _stacked_morphology(stack, fp, e_iters, ndimage.binary_erosion)
        dilated = _stacked_morphology(stack, fp, d_iters, ndimage.binary_dilation)
        inner_stack = stack - eroded
        outer_stack = dilated - stack
        for i, entry in enumerate(entries):
            top, left, h, w = entry.pixel_window
            inner[top : top + h, left : left + w] = inner_stack[i]
            outer[top : top + h, left : left + w] = outer_stack[i]
    return ContourPair(inner=inner, outer=outer)


def export_contour_pngs(pair: ContourPair, out_dir: str | Path) -> tuple[Path, Path]:
    """Write inner.png and outer.png (white = contour) for visual checks."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inner_path = out_dir / "inner.png"
    outer_path = out_dir / "outer.png"
    cv2.imwrite(str(inner_path), (pair.inner * 255).astype(np.uint8))
    cv2.imwrite(str(outer_path), (pair.outer * 255).astype(np.uint8))
    return inner_path, outer_path

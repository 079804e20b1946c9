"""Partition masks into an n-by-n patch grid and classify patch density.

A patch is "dense" when more than half of its pixels are foreground and
"sparse" otherwise (ties count as sparse). The grid is an exact tiling:
inputs whose sides are not divisible by n are rejected rather than padded,
because padding would distort the foreground proportions of border patches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

DENSITY_THRESHOLD = 0.5


def classify_density(proportion: float) -> str:
    """Return "dense" for proportion > 0.5, "sparse" otherwise."""
    return "dense" if proportion > DENSITY_THRESHOLD else "sparse"


@dataclass(frozen=True)
class PatchInfo:
    """One cell of a patch grid.

    ``pixel_window`` is (top, left, height, width) in source-image pixels.
    ``foreground_pixels`` is kept as an exact integer so that aggregate
    identities (sum over patches == total mask foreground) hold without
    float round-off.
    """

    row: int
    col: int
    pixel_window: tuple[int, int, int, int]
    foreground_pixels: int
    foreground_proportion: float
    density_class: str


@dataclass
class PatchGrid:
    """An n-by-n tiling of a mask with per-patch density info."""

    n: int
    patch_h: int
    patch_w: int
    entries: list[list[PatchInfo]]

    def __iter__(self) -> Iterator[PatchInfo]:
        for row in self.entries:
            yield from row

    def __getitem__(self, rc: tuple[int, int]) -> PatchInfo:
        r, c = rc
        return self.entries[r][c]

    @property
    def height(self) -> int:
        return self.n * self.patch_h

    @property
    def width(self) -> int:
        return self.n * self.patch_w

    def proportions(self) -> np.ndarray:
        """n-by-n array of foreground proportions."""
        return np.array(
            [[e.foreground_proportion for e in row] for row in self.entries]
        )

    def to_csv(self, path: str | Path) -> None:
        """Debug dump: one row per patch (row, col, proportion, class)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "foreground_proportion", "density_class"])
            for entry in self:
                writer.writerow(
                    [
                        entry.row,
                        entry.col,
                        f"{entry.foreground_proportion:.6f}",
                        entry.density_class,
                    ]
                )


def partition(mask: np.ndarray, n: int) -> PatchGrid:
    """Tile a binary H x W mask into an n-by-n grid of patches.

    Raises ValueError when H or W is not divisible by n; there is no
    silent padding.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    if n < 1:
        raise ValueError(f"grid side must be >= 1, got {n}")
    h, w = mask.shape
    if h % n != 0 or w % n != 0:
        raise ValueError(
            f"mask dimensions {h}x{w} are not divisible by grid side n={n}"
        )
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary (values 0/1)")

    patch_h, patch_w = h // n, w // n
    # Integer per-patch foreground counts in one pass.
    counts = mask.reshape(n, patch_h, n, patch_w).sum(axis=(1, 3)).astype(np.int64)
    area = patch_h * patch_w

    entries: list[list[PatchInfo]] = []
    for r in range(n):
        row_entries = []
        for c in range(n):
            fg = int(counts[r, c])
            prop = fg / area
            row_entries.append(
                PatchInfo(
                    row=r,
                    col=c,
                    pixel_window=(r * patch_h, c * patch_w, patch_h, patch_w),
                    foreground_pixels=fg,
                    foreground_proportion=prop,
                    density_class=classify_density(prop),
                )
            )
        entries.append(row_entries)
    return PatchGrid(n=n, patch_h=patch_h, patch_w=patch_w, entries=entries)


def patch_view(array: np.ndarray, info: PatchInfo) -> np.ndarray:
    """Return the sub-window of ``array`` covered by ``info``.

    Works for H x W and H x W x C arrays. The result is a view where
    possible; only value equality is guaranteed.
    """
    array = np.asarray(array)
    top, left, height, width = info.pixel_window
    if top < 0 or left < 0 or top + height > array.shape[0] or left + width > array.shape[1]:
        raise ValueError(
            f"patch window {info.pixel_window} is out of bounds for array of shape {array.shape}"
        )
    return array[top : top + height, left : left + width]

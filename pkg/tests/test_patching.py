import numpy as np
import pytest

from patchcl.patching import PatchGrid, partition, patch_view


def random_mask(rng, h=256, w=256, p=0.1):
    return (rng.random((h, w)) < p).astype(np.uint8)


def test_all_zero_mask_gives_all_sparse_zero_proportion():
    grid = partition(np.zeros((256, 256), np.uint8), 16)
    entries = list(grid)
    assert len(entries) == 256
    assert all(e.density_class == "sparse" for e in entries)
    assert all(e.foreground_proportion == 0.0 for e in entries)


def test_majority_foreground_patch_is_dense():
    # 129 of 256 pixels set -> 0.5039... > 0.5
    mask = np.zeros((16, 16), np.uint8)
    mask.flat[:129] = 1
    grid = partition(mask, 1)
    entry = grid[0, 0]
    assert entry.foreground_pixels == 129
    assert entry.density_class == "dense"


def test_exact_half_proportion_is_sparse():
    # Ties (exactly 0.5) classify as sparse.
    mask = np.zeros((16, 16), np.uint8)
    mask.flat[:128] = 1
    grid = partition(mask, 1)
    assert grid[0, 0].foreground_proportion == 0.5
    assert grid[0, 0].density_class == "sparse"


def test_non_divisible_dimensions_rejected():
    with pytest.raises(ValueError) as err:
        partition(np.zeros((250, 256), np.uint8), 16)
    msg = str(err.value)
    assert "250" in msg and "256" in msg and "16" in msg


def test_non_binary_mask_rejected():
    mask = np.zeros((16, 16), np.uint8)
    mask[0, 0] = 2
    with pytest.raises(ValueError):
        partition(mask, 4)


def test_partition_is_exact_tiling():
    rng = np.random.default_rng(7)
    mask = random_mask(rng, 64, 64, 0.3)
    grid = partition(mask, 8)
    coverage = np.zeros_like(mask, dtype=np.int64)
    for entry in grid:
        top, left, h, w = entry.pixel_window
        coverage[top : top + h, left : left + w] += 1
    assert (coverage == 1).all()


def test_proportions_sum_to_total_foreground():
    rng = np.random.default_rng(11)
    for _ in range(10):
        mask = random_mask(rng, 64, 64, rng.uniform(0.05, 0.9))
        grid = partition(mask, 8)
        area = grid.patch_h * grid.patch_w
        assert sum(e.foreground_pixels for e in grid) == int(mask.sum())
        assert sum(round(e.foreground_proportion * area) for e in grid) == int(mask.sum())


def test_complement_swaps_classes_except_exact_ties():
    rng = np.random.default_rng(3)
    mask = random_mask(rng, 64, 64, 0.5)
    grid = partition(mask, 8)
    flipped = partition(1 - mask, 8)
    for a, b in zip(grid, flipped):
        if a.foreground_proportion == 0.5:
            assert a.density_class == "sparse" and b.density_class == "sparse"
        else:
            assert a.density_class != b.density_class


def test_patch_view_full_window_returns_array():
    arr = np.arange(64).reshape(8, 8)
    grid = partition(np.zeros((8, 8), np.uint8), 1)
    assert np.array_equal(patch_view(arr, grid[0, 0]), arr)


def test_patch_views_tile_and_sum_to_mask_total():
    rng = np.random.default_rng(5)
    mask = random_mask(rng, 32, 32, 0.4)
    grid = partition(mask, 4)
    views = [patch_view(mask, e) for e in grid]
    assert sum(int(v.sum()) for v in views) == int(mask.sum())
    # Adjacent windows are disjoint: union of two neighbors covers their bounding box.
    a, b = grid[0, 0], grid[0, 1]
    assert a.pixel_window[1] + a.pixel_window[3] == b.pixel_window[1]


def test_patch_view_works_on_channel_arrays():
    arr = np.zeros((16, 16, 3))
    grid = partition(np.zeros((16, 16), np.uint8), 4)
    assert patch_view(arr, grid[1, 2]).shape == (4, 4, 3)


def test_patch_view_out_of_bounds_window_rejected():
    from patchcl.patching import PatchInfo

    info = PatchInfo(0, 0, (0, 0, 9, 9), 0, 0.0, "sparse")
    with pytest.raises(ValueError):
        patch_view(np.zeros((8, 8)), info)


def test_csv_dump(tmp_path):
    grid = partition(np.zeros((16, 16), np.uint8), 2)
    path = tmp_path / "grid.csv"
    grid.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + 4
    assert lines[0].startswith("row,col")

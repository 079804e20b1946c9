# Patch grids and the dense/sparse split.
#
# Masks are tiled into an n x n grid; a patch is lesion-dense when more
# than half of its pixels are foreground, lesion-sparse otherwise (ties
# are sparse). The density split drives both the contrastive pairing and
# the per-patch morphology iteration counts.

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from patchcl.data import make_synthetic_dataset
from patchcl.patching import partition

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

sample = make_synthetic_dataset(count=1, image_size=128, seed=21)[0]
grid = partition(sample.mask, n=16)

dense = [e for e in grid if e.density_class == "dense"]
lesioned = [e for e in grid if e.foreground_pixels > 0]
print(f"grid: 16x16 patches of {grid.patch_h}x{grid.patch_w} px")
print(f"patches with any lesion: {len(lesioned)} / 256")
print(f"dense patches (proportion > 0.5): {len(dense)}")

# Exact bookkeeping: per-patch counts add up to the mask total.
assert sum(e.foreground_pixels for e in grid) == int(sample.mask.sum())

fig, axes = plt.subplots(1, 3, figsize=(12, 4))
axes[0].imshow(sample.image)
axes[0].set_title("image")
axes[1].imshow(sample.mask, cmap="gray")
axes[1].set_title("mask")
im = axes[2].imshow(grid.proportions(), cmap="viridis", vmin=0, vmax=1)
axes[2].set_title("per-patch foreground proportion")
fig.colorbar(im, ax=axes[2], fraction=0.046)
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig(out_dir / "patch_density.png", dpi=120)
print(f"wrote {out_dir / 'patch_density.png'}")

grid.to_csv(out_dir / "patch_density.csv")
print(f"wrote {out_dir / 'patch_density.csv'}")

# Anatomy of the composite loss on a tiny hand-built batch.
#
# total = l_sup + alpha * l_pd + beta * l_pe
#
# l_sup is plain pixel-wise BCE. l_pd contrasts pooled patch features
# across the dense/sparse split; l_pe contrasts pooled edge features
# against pooled background features. Both reduce an anchor-wise
# -log softmax over cosine similarities at temperature tau.

import math

import numpy as np
import torch

from patchcl.features import PooledFeature
from patchcl.losses import (
    ContrastiveConfig,
    bce_loss,
    density_loss,
    edge_loss,
    supcon_term,
    total_loss,
)

torch.manual_seed(0)


def unit(v):
    v = torch.as_tensor(v, dtype=torch.float64)
    return v / v.norm()


# --- the anchor-wise building block ---------------------------------------
# One positive at similarity 1, one orthogonal negative, tau = 1:
# the value is -log(e / (e + 1)) ~ 0.3133.
anchor = unit([1.0, 0.0, 0.0])
value = supcon_term(anchor, [anchor.clone()], [unit([0.0, 1.0, 0.0])], temperature=1.0)
print(f"supcon fixture: {float(value):.4f} (analytic {-math.log(math.e / (math.e + 1)):.4f})")

# Temperature sweep on the same fixture: sharper softmax -> smaller loss
# when the positive is closer than the negative.
for tau in (1.0, 0.5, 0.2, 0.05):
    v = supcon_term(anchor, [anchor.clone()], [unit([0.0, 1.0, 0.0])], temperature=tau)
    print(f"  tau={tau:<5} -> {float(v):.6f}")

# --- the density loss ------------------------------------------------------
# Two dense and two sparse features, all identical: every anchor sees one
# positive and two negatives with equal similarity, so each term is log 3.
v = [0.2, 0.5, -0.1]
feats = [
    PooledFeature(unit(v), "dense", ("img", 0)),
    PooledFeature(unit(v), "dense", ("img", 1)),
    PooledFeature(unit(v), "sparse", ("img", 2)),
    PooledFeature(unit(v), "sparse", ("img", 3)),
]
cfg = ContrastiveConfig(temperature=0.05, alpha=0.02, beta=0.1)
l_pd = density_loss(feats, None, cfg)
print(f"\ndensity loss on identical 2+2: {float(l_pd):.4f} (log 3 = {math.log(3):.4f})")

# --- the edge-aware loss ----------------------------------------------------
# Two images, all four contour features identical: again log 3 per anchor.
e = unit([0.4, -0.3, 0.1])
l_pe = edge_loss([e, e], [e, e], cfg)
print(f"edge loss on identical 2+2:    {float(l_pe):.4f}")

# --- the weighted total -----------------------------------------------------
rng = np.random.default_rng(0)
probs = torch.as_tensor(rng.uniform(0.01, 0.99, (2, 1, 32, 32)))
targets = torch.as_tensor((rng.random((2, 1, 32, 32)) < 0.1).astype(np.float64))
l_sup = bce_loss(probs, targets)
breakdown = total_loss(float(l_sup), float(l_pd), float(l_pe), cfg)
print(
    f"\nbreakdown: l_sup={breakdown.l_sup:.4f} l_pd={breakdown.l_pd:.4f} "
    f"l_pe={breakdown.l_pe:.4f} -> total={breakdown.total:.4f}"
)
assert breakdown.total == breakdown.l_sup + 0.02 * breakdown.l_pd + 0.1 * breakdown.l_pe

"""A small U-Net that exposes its penultimate feature map.

The forward pass returns both the final decoder features (C channels at
full input resolution, right before the 1x1 classification head) and the
1-channel logit map. The feature map is what the contrastive losses pool
over, so it must align pixel-for-pixel with the ground-truth masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass
class BackboneSpec:
    """Channel widths and depth of the encoder/decoder."""

    in_channels: int = 3
    base_width: int = 16
    depth: int = 4

    def __post_init__(self) -> None:
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")


class _DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Encoder-decoder with skip connections and a 1-channel head.

    ``forward`` returns ``(features, logits)`` where ``features`` is
    B x base_width x H x W and ``logits`` is B x 1 x H x W.
    """

    def __init__(self, spec: BackboneSpec | None = None):
        super().__init__()
        self.spec = spec or BackboneSpec()
        widths = [self.spec.base_width * (2**k) for k in range(self.spec.depth)]

        self.encoders = nn.ModuleList()
        in_ch = self.spec.in_channels
        for w in widths:
            self.encoders.append(_DoubleConv(in_ch, w))
            in_ch = w
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _DoubleConv(widths[-1], widths[-1] * 2)

        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        up_in = widths[-1] * 2
        for w in reversed(widths):
            self.upsamplers.append(nn.ConvTranspose2d(up_in, w, kernel_size=2, stride=2))
            self.decoders.append(_DoubleConv(2 * w, w))
            up_in = w
        self.head = nn.Conv2d(widths[0], 1, kernel_size=1)

    @property
    def feature_channels(self) -> int:
        return self.spec.base_width

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        factor = 2**self.spec.depth
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise ValueError(
                f"input spatial dims {tuple(x.shape[-2:])} must be divisible by {factor}"
            )
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = up(x)
            x = dec(torch.cat([skip, x], dim=1))
        features = x
        logits = self.head(features)
        return features, logits


def build_backbone(spec: BackboneSpec | None = None, seed: int | None = None) -> UNet:
    """Construct a U-Net; with ``seed`` the initialization is reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    return UNet(spec)

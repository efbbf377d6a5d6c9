"""Monocular depth estimation subnetwork.

A four-stage convolutional extractor (C, 2C, 4C, 8C channels at 1, 1/2,
1/4, 1/8 resolution), a top-down feature pyramid over the three coarse
levels, and a coarse-to-fine decoder of CLIFF blocks whose stage
resolutions (1/4, 1/2, 1/1) mirror the DSR decoder.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, ShapeError
from .blocks import check_divisible, conv1x1, conv3x3, res_stack


@dataclass
class MDEEncoderFeatures:
    m0: torch.Tensor
    m1: torch.Tensor
    m2: torch.Tensor
    m3: torch.Tensor

    @property
    def levels(self):
        return [self.m1, self.m2, self.m3]


@dataclass
class MDEDecoderFeatures:
    fm1: torch.Tensor  # 1/4
    fm2: torch.Tensor  # 1/2
    fm3: torch.Tensor  # 1/1
    d_de: torch.Tensor

    @property
    def levels(self):
        return [self.fm1, self.fm2, self.fm3]


def upsample2x(x, mode="bilinear"):
    if mode == "nearest":
        return F.interpolate(x, scale_factor=2, mode="nearest")
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class CLIFF(nn.Module):
    """Cross-level identity feature fusion.

    The upsampled coarse map multiplies the fine map; coarse, original fine
    and refined fine features are then mixed by two 3x3 convs.
    """

    def __init__(self, channels):
        super().__init__()
        self.select = nn.Sequential(
            conv3x3(3 * channels, channels),
            nn.PReLU(),
            conv3x3(channels, channels),
        )

    def forward(self, high, low):
        if high.shape[-2] * 2 != low.shape[-2] or high.shape[-1] * 2 != low.shape[-1]:
            raise ShapeError(
                f"CLIFF expects high at half of low's resolution, got {tuple(high.shape[-2:])} "
                f"vs {tuple(low.shape[-2:])}"
            )
        h_up = upsample2x(high)
        refined = low * h_up
        return self.select(torch.cat([h_up, low, refined], dim=1))


class MDENet(nn.Module):
    def __init__(self, channels=16, pyramid_channels=32, stage_blocks=2):
        super().__init__()
        c, p = channels, pyramid_channels
        self.widths = [c, 2 * c, 4 * c, 8 * c]
        self.pyramid_channels = p

        stages = [nn.Sequential(conv3x3(3, c), res_stack(c, stage_blocks))]
        for cin, cout in zip(self.widths[:-1], self.widths[1:]):
            stages.append(nn.Sequential(conv3x3(cin, cout, stride=2), res_stack(cout, stage_blocks)))
        self.stages = nn.ModuleList(stages)

        self.lateral = nn.ModuleList([conv1x1(w, p) for w in self.widths[1:]])
        self.smooth = nn.ModuleList([conv3x3(p, p) for _ in range(2)])
        # Full-resolution input for the last CLIFF stage.
        self.lateral0 = conv1x1(c, p)

        self.cliffs = nn.ModuleList([CLIFF(p) for _ in range(3)])
        self.tail = conv1x1(p, 1)

    def extract(self, rgb):
        check_divisible(rgb, 8, "MDENet input")
        feats, x = [], rgb
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return MDEEncoderFeatures(*feats)

    def pyramid(self, feats):
        """Top-down pathway; returns refined maps at 1/2, 1/4, 1/8."""
        m1, m2, m3 = feats.levels
        p3 = self.lateral[2](m3)
        p2 = self.smooth[1](self.lateral[1](m2) + upsample2x(p3, "nearest"))
        p1 = self.smooth[0](self.lateral[0](m1) + upsample2x(p2, "nearest"))
        return [p1, p2, p3]

    def decode(self, feats, refined, guidance=None):
        """Coarse-to-fine CLIFF decoding.

        ``guidance`` is an optional list of three callables; callable ``i``
        replaces stage ``i+1``'s output before the next stage (CGBdg).
        """
        if guidance is not None and len(guidance) != 3:
            raise ConfigError(f"expected 3 decoder guidance bridges, got {len(guidance)}")
        p1, p2, p3 = refined
        lows = [p2, p1, self.lateral0(feats.m0)]
        x, stages = p3, []
        for i, (cliff, low) in enumerate(zip(self.cliffs, lows)):
            x = cliff(x, low)
            if guidance is not None:
                x = guidance[i](x)
            stages.append(x)
        return MDEDecoderFeatures(*stages, d_de=self.tail(x))

    def forward(self, rgb):
        feats = self.extract(rgb)
        return self.decode(feats, self.pyramid(feats)).d_de

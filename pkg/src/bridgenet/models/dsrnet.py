"""Depth super-resolution subnetwork.

Encoder: conv + residual block at full resolution, then three
max-pool + 4-residual-block modules (1/2, 1/4, 1/8).  Bottleneck: stacked
residual blocks, a multi-scale fusion of the 1/2 and 1/4 encoder levels, and
a low-frequency long skip from the full-resolution features.  Decoder: three
conv + pixel-shuffle stages back to full resolution and a 1x1 output conv,
optionally added to the interpolated input.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError
from .blocks import ResBlock, check_divisible, conv1x1, conv3x3, res_stack


@dataclass
class DSREncoderFeatures:
    e0: torch.Tensor
    e1: torch.Tensor
    e2: torch.Tensor
    e3: torch.Tensor

    @property
    def levels(self):
        return [self.e1, self.e2, self.e3]


@dataclass
class DSRDecoderFeatures:
    fd1: torch.Tensor  # 1/4
    fd2: torch.Tensor  # 1/2
    fd3: torch.Tensor  # 1/1
    d_sr: torch.Tensor

    @property
    def levels(self):
        return [self.fd1, self.fd2, self.fd3]


class TransformModule(nn.Sequential):
    def __init__(self, channels, n_blocks=4):
        super().__init__(nn.MaxPool2d(2), *[ResBlock(channels) for _ in range(n_blocks)])


class DownsampleBlock(nn.Sequential):
    """Three bias-free conv + max-pool pairs taking full resolution to 1/8."""

    def __init__(self, channels):
        layers = []
        for _ in range(3):
            layers += [conv3x3(channels, channels, bias=False), nn.MaxPool2d(2)]
        super().__init__(*layers)


class UpStage(nn.Sequential):
    def __init__(self, channels):
        super().__init__(conv3x3(channels, 4 * channels), nn.PixelShuffle(2), nn.PReLU())


class DSRNet(nn.Module):
    def __init__(self, channels=32, transform_blocks=4, bottleneck_blocks=4):
        super().__init__()
        c = channels
        self.channels = c
        self.head = nn.Sequential(conv3x3(1, c), ResBlock(c))
        self.transforms = nn.ModuleList([TransformModule(c, transform_blocks) for _ in range(3)])

        self.trunk = res_stack(c, bottleneck_blocks)
        self.align1 = nn.Sequential(conv3x3(c, c, stride=2), nn.PReLU(), conv3x3(c, c, stride=2))
        self.align2 = conv3x3(c, c, stride=2)
        self.fuse = conv1x1(3 * c, c)
        self.downsample = DownsampleBlock(c)

        self.up = nn.ModuleList([UpStage(c) for _ in range(3)])
        self.tail = conv1x1(c, 1)
        # With the global residual this makes the untrained network exactly bicubic.
        nn.init.zeros_(self.tail.weight)
        nn.init.zeros_(self.tail.bias)

    def encode(self, lr_up, guidance=None):
        """Run the encoder; ``guidance`` is an optional list of three callables.

        Callable ``i`` receives level ``i+1`` features and returns the fused map
        passed on to the next stage (HABdg or the concat ablation).
        """
        check_divisible(lr_up, 8, "DSRNet input")
        if guidance is not None and len(guidance) != 3:
            raise ConfigError(f"expected 3 encoder guidance bridges, got {len(guidance)}")
        x = self.head(lr_up)
        feats = [x]
        for i, module in enumerate(self.transforms):
            x = module(x)
            if guidance is not None:
                x = guidance[i](x)
            feats.append(x)
        return DSREncoderFeatures(*feats)

    def bottleneck(self, enc):
        trunk = self.trunk(enc.e3)
        fused = self.fuse(torch.cat([trunk, self.align1(enc.e1), self.align2(enc.e2)], dim=1))
        return fused + self.downsample(enc.e0)

    def decode(self, x, base=None):
        """Three pixel-shuffle stages; ``base`` (the interpolated input) is added to the output."""
        stages = []
        for stage in self.up:
            x = stage(x)
            stages.append(x)
        d_sr = self.tail(x)
        if base is not None:
            d_sr = d_sr + base
        return DSRDecoderFeatures(*stages, d_sr=d_sr)

    def forward(self, lr_up, global_residual=True):
        base = lr_up if global_residual else None
        return self.decode(self.bottleneck(self.encode(lr_up)), base).d_sr

import torch
import torch.nn as nn

from ..errors import ShapeError

# Saturates sigmoid to exactly 1.0 in float32 and float64.
GATE_OPEN = 50.0


def conv3x3(cin, cout, stride=1, bias=True):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=bias)


def conv1x1(cin, cout, bias=True):
    return nn.Conv2d(cin, cout, 1, bias=bias)


class ResBlock(nn.Module):
    """conv3x3 -> PReLU -> conv3x3 with an additive skip."""

    def __init__(self, channels, bias=True):
        super().__init__()
        self.body = nn.Sequential(
            conv3x3(channels, channels, bias=bias),
            nn.PReLU(),
            conv3x3(channels, channels, bias=bias),
        )

    def forward(self, x):
        return x + self.body(x)

    def zero_branch(self):
        """Make the block the identity by zeroing its last conv."""
        last = self.body[-1]
        nn.init.zeros_(last.weight)
        if last.bias is not None:
            nn.init.zeros_(last.bias)


def res_stack(channels, n, bias=True):
    return nn.Sequential(*[ResBlock(channels, bias=bias) for _ in range(n)])


class ChannelAttention(nn.Module):
    """CBAM channel gate: shared MLP over global avg- and max-pooled descriptors."""

    def __init__(self, channels, reduction=16, min_hidden=4):
        super().__init__()
        hidden = max(channels // reduction, min_hidden)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(),
            nn.Conv2d(hidden, channels, 1),
        )

    def gate(self, x):
        avg = x.mean(dim=(2, 3), keepdim=True)
        mx = x.amax(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))

    def forward(self, x):
        return x * self.gate(x)

    def open_gate(self):
        # Both pooled branches add the output bias, so the logit is 2 * GATE_OPEN.
        nn.init.zeros_(self.mlp[-1].weight)
        nn.init.constant_(self.mlp[-1].bias, GATE_OPEN)


class SpatialAttention(nn.Module):
    """Spatial gate from channel-wise mean and max maps through a 7x7 conv."""

    def __init__(self, kernel_size=7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def gate(self, x):
        desc = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(desc))

    def forward(self, x):
        return x * self.gate(x)

    def open_gate(self):
        nn.init.zeros_(self.conv.weight)
        nn.init.constant_(self.conv.bias, GATE_OPEN)


def check_divisible(x, factor, what):
    h, w = x.shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"{what}: spatial size {h}x{w} must be divisible by {factor}")

"""Cross-task bridges.

HABdg (encoder side, MDE -> DSR) blurs MDE features, takes the PReLU of the
residual as a high-frequency attention, re-weights the MDE features with it
and fuses them into the DSR stream through channel attention, a 1x1
reduction and spatial attention.

CGBdg (decoder side, DSR -> MDE) projects both decoders' features to depth
maps, turns their difference into a per-location softmax over channels,
re-weights the DSR decoder features with it and fuses them into the MDE
stream through the same attention block.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ShapeError
from .blocks import ChannelAttention, SpatialAttention, conv1x1


def _same_spatial(a, b, what):
    if a.shape[-2:] != b.shape[-2:]:
        raise ShapeError(f"{what}: spatial mismatch {tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}")


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def refine_guidance(f_mde, a_hf):
    _same_shape(f_mde, a_hf, "refine_guidance")
    return f_mde + a_hf * f_mde


def content_guidance(fd_dsr, w_diff):
    _same_shape(fd_dsr, w_diff, "content_guidance")
    return fd_dsr + w_diff * fd_dsr


class AttentionFusion(nn.Module):
    """concat -> channel attention -> 1x1 conv to the receiver's width -> spatial attention."""

    def __init__(self, recv_channels, guide_channels):
        super().__init__()
        total = recv_channels + guide_channels
        self.recv_channels = recv_channels
        self.ca = ChannelAttention(total)
        self.reduce = conv1x1(total, recv_channels)
        self.sa = SpatialAttention()

    def forward(self, recv, guide):
        _same_spatial(recv, guide, "attention fusion")
        return self.sa(self.reduce(self.ca(torch.cat([recv, guide], dim=1))))

    @torch.no_grad()
    def make_pass_through(self):
        """Configure the block so that it returns ``recv`` unchanged."""
        self.ca.open_gate()
        self.sa.open_gate()
        w = torch.zeros_like(self.reduce.weight)
        w[:, : self.recv_channels, 0, 0] = torch.eye(self.recv_channels)
        self.reduce.weight.copy_(w)
        nn.init.zeros_(self.reduce.bias)


class Blur(nn.Module):
    """2x2 average pooling followed by a depthwise 2x2/stride-2 transposed conv.

    The transposed conv starts as pixel replication, so the initial blur is
    average pooling followed by nearest-neighbour upsampling.
    """

    def __init__(self, channels):
        super().__init__()
        self.pool = nn.AvgPool2d(2)
        self.deconv = nn.ConvTranspose2d(channels, channels, 2, stride=2, groups=channels)
        nn.init.ones_(self.deconv.weight)
        nn.init.zeros_(self.deconv.bias)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise ShapeError(f"blur needs even spatial dims, got {h}x{w}")
        return self.deconv(self.pool(x))


@dataclass
class HABdgState:
    f_blurred: torch.Tensor
    a_hf: torch.Tensor
    f_hg: torch.Tensor
    f_comp: torch.Tensor
    f_ha: torch.Tensor


class HABdg(nn.Module):
    def __init__(self, dsr_channels, mde_channels):
        super().__init__()
        self.blur = Blur(mde_channels)
        self.act = nn.PReLU(init=0.25)
        self.fusion = AttentionFusion(dsr_channels, mde_channels)

    def high_frequency_attention(self, f_mde):
        f_blurred = self.blur(f_mde)
        return f_blurred, self.act(f_mde - f_blurred)

    def trace(self, f_dsr, f_mde):
        _same_spatial(f_dsr, f_mde, "HABdg")
        f_blurred, a_hf = self.high_frequency_attention(f_mde)
        f_hg = refine_guidance(f_mde, a_hf)
        f_comp = torch.cat([f_dsr, f_hg], dim=1)
        f_ha = self.fusion(f_dsr, f_hg)
        return HABdgState(f_blurred, a_hf, f_hg, f_comp, f_ha)

    def forward(self, f_dsr, f_mde):
        _same_spatial(f_dsr, f_mde, "HABdg")
        _, a_hf = self.high_frequency_attention(f_mde)
        return self.fusion(f_dsr, refine_guidance(f_mde, a_hf))

    def make_pass_through(self):
        self.fusion.make_pass_through()


class ConcatBridge(nn.Module):
    """Ablation stand-in for HABdg: raw MDE features concatenated, then a 1x1 conv."""

    def __init__(self, dsr_channels, mde_channels):
        super().__init__()
        self.dsr_channels = dsr_channels
        self.reduce = conv1x1(dsr_channels + mde_channels, dsr_channels)

    def forward(self, f_dsr, f_mde):
        _same_spatial(f_dsr, f_mde, "concat bridge")
        return self.reduce(torch.cat([f_dsr, f_mde], dim=1))

    @torch.no_grad()
    def make_pass_through(self):
        w = torch.zeros_like(self.reduce.weight)
        w[:, : self.dsr_channels, 0, 0] = torch.eye(self.dsr_channels)
        self.reduce.weight.copy_(w)
        nn.init.zeros_(self.reduce.bias)


@dataclass
class CGBdgState:
    m_dsr: torch.Tensor
    m_mde: torch.Tensor
    w_diff: torch.Tensor
    f_cg: torch.Tensor
    f_con: torch.Tensor
    output: torch.Tensor


class CGBdg(nn.Module):
    def __init__(self, dsr_channels, mde_channels):
        super().__init__()
        self.project_dsr = conv1x1(dsr_channels, 1)
        self.project_mde = conv1x1(mde_channels, 1)
        self.diff_conv = conv1x1(1, dsr_channels)
        self.fusion = AttentionFusion(mde_channels, dsr_channels)

    def difference_weight(self, m_dsr, m_mde):
        _same_shape(m_dsr, m_mde, "difference_weight")
        return torch.softmax(self.diff_conv(m_dsr - m_mde), dim=1)

    def trace(self, fd_mde, fd_dsr):
        _same_spatial(fd_mde, fd_dsr, "CGBdg")
        m_dsr = self.project_dsr(fd_dsr)
        m_mde = self.project_mde(fd_mde)
        w_diff = self.difference_weight(m_dsr, m_mde)
        f_cg = content_guidance(fd_dsr, w_diff)
        f_con = torch.cat([fd_mde, f_cg], dim=1)
        return CGBdgState(m_dsr, m_mde, w_diff, f_cg, f_con, self.fusion(fd_mde, f_cg))

    def forward(self, fd_mde, fd_dsr):
        return self.trace(fd_mde, fd_dsr).output

    def make_pass_through(self):
        self.fusion.make_pass_through()

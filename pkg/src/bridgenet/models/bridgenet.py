"""Joint DSR/MDE model and the ablation variants built from it."""

from dataclasses import dataclass, field
from functools import partial

import torch
import torch.nn as nn

from ..errors import ConfigError
from .bridges import CGBdg, ConcatBridge, HABdg
from .dsrnet import DSRNet
from .mdenet import MDENet


@dataclass(frozen=True)
class AblationVariant:
    name: str
    use_dsrnet: bool = True
    use_mdenet: bool = True
    use_habdg: bool = False
    use_cgbdg: bool = False
    habdg_mode: str = "attention"  # or "concat"

    def __post_init__(self):
        if not (self.use_dsrnet or self.use_mdenet):
            raise ConfigError(f"variant {self.name!r} enables no subnetwork")
        if (self.use_habdg or self.use_cgbdg) and not (self.use_dsrnet and self.use_mdenet):
            raise ConfigError(f"variant {self.name!r}: bridges need both DSRNet and MDENet")
        if self.habdg_mode not in ("attention", "concat"):
            raise ConfigError(f"unknown habdg_mode {self.habdg_mode!r}")


VARIANTS = {
    v.name: v
    for v in [
        AblationVariant("dsrnet_only", use_mdenet=False),
        AblationVariant("mdenet_only", use_dsrnet=False),
        AblationVariant("loss_only"),
        AblationVariant("habdg", use_habdg=True),
        AblationVariant("cgbdg", use_cgbdg=True),
        AblationVariant("full", use_habdg=True, use_cgbdg=True),
        AblationVariant("habdg_replaced_by_concat", use_habdg=True, use_cgbdg=True,
                        habdg_mode="concat"),
    ]
}
CORE_VARIANTS = ["dsrnet_only", "mdenet_only", "loss_only", "habdg", "cgbdg", "full"]


def get_variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class ModelConfig:
    dsr_channels: int = 32
    mde_channels: int = 16
    pyramid_channels: int = 32
    transform_blocks: int = 4
    bottleneck_blocks: int = 4
    mde_stage_blocks: int = 2
    global_residual: bool = True


@dataclass
class BridgeOutput:
    d_sr: torch.Tensor = None
    d_de: torch.Tensor = None
    dsr_enc: object = None
    dsr_dec: object = None
    mde_enc: object = None
    mde_dec: object = None
    extras: dict = field(default_factory=dict)

    @property
    def prediction(self):
        """The depth map scored as the SR result (D_DE for the MDE-only baseline)."""
        return self.d_sr if self.d_sr is not None else self.d_de


class BridgeNet(nn.Module):
    """DSRNet + MDENet with optional HABdg/CGBdg bridges.

    Submodules are created in a fixed order (DSRNet first) so a given seed
    initialises DSRNet identically across variants.
    """

    def __init__(self, cfg=ModelConfig(), variant="full"):
        super().__init__()
        self.cfg = cfg
        self.variant = get_variant(variant) if isinstance(variant, str) else variant
        v = self.variant
        self.dsr = (DSRNet(cfg.dsr_channels, cfg.transform_blocks, cfg.bottleneck_blocks)
                    if v.use_dsrnet else None)
        self.mde = (MDENet(cfg.mde_channels, cfg.pyramid_channels, cfg.mde_stage_blocks)
                    if v.use_mdenet else None)
        self.hab = None
        self.cgb = None
        if v.use_habdg:
            bridge = HABdg if v.habdg_mode == "attention" else ConcatBridge
            self.hab = nn.ModuleList(
                [bridge(cfg.dsr_channels, w) for w in self.mde.widths[1:]]
            )
        if v.use_cgbdg:
            self.cgb = nn.ModuleList(
                [CGBdg(cfg.dsr_channels, cfg.pyramid_channels) for _ in range(3)]
            )

    def dsr_parameters(self):
        mods = [m for m in (self.dsr, self.hab) if m is not None]
        return [p for m in mods for p in m.parameters()]

    def mde_parameters(self):
        mods = [m for m in (self.mde, self.cgb) if m is not None]
        return [p for m in mods for p in m.parameters()]

    def make_bridges_pass_through(self):
        for group in (self.hab, self.cgb):
            if group is not None:
                for b in group:
                    b.make_pass_through()

    def forward(self, lr_up, rgb=None):
        out = BridgeOutput()
        if self.mde is not None:
            if rgb is None:
                raise ConfigError("MDENet needs the RGB image")
            out.mde_enc = self.mde.extract(rgb)

        if self.dsr is not None:
            guidance = None
            if self.hab is not None:
                guidance = [partial(b, f_mde=m) for b, m in zip(self.hab, out.mde_enc.levels)]
            out.dsr_enc = self.dsr.encode(lr_up, guidance)
            base = lr_up if self.cfg.global_residual else None
            out.dsr_dec = self.dsr.decode(self.dsr.bottleneck(out.dsr_enc), base)
            out.d_sr = out.dsr_dec.d_sr

        if self.mde is not None:
            guidance = None
            if self.cgb is not None:
                guidance = [partial(b, fd_dsr=fd) for b, fd in zip(self.cgb, out.dsr_dec.levels)]
            refined = self.mde.pyramid(out.mde_enc)
            out.mde_dec = self.mde.decode(out.mde_enc, refined, guidance)
            out.d_de = out.mde_dec.d_de
        return out


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())

from .blocks import ChannelAttention, ResBlock, SpatialAttention
from .bridges import CGBdg, ConcatBridge, HABdg, content_guidance, refine_guidance
from .bridgenet import (CORE_VARIANTS, VARIANTS, AblationVariant, BridgeNet, BridgeOutput,
                        ModelConfig, count_parameters, get_variant)
from .dsrnet import DSRNet
from .mdenet import CLIFF, MDENet

__all__ = [
    "ChannelAttention", "ResBlock", "SpatialAttention",
    "CGBdg", "ConcatBridge", "HABdg", "content_guidance", "refine_guidance",
    "CORE_VARIANTS", "VARIANTS", "AblationVariant", "BridgeNet", "BridgeOutput",
    "ModelConfig", "count_parameters", "get_variant",
    "DSRNet", "CLIFF", "MDENet",
]

"""Network components: backbone, attention fusion, boundary enhancement,
ASPP, decoder, residual refinement, checkpointing."""

from .aspp import ASPP
from .attention import ChannelAttention, MapGuidedFusion, SpatialAttention
from .backbone import ResNetBackbone, build_backbone, load_pretrained_backbone
from .checkpoint import (
    FORMAT_VERSION,
    config_from_payload,
    load_checkpoint,
    restore_models,
    save_checkpoint,
)
from .edges import BoundaryFusion, EdgeEncoder, HedLite, MixConv, SobelEdges
from .model import (
    Decoder,
    ForwardOutput,
    MapEncoder,
    NetworkConfig,
    SRUNet,
    build_model,
    prepare_inputs,
)
from .refine import ResidualRefine

__all__ = [
    "ASPP",
    "BoundaryFusion",
    "ChannelAttention",
    "Decoder",
    "EdgeEncoder",
    "ForwardOutput",
    "FORMAT_VERSION",
    "HedLite",
    "MapEncoder",
    "MapGuidedFusion",
    "MixConv",
    "NetworkConfig",
    "ResidualRefine",
    "ResNetBackbone",
    "SRUNet",
    "SobelEdges",
    "SpatialAttention",
    "build_backbone",
    "build_model",
    "config_from_payload",
    "load_checkpoint",
    "load_pretrained_backbone",
    "prepare_inputs",
    "restore_models",
    "save_checkpoint",
]

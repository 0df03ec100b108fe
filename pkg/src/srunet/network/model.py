"""The assembled dual-input road segmentation network.

Dataflow: the latest image runs through a dilated ResNet whose stage-1
features are boundary-enhanced; the rasterized historical map runs through
a shallow encoder; the two meet at 1/16 scale in an attention fusion, pass
through ASPP, and a decoder at 1/4 scale emits coarse logits plus a
representation map for the contrastive loss.  A residual refinement module
corrects the coarse logits before the final x4 upsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .aspp import ASPP
from .attention import MapGuidedFusion
from .backbone import build_backbone
from .common import init_weights, make_norm
from .edges import BoundaryFusion, HedLite, SobelEdges
from .refine import ResidualRefine

# preset -> (channel-attention reduction, edge-feature width, decoder width)
_PRESET_DIMS = {"full": (16, 64, 256), "tiny": (4, 16, 64)}


@dataclass
class NetworkConfig:
    width_preset: str = "full"
    aspp_rates: tuple[int, int, int] = (6, 12, 18)
    repr_channels: int = 256
    repr_scale: float = 0.25
    edge_extractor: str = "fixed_gradient"
    input_size: tuple[int, int] = (512, 512)
    norm: str = "batch"
    use_map: bool = True

    def validate(self) -> "NetworkConfig":
        if self.width_preset not in _PRESET_DIMS:
            raise ValueError(f"unknown width preset '{self.width_preset}'")
        if self.edge_extractor not in ("fixed_gradient", "learned_hed_lite"):
            raise ValueError(f"unknown edge extractor '{self.edge_extractor}'")
        if len(self.aspp_rates) != 3 or any(r < 1 for r in self.aspp_rates):
            raise ValueError(f"bad aspp_rates {self.aspp_rates}")
        if self.repr_channels < 1:
            raise ValueError("repr_channels must be positive")
        if not 0.0 < self.repr_scale <= 1.0:
            raise ValueError("repr_scale must lie in (0, 1]")
        h, w = self.input_size
        if h % 16 or w % 16:
            raise ValueError(f"input size {h}x{w} must be divisible by 16")
        return self


@dataclass
class ForwardOutput:
    logits: torch.Tensor          # B x 2 x H x W  (background, road)
    representation: torch.Tensor  # B x repr_channels at repr_scale
    coarse_logits: torch.Tensor   # B x 2 x H/4 x W/4, pre-refinement
    edge_map: torch.Tensor        # B x 1 x H x W in [0, 1]


class MapEncoder(nn.Module):
    """Four shallow strided convolutions: 3 x H x W -> 64 x H/16 x W/16."""

    def __init__(self, norm: str = "batch"):
        super().__init__()
        specs = [(3, 32, 7, 2), (32, 64, 7, 2), (64, 64, 7, 2), (64, 64, 3, 2)]
        layers = []
        for in_ch, out_ch, k, s in specs:
            layers += [
                nn.Conv2d(in_ch, out_ch, k, stride=s, padding=k // 2, bias=False),
                make_norm(norm, out_ch),
                nn.ReLU(inplace=True),
            ]
        self.net = nn.Sequential(*layers)
        self.out_channels = 64

    def forward(self, x):
        return self.net(x)


class Decoder(nn.Module):
    """Fuse ASPP context with projected low-level features at 1/4 scale and
    emit classifier logits plus the representation map."""

    def __init__(self, context_channels, low_channels, low_proj_channels,
                 width, repr_channels, norm="batch"):
        super().__init__()
        self.project_low = nn.Sequential(
            nn.Conv2d(low_channels, low_proj_channels, 1, bias=False),
            make_norm(norm, low_proj_channels),
            nn.ReLU(inplace=True),
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(context_channels + low_proj_channels, width, 3,
                      padding=1, bias=False),
            make_norm(norm, width),
            nn.ReLU(inplace=True),
        )
        self.classifier = nn.Conv2d(width, 2, 3, padding=1)
        self.representation = nn.Conv2d(width, repr_channels, 3, padding=1)

    def forward(self, context, low):
        up = F.interpolate(context, size=low.shape[-2:], mode="bilinear",
                           align_corners=False)
        fused = self.fuse(torch.cat([up, self.project_low(low)], dim=1))
        return self.classifier(fused), self.representation(fused)


class SRUNet(nn.Module):
    def __init__(self, config: NetworkConfig | None = None):
        super().__init__()
        self.config = (config or NetworkConfig()).validate()
        cfg = self.config
        reduction, edge_ch, dec_width = _PRESET_DIMS[cfg.width_preset]

        self.backbone = build_backbone(cfg.width_preset, cfg.norm)
        c1, _, _, c4 = self.backbone.out_channels
        if cfg.edge_extractor == "fixed_gradient":
            self.edges = SobelEdges()
        else:
            self.edges = HedLite(norm=cfg.norm)
        self.bem = BoundaryFusion(c1, edge_ch, cfg.norm)
        if cfg.use_map:
            self.map_encoder = MapEncoder(cfg.norm)
            self.fusion = MapGuidedFusion(c4, reduction)
        else:
            self.map_encoder = None
            self.fusion = None
        self.aspp = ASPP(c4, cfg.aspp_rates, 256, cfg.norm)
        self.decoder = Decoder(256, c1, min(48, c1), dec_width,
                               cfg.repr_channels, cfg.norm)
        self.refine = ResidualRefine(2, 64, cfg.norm)

        self.apply(init_weights)
        self.refine.reset_residual()

    def _check_inputs(self, image, map_raster):
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected B x 3 x H x W image, got {tuple(image.shape)}")
        h, w = image.shape[-2:]
        if h % 16 or w % 16:
            raise ValueError(f"input size {h}x{w} must be divisible by 16")
        if self.config.use_map:
            if map_raster is None:
                raise ValueError("this model was built with use_map=True")
            if map_raster.shape != image.shape:
                raise ValueError(
                    f"image {tuple(image.shape)} and map "
                    f"{tuple(map_raster.shape)} must align"
                )

    def forward(self, image, map_raster=None) -> ForwardOutput:
        self._check_inputs(image, map_raster)
        h, w = image.shape[-2:]

        edge_map = self.edges(image)
        x = self.backbone.stem(image)
        x1 = self.backbone.layer1(x)
        x_low = self.bem(x1, edge_map)
        x2 = self.backbone.layer2(x_low)
        x3 = self.backbone.layer3(x2)
        x4 = self.backbone.layer4(x3)

        if self.config.use_map:
            fused = self.fusion(x4, self.map_encoder(map_raster))
        else:
            fused = x4

        context = self.aspp(fused)
        coarse, representation = self.decoder(context, x_low)
        refined = self.refine(coarse)
        logits = F.interpolate(refined, size=(h, w), mode="bilinear",
                               align_corners=False)
        if self.config.repr_scale != 0.25:
            target = (max(1, round(h * self.config.repr_scale)),
                      max(1, round(w * self.config.repr_scale)))
            representation = F.interpolate(representation, size=target,
                                           mode="bilinear", align_corners=False)
        return ForwardOutput(logits=logits, representation=representation,
                             coarse_logits=coarse, edge_map=edge_map)


def build_model(config: NetworkConfig, seed: int | None = None) -> SRUNet:
    """Construct a model, optionally with a fixed initialization seed."""
    if seed is not None:
        torch.manual_seed(seed)
    return SRUNet(config)


def prepare_inputs(image: np.ndarray, map_raster: np.ndarray,
                   device=None) -> tuple[torch.Tensor, torch.Tensor]:
    """uint8 HWC arrays -> float [0,1] CHW tensors with a batch axis."""

    def convert(arr):
        t = torch.from_numpy(np.ascontiguousarray(arr)).float().div_(255.0)
        return t.permute(2, 0, 1).unsqueeze(0).to(device or "cpu")

    return convert(image), convert(map_raster)

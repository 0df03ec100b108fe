"""Boundary enhancement: edge extraction, edge encoding, mixed-kernel fusion.

Two edge extractors are available.  `fixed_gradient` is parameter-free:
Sobel gradient magnitude min-max scaled per tile.  `learned_hed_lite` is a
small three-stage side-output network trained jointly with the rest of the
model.  Both emit a single-channel map in [0, 1].
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import make_norm

_SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]


class SobelEdges(nn.Module):
    """Per-tile min-max scaled Sobel gradient magnitude."""

    def __init__(self):
        super().__init__()
        kx = torch.tensor(_SOBEL_X).view(1, 1, 3, 3)
        self.register_buffer("kx", kx)
        self.register_buffer("ky", kx.transpose(-1, -2).contiguous())

    def forward(self, image):
        gray = image.mean(dim=1, keepdim=True)
        gray = F.pad(gray, (1, 1, 1, 1), mode="replicate")
        gx = F.conv2d(gray, self.kx)
        gy = F.conv2d(gray, self.ky)
        mag = torch.sqrt(gx * gx + gy * gy + 1e-12)
        lo = mag.amin(dim=(2, 3), keepdim=True)
        hi = mag.amax(dim=(2, 3), keepdim=True)
        return (mag - lo) / (hi - lo + 1e-8)


class HedLite(nn.Module):
    """Three-stage edge net with fused side outputs and a sigmoid head."""

    def __init__(self, widths=(16, 32, 64), norm: str = "batch"):
        super().__init__()
        stages, sides = [], []
        in_ch = 3
        for w in widths:
            stages.append(nn.Sequential(
                nn.Conv2d(in_ch, w, 3, padding=1, bias=False),
                make_norm(norm, w),
                nn.ReLU(inplace=True),
                nn.Conv2d(w, w, 3, padding=1, bias=False),
                make_norm(norm, w),
                nn.ReLU(inplace=True),
            ))
            sides.append(nn.Conv2d(w, 1, 1))
            in_ch = w
        self.stages = nn.ModuleList(stages)
        self.sides = nn.ModuleList(sides)
        self.fuse = nn.Conv2d(len(widths), 1, 1)

    def forward(self, image):
        size = image.shape[-2:]
        x = image
        side_maps = []
        for i, (stage, side) in enumerate(zip(self.stages, self.sides)):
            if i > 0:
                x = F.max_pool2d(x, 2)
            x = stage(x)
            s = side(x)
            if s.shape[-2:] != size:
                s = F.interpolate(s, size=size, mode="bilinear",
                                  align_corners=False)
            side_maps.append(s)
        return torch.sigmoid(self.fuse(torch.cat(side_maps, dim=1)))


class EdgeEncoder(nn.Module):
    """Encode the 1-channel edge map down to 1/4 scale."""

    def __init__(self, out_channels: int, norm: str = "batch"):
        super().__init__()
        mid = max(out_channels // 2, 8)
        self.net = nn.Sequential(
            nn.Conv2d(1, mid, 3, stride=2, padding=1, bias=False),
            make_norm(norm, mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, out_channels, 3, stride=2, padding=1, bias=False),
            make_norm(norm, out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            make_norm(norm, out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, edge_map):
        return self.net(edge_map)


class MixConv(nn.Module):
    """Parallel 3/5/7 convolutions filling equal output-channel groups."""

    def __init__(self, in_channels: int, out_channels: int, kernels=(3, 5, 7)):
        super().__init__()
        base = out_channels // len(kernels)
        splits = [base + (1 if i < out_channels % len(kernels) else 0)
                  for i in range(len(kernels))]
        self.convs = nn.ModuleList([
            nn.Conv2d(in_channels, ch, k, padding=k // 2)
            for k, ch in zip(kernels, splits)
        ])

    def forward(self, x):
        return torch.cat([conv(x) for conv in self.convs], dim=1)


class BoundaryFusion(nn.Module):
    """Inject encoded edge features into the low-level backbone features.

    The fusion is residual: the mixed-kernel convolution sees the
    concatenated [feature, edge] stack and its output is added back onto
    the incoming features, so zeroing the fusion weights recovers the
    plain backbone exactly.
    """

    def __init__(self, feat_channels: int, edge_channels: int,
                 norm: str = "batch"):
        super().__init__()
        self.encoder = EdgeEncoder(edge_channels, norm)
        self.mix = MixConv(feat_channels + edge_channels, feat_channels)

    def forward(self, feat, edge_map):
        edge_feat = self.encoder(edge_map)
        if edge_feat.shape[-2:] != feat.shape[-2:]:
            raise ValueError(
                f"edge features {tuple(edge_feat.shape[-2:])} do not match "
                f"low-level features {tuple(feat.shape[-2:])}"
            )
        return feat + self.mix(torch.cat([feat, edge_feat], dim=1))

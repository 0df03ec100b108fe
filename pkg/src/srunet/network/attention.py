"""CBAM-style attention and the map-guided feature fusion."""

from __future__ import annotations

import torch
import torch.nn as nn


class SpatialAttention(nn.Module):
    """sigmoid(conv7x7([channel-mean; channel-max])) -> B x 1 x H x W."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2,
                              bias=False)

    def forward(self, x):
        avg = x.mean(dim=1, keepdim=True)
        mx = x.amax(dim=1, keepdim=True)
        return torch.sigmoid(self.conv(torch.cat([avg, mx], dim=1)))


class ChannelAttention(nn.Module):
    """sigmoid(MLP(avgpool) + MLP(maxpool)) with a shared bottleneck MLP."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=False),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1, bias=False),
        )

    def forward(self, x):
        avg = self.mlp(x.mean(dim=(2, 3), keepdim=True))
        mx = self.mlp(x.amax(dim=(2, 3), keepdim=True))
        return torch.sigmoid(avg + mx)


class MapGuidedFusion(nn.Module):
    """Gate image features by attention derived from the map branch.

    Spatial attention is computed from the map features and multiplied onto
    the image features; channel attention then reweights the result.  The
    output keeps the image-branch channel width.
    """

    def __init__(self, img_channels: int, reduction: int = 16):
        super().__init__()
        self.spatial = SpatialAttention(7)
        self.channel = ChannelAttention(img_channels, reduction)

    def forward(self, img_feat, map_feat):
        if img_feat.shape[-2:] != map_feat.shape[-2:]:
            raise ValueError(
                f"feature scale mismatch: {tuple(img_feat.shape[-2:])} vs "
                f"{tuple(map_feat.shape[-2:])}"
            )
        gated = img_feat * self.spatial(map_feat)
        return gated * self.channel(gated)

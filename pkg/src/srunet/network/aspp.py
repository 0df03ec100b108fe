"""Atrous spatial pyramid pooling."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .common import make_norm


class ASPP(nn.Module):
    """Parallel 1x1 / dilated 3x3 / global-pool branches, projected to
    `out_channels`."""

    def __init__(self, in_channels: int, rates=(6, 12, 18),
                 out_channels: int = 256, norm: str = "batch"):
        super().__init__()
        if len(rates) != 3:
            raise ValueError("expected three dilation rates")
        self.branches = nn.ModuleList([
            nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, bias=False),
                make_norm(norm, out_channels),
                nn.ReLU(inplace=True),
            )
        ])
        for rate in rates:
            self.branches.append(nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 3, padding=rate,
                          dilation=rate, bias=False),
                make_norm(norm, out_channels),
                nn.ReLU(inplace=True),
            ))
        self.pool = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(in_channels, out_channels, 1, bias=False),
            make_norm(norm, out_channels),
            nn.ReLU(inplace=True),
        )
        self.project = nn.Sequential(
            nn.Conv2d(out_channels * 5, out_channels, 1, bias=False),
            make_norm(norm, out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        feats = [branch(x) for branch in self.branches]
        pooled = F.interpolate(self.pool(x), size=x.shape[-2:], mode="bilinear",
                               align_corners=False)
        feats.append(pooled)
        return self.project(torch.cat(feats, dim=1))

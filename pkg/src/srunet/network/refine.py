"""Residual refinement of the coarse logits with a small U-shaped module."""

from __future__ import annotations

import torch.nn as nn
import torch.nn.functional as F

from .common import make_norm


class ResidualRefine(nn.Module):
    """Two conv+pool stages down, two deconv stages up, additive skips.

    The final 1x1 projection is zero-initialized so a fresh module is an
    exact identity: refined = coarse + 0.
    """

    def __init__(self, channels: int = 2, width: int = 64, norm: str = "batch"):
        super().__init__()
        self.enc1 = nn.Sequential(
            nn.Conv2d(channels, width, 3, padding=1, bias=False),
            make_norm(norm, width),
            nn.ReLU(inplace=True),
        )
        self.enc2 = nn.Sequential(
            nn.Conv2d(width, width, 3, padding=1, bias=False),
            make_norm(norm, width),
            nn.ReLU(inplace=True),
        )
        self.dec1 = nn.Sequential(
            nn.ConvTranspose2d(width, width, 2, stride=2, bias=False),
            make_norm(norm, width),
            nn.ReLU(inplace=True),
        )
        self.dec2 = nn.Sequential(
            nn.ConvTranspose2d(width, width, 2, stride=2, bias=False),
            make_norm(norm, width),
            nn.ReLU(inplace=True),
        )
        self.out = nn.Conv2d(width, channels, 1)
        self.reset_residual()

    def reset_residual(self):
        """Zero the final projection so the residual starts at exactly 0."""
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, coarse):
        h, w = coarse.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"refinement input {h}x{w} must be divisible by 4")
        e1 = self.enc1(coarse)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        bottom = F.max_pool2d(e2, 2)
        d1 = self.dec1(bottom) + e2
        d2 = self.dec2(d1) + e1
        return coarse + self.out(d2)

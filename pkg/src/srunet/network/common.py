"""Shared building blocks for the network modules."""

from __future__ import annotations

import torch.nn as nn


def make_norm(kind: str, channels: int) -> nn.Module:
    """Normalization factory: 'batch', 'group', or 'none'."""
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "group":
        groups = 8
        while channels % groups:
            groups //= 2
        return nn.GroupNorm(groups, channels)
    if kind == "none":
        return nn.Identity()
    raise ValueError(f"unknown norm kind '{kind}'")


def init_weights(module: nn.Module):
    """Kaiming conv init, unit-gain norm init. Use with nn.Module.apply."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.GroupNorm)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)

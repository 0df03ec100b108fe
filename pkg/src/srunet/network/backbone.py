"""Dilated ResNet feature extractor (output stride 16).

Stage outputs land at 1/4, 1/8, 1/16, 1/16 of the input: the last stage
trades its stride for dilation 2.  The "full" preset follows the
ResNet-101 layout with torchvision-compatible parameter names so ImageNet
weights can be loaded; "tiny" is a small residual stub for CPU tests.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .common import make_norm


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, inplanes, planes, stride=1, dilation=1, downsample=None,
                 norm="batch"):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, 3, stride=stride,
                               padding=dilation, dilation=dilation, bias=False)
        self.bn1 = make_norm(norm, planes)
        self.relu = nn.ReLU(inplace=True)
        self.conv2 = nn.Conv2d(planes, planes, 3, padding=dilation,
                               dilation=dilation, bias=False)
        self.bn2 = make_norm(norm, planes)
        self.downsample = downsample

    def forward(self, x):
        identity = x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        if self.downsample is not None:
            identity = self.downsample(x)
        return self.relu(out + identity)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, inplanes, planes, stride=1, dilation=1, downsample=None,
                 norm="batch"):
        super().__init__()
        self.conv1 = nn.Conv2d(inplanes, planes, 1, bias=False)
        self.bn1 = make_norm(norm, planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=stride,
                               padding=dilation, dilation=dilation, bias=False)
        self.bn2 = make_norm(norm, planes)
        self.conv3 = nn.Conv2d(planes, planes * self.expansion, 1, bias=False)
        self.bn3 = make_norm(norm, planes * self.expansion)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        identity = x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        if self.downsample is not None:
            identity = self.downsample(x)
        return self.relu(out + identity)


class ResNetBackbone(nn.Module):
    """Staged ResNet trunk; forward returns the four stage features."""

    def __init__(self, block, layers, widths, stem_width, norm="batch"):
        super().__init__()
        self.norm_kind = norm
        self.inplanes = stem_width
        self.conv1 = nn.Conv2d(3, stem_width, 7, stride=2, padding=3, bias=False)
        self.bn1 = make_norm(norm, stem_width)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        self.layer1 = self._make_layer(block, widths[0], layers[0], stride=1)
        self.layer2 = self._make_layer(block, widths[1], layers[1], stride=2)
        self.layer3 = self._make_layer(block, widths[2], layers[2], stride=2)
        # keep 1/16 resolution: dilation instead of a further stride
        self.layer4 = self._make_layer(block, widths[3], layers[3], stride=1,
                                       dilation=2)
        self.out_channels = tuple(w * block.expansion for w in widths)

    def _make_layer(self, block, planes, blocks, stride=1, dilation=1):
        downsample = None
        if stride != 1 or self.inplanes != planes * block.expansion:
            downsample = nn.Sequential(
                nn.Conv2d(self.inplanes, planes * block.expansion, 1,
                          stride=stride, bias=False),
                make_norm(self.norm_kind, planes * block.expansion),
            )
        layers = [block(self.inplanes, planes, stride, dilation, downsample,
                        self.norm_kind)]
        self.inplanes = planes * block.expansion
        for _ in range(1, blocks):
            layers.append(block(self.inplanes, planes, dilation=dilation,
                                norm=self.norm_kind))
        return nn.Sequential(*layers)

    def stem(self, x):
        return self.maxpool(self.relu(self.bn1(self.conv1(x))))

    def forward(self, x):
        x = self.stem(x)
        x1 = self.layer1(x)
        x2 = self.layer2(x1)
        x3 = self.layer3(x2)
        x4 = self.layer4(x3)
        return x1, x2, x3, x4


_PRESETS = {
    "full": dict(block=Bottleneck, layers=(3, 4, 23, 3),
                 widths=(64, 128, 256, 512), stem_width=64),
    "tiny": dict(block=BasicBlock, layers=(1, 1, 1, 1),
                 widths=(16, 32, 64, 64), stem_width=16),
}


def build_backbone(preset: str = "full", norm: str = "batch") -> ResNetBackbone:
    if preset not in _PRESETS:
        raise ValueError(f"unknown width preset '{preset}'")
    return ResNetBackbone(norm=norm, **_PRESETS[preset])


def load_pretrained_backbone(backbone: ResNetBackbone, state_dict_path) -> int:
    """Load torchvision-style ResNet weights where names and shapes match.

    Returns the number of tensors loaded; classifier heads ("fc.*") and any
    mismatched entries are skipped.
    """
    state = torch.load(state_dict_path, map_location="cpu", weights_only=True)
    if "state_dict" in state:
        state = state["state_dict"]
    own = backbone.state_dict()
    usable = {k: v for k, v in state.items()
              if k in own and own[k].shape == v.shape}
    backbone.load_state_dict(usable, strict=False)
    return len(usable)

"""Versioned checkpoint container: config echo, step counter, student and
teacher weights, optimizer state."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch

from .model import NetworkConfig, SRUNet

FORMAT_VERSION = (1, 0)


def save_checkpoint(path, *, config: NetworkConfig, student, teacher,
                    optimizer=None, step=0, epoch=0, extra=None):
    payload = {
        "format_version": list(FORMAT_VERSION),
        "config": dataclasses.asdict(config),
        "step": int(step),
        "epoch": int(epoch),
        "student": student.state_dict(),
        "teacher": teacher.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    major, minor = payload.get("format_version", (0, 0))
    if major != FORMAT_VERSION[0]:
        raise ValueError(
            f"checkpoint format {major}.{minor} is incompatible with "
            f"{FORMAT_VERSION[0]}.{FORMAT_VERSION[1]}"
        )
    return payload


def config_from_payload(payload: dict) -> NetworkConfig:
    raw = dict(payload["config"])
    raw["aspp_rates"] = tuple(raw["aspp_rates"])
    raw["input_size"] = tuple(raw["input_size"])
    return NetworkConfig(**raw).validate()


def restore_models(payload: dict) -> tuple[SRUNet, SRUNet, NetworkConfig]:
    """Rebuild (student, teacher) modules from a loaded checkpoint."""
    config = config_from_payload(payload)
    student = SRUNet(config)
    student.load_state_dict(payload["student"])
    teacher = SRUNet(config)
    teacher.load_state_dict(payload["teacher"])
    for p in teacher.parameters():
        p.requires_grad_(False)
    return student, teacher, config

"""Road updating from current imagery plus a rasterized historical road map.

Pipeline pieces: synthetic scene generation and historical-map simulation,
a dual-input segmentation network with boundary and refinement heads,
mean-teacher semi-supervised training with a pixel contrastive loss,
tiled whole-scene inference, pixel metrics, and raster-to-vector change
reporting.
"""

from . import dataio, infer, metrics, network, objectives, postprocess, trainer
from .network.model import NetworkConfig, SRUNet
from .objectives import LossBundle, ReCoConfig
from .trainer import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "NetworkConfig",
    "SRUNet",
    "LossBundle",
    "ReCoConfig",
    "TrainConfig",
    "fit",
    "dataio",
    "infer",
    "metrics",
    "network",
    "objectives",
    "postprocess",
    "trainer",
    "__version__",
]

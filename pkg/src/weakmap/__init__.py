"""Weakly supervised multi-label localization with SE transitions,
multi-map transfer and max-min pooling, on a miniature DenseNet."""

from weakmap.backbone import BackboneConfig, WeakMapNet
from weakmap.ops import HeadConfig
from weakmap.tensor import Tensor
from weakmap.train import TrainConfig

__all__ = ["BackboneConfig", "HeadConfig", "Tensor", "TrainConfig", "WeakMapNet"]

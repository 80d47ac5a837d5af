"""Two-stream model with pooled feature fusion and channel attention."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .config import ModelConfig
from .nn import Linear, Module
from .streams import DenseStream, MobileStream, dense_feature_shape, mobile_feature_shape

STREAMS = ("mobile", "dense")


class ChannelAttention(Module):
    """Squeeze-excitation gate: ``f * sigmoid(W2 relu(W1 f))``."""

    def __init__(self, rng, width: int, reduction: int):
        self.reduce = Linear(rng, width, width // reduction)
        self.expand = Linear(rng, width // reduction, width)

    def gate(self, f: Tensor) -> Tensor:
        return ag.sigmoid(self.expand(ag.relu(self.reduce(f))))

    def forward(self, f: Tensor) -> Tensor:
        return ag.mul(f, self.gate(f))


def fuse_and_attend(map_a: Tensor, map_b: Tensor, attention: ChannelAttention) -> Tensor:
    """Pool both stream maps, concatenate the channel vectors, apply the gate."""
    if map_a.shape[0] != map_b.shape[0]:
        raise ValueError(f"batch sizes differ: {map_a.shape[0]} vs {map_b.shape[0]}")
    fused = ag.concat_channels(ag.global_avg_pool(map_a), ag.global_avg_pool(map_b))
    return attention(fused)


@dataclass
class ForwardResult:
    logits: Tensor
    features: dict[str, Tensor] = field(default_factory=dict)


class FusionModel(Module):
    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.mobile = MobileStream(rng, config.in_channels, config.mobile)
        self.dense = DenseStream(rng, config.in_channels, config.dense)
        width = self.mobile.out_channels + self.dense.out_channels
        self.attention = ChannelAttention(rng, width, config.attention_reduction)
        self.head = Linear(rng, width, config.num_classes)
        self.epochs_completed = 0

    @property
    def fused_width(self) -> int:
        return self.mobile.out_channels + self.dense.out_channels

    def forward(self, x, return_features: bool = False):
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.head.weight.dtype)
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"expected (N, {self.config.in_channels}, H, W) input, got {x.shape}")
        a = self.mobile(x)
        b = self.dense(x)
        logits = self.head(fuse_and_attend(a, b, self.attention))
        if return_features:
            return ForwardResult(logits, {"mobile": a, "dense": b})
        return logits


def expected_shapes(config: ModelConfig, size: Optional[int] = None) -> dict[str, tuple[int, ...]]:
    """Per-sample shapes of intermediate maps, derived from the config alone."""
    size = config.input_size if size is None else size
    mc, mn = mobile_feature_shape(config.mobile, size)
    dc, dn = dense_feature_shape(config.dense, size)
    width = mc + dc
    return {
        "mobile": (mc, mn, mn),
        "dense": (dc, dn, dn),
        "fused": (width,),
        "attention_hidden": (width // config.attention_reduction,),
        "logits": (config.num_classes,),
    }


def build_mobile_stream(config: ModelConfig, rng=None) -> MobileStream:
    config.validate()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    return MobileStream(rng, config.in_channels, config.mobile)


def build_dense_stream(config: ModelConfig, rng=None) -> DenseStream:
    config.validate()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    return DenseStream(rng, config.in_channels, config.dense)

"""Mobile-style and dense-style convolutional streams."""
from __future__ import annotations

import math
from typing import Optional

from .. import autograd as ag
from .config import DenseBlockSpec, DenseStreamConfig, InvertedResidualSpec, MobileStreamConfig
from .nn import BatchNorm2d, Conv2d, DepthwiseConv2d, Module


def _conv_out(n: int, stride: int) -> int:
    # 3x3 kernel, padding 1
    return (n - 1) // stride + 1


class InvertedResidual(Module):
    """1x1 expand -> 3x3 depthwise -> 1x1 linear projection, with skip when shapes allow."""

    def __init__(self, rng, in_ch: int, spec: InvertedResidualSpec):
        hidden = in_ch * spec.expansion
        self.stride = spec.stride
        self.use_residual = spec.stride == 1 and in_ch == spec.out_channels
        if spec.expansion != 1:
            self.expand = Conv2d(rng, in_ch, hidden, 1)
            self.expand_bn = BatchNorm2d(hidden)
        else:
            self.expand = None
            self.expand_bn = None
        self.depthwise = DepthwiseConv2d(rng, hidden, 3, spec.stride)
        self.depthwise_bn = BatchNorm2d(hidden)
        self.project = Conv2d(rng, hidden, spec.out_channels, 1)
        self.project_bn = BatchNorm2d(spec.out_channels)

    def forward(self, x):
        h = x
        if self.expand is not None:
            h = ag.relu6(self.expand_bn(self.expand(h)))
        h = ag.relu6(self.depthwise_bn(self.depthwise(h)))
        h = self.project_bn(self.project(h))
        return ag.add(x, h) if self.use_residual else h


class MobileStream(Module):
    def __init__(self, rng, in_channels: int, config: MobileStreamConfig):
        self.stem = Conv2d(rng, in_channels, config.stem_channels, 3, stride=2)
        self.stem_bn = BatchNorm2d(config.stem_channels)
        self.blocks = []
        ch = config.stem_channels
        for spec in config.blocks:
            self.blocks.append(InvertedResidual(rng, ch, spec))
            ch = spec.out_channels
        if config.head_channels:
            self.head = Conv2d(rng, ch, config.head_channels, 1)
            self.head_bn = BatchNorm2d(config.head_channels)
            ch = config.head_channels
        else:
            self.head = None
            self.head_bn = None
        self.out_channels = ch

    def forward(self, x):
        """Return the final pre-pool feature map."""
        h = ag.relu6(self.stem_bn(self.stem(x)))
        for block in self.blocks:
            h = block(h)
        if self.head is not None:
            h = ag.relu6(self.head_bn(self.head(h)))
        return h


class DenseLayer(Module):
    """BN -> ReLU -> 3x3 conv emitting ``growth`` channels."""

    def __init__(self, rng, in_ch: int, growth: int):
        self.bn = BatchNorm2d(in_ch)
        self.conv = Conv2d(rng, in_ch, growth, 3)

    def forward(self, x):
        return self.conv(ag.relu(self.bn(x)))


class DenseBlock(Module):
    def __init__(self, rng, in_ch: int, spec: DenseBlockSpec):
        self.layers = [DenseLayer(rng, in_ch + i * spec.growth, spec.growth) for i in range(spec.layers)]
        self.out_channels = in_ch + spec.layers * spec.growth

    def forward(self, x, trace: Optional[list] = None):
        """Layer j sees the block input concatenated with every earlier layer output.

        When ``trace`` is a list, each layer's input tensor is appended to it.
        """
        features = [x]
        for layer in self.layers:
            inp = features[0] if len(features) == 1 else ag.concat_channels(*features)
            if trace is not None:
                trace.append(inp)
            features.append(layer(inp))
        return ag.concat_channels(*features)


class Transition(Module):
    """BN -> ReLU -> 1x1 conv (compression) -> 2x2 average pool."""

    def __init__(self, rng, in_ch: int, out_ch: int):
        self.bn = BatchNorm2d(in_ch)
        self.conv = Conv2d(rng, in_ch, out_ch, 1)

    def forward(self, x):
        return ag.avg_pool2d(self.conv(ag.relu(self.bn(x))), 2)


def _compressed(ch: int, theta: float) -> int:
    return max(1, int(math.floor(theta * ch)))


def dense_out_channels(config: DenseStreamConfig) -> int:
    ch = config.stem_channels
    for i, spec in enumerate(config.blocks):
        ch += spec.layers * spec.growth
        if i < len(config.blocks) - 1:
            ch = _compressed(ch, config.compression)
    return ch


class DenseStream(Module):
    def __init__(self, rng, in_channels: int, config: DenseStreamConfig):
        self.stem = Conv2d(rng, in_channels, config.stem_channels, 3, stride=2)
        self.stem_bn = BatchNorm2d(config.stem_channels)
        self.blocks = []
        self.transitions = []
        ch = config.stem_channels
        for i, spec in enumerate(config.blocks):
            block = DenseBlock(rng, ch, spec)
            self.blocks.append(block)
            ch = block.out_channels
            if i < len(config.blocks) - 1:
                out = _compressed(ch, config.compression)
                self.transitions.append(Transition(rng, ch, out))
                ch = out
        self.final_bn = BatchNorm2d(ch)
        self.out_channels = ch

    def forward(self, x):
        """Return the final pre-pool feature map."""
        h = ag.relu(self.stem_bn(self.stem(x)))
        h = ag.avg_pool2d(h, 2)
        for i, block in enumerate(self.blocks):
            h = block(h)
            if i < len(self.transitions):
                h = self.transitions[i](h)
        return ag.relu(self.final_bn(h))


def mobile_out_channels(config: MobileStreamConfig) -> int:
    return config.head_channels or config.blocks[-1].out_channels


def mobile_feature_shape(config: MobileStreamConfig, size: int) -> tuple[int, int]:
    """(channels, spatial extent) of the mobile stream's output for a square input."""
    n = _conv_out(size, 2)
    for spec in config.blocks:
        n = _conv_out(n, spec.stride)
    return mobile_out_channels(config), n


def dense_feature_shape(config: DenseStreamConfig, size: int) -> tuple[int, int]:
    n = _conv_out(size, 2) // 2
    for _ in config.blocks[:-1]:
        n //= 2
    return dense_out_channels(config), n

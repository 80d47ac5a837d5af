"""Minimal layer containers holding parameters as tensors."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor


class Module:
    """Base container.

    Parameters are discovered from attributes in definition order: tensors
    with ``requires_grad``, nested modules and lists of modules.  Batch-norm
    running statistics are exposed separately as buffers.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, object, str]]:
        """Yield (name, array, owner, attribute) for every running statistic."""
        for name, value in vars(self).items():
            if isinstance(value, ag.BatchNormState):
                for attr in ("running_mean", "running_var"):
                    yield f"{prefix}{name}.{attr}", getattr(value, attr), value, attr
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for _, arr, owner, attr in self.named_buffers():
            setattr(owner, attr, arr.astype(dtype))
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)


class Conv2d(Module):
    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int = 1, padding: int | None = None, bias: bool = False):
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = he_uniform(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel)
        self.bias = Tensor(np.zeros(out_ch, np.float32), requires_grad=True) if bias else None

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, rng, channels: int, kernel: int = 3, stride: int = 1):
        self.stride = stride
        self.padding = kernel // 2
        self.weight = he_uniform(rng, (channels, 1, kernel, kernel), kernel * kernel)

    def forward(self, x):
        return ag.depthwise_conv2d(x, self.weight, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, np.float32), requires_grad=True)
        self.state = ag.BatchNormState.create(channels)

    def forward(self, x):
        return ag.batchnorm2d(x, self.gamma, self.beta, self.state, self.training)


class Linear(Module):
    def __init__(self, rng, in_features: int, out_features: int):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Tensor(rng.uniform(-bound, bound, (out_features, in_features)).astype(np.float32), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, out_features).astype(np.float32), requires_grad=True)

    def forward(self, x):
        return ag.linear(x, self.weight, self.bias)

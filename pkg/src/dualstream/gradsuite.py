"""Finite-difference checks of every differentiable op and a miniature model."""
from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np

from . import autograd as ag
from .autograd import GradCheckReport, Tensor, gradient_check
from .model.config import DenseBlockSpec, DenseStreamConfig, InvertedResidualSpec, MobileStreamConfig, ModelConfig
from .model.fusion import FusionModel


def _away_from(rng, shape, kinks, margin=0.05, low=-2.0, high=8.0) -> np.ndarray:
    """Uniform draws in [low, high] nudged at least ``margin`` from every kink."""
    x = rng.uniform(low, high, size=shape)
    for k in kinks:
        near = np.abs(x - k) < margin
        x[near] = k + np.where(x[near] >= k, margin, -margin) * 2
    return x


def _input_rng(seed: int) -> np.random.Generator:
    # kept apart from the checker's projection stream, which is seeded with ``seed`` itself
    return np.random.default_rng([seed, 1])


def mini_model_config(seed: int = 0) -> ModelConfig:
    """A tiny but complete fusion model: every block type, 16x16 input."""
    return ModelConfig(
        input_size=16,
        mobile=MobileStreamConfig(4, [InvertedResidualSpec(2, 4, 1), InvertedResidualSpec(2, 6, 2)], head_channels=8),
        dense=DenseStreamConfig(4, [DenseBlockSpec(2, 4), DenseBlockSpec(1, 4)], 0.5),
        attention_reduction=2,
        seed=seed,
    )


KINK_MARGIN = 1e-4


def _model_case(seed: int, max_coords: int) -> GradCheckReport:
    rng = _input_rng(seed)
    model = FusionModel(mini_model_config(seed)).astype(np.float64)
    model.train()
    y = rng.integers(0, 4, size=2)
    # redraw the batch until no activation sits within reach of a kink
    for _ in range(100):
        x = rng.standard_normal((2, 1, 16, 16))
        with ag.no_grad(), ag.kink_watch() as watch:
            model(x)
        if watch["min_distance"] > KINK_MARGIN:
            break
    else:
        raise RuntimeError("no kink-free input found")
    return gradient_check(lambda inp: ag.softmax_cross_entropy(model(inp), y), [x], wrt=model.parameters(),
                          seed=seed, max_coords=max_coords)


def op_cases() -> dict[str, Callable[[int], GradCheckReport]]:
    """name -> check(seed); each builds random float64 inputs from its seed."""

    def conv(seed):
        rng = _input_rng(seed)
        return gradient_check(lambda x, w, b: ag.conv2d(x, w, b, stride=2, padding=1),
                              [rng.standard_normal((2, 3, 6, 5)), rng.standard_normal((4, 3, 3, 3)),
                               rng.standard_normal(4)], seed=seed)

    def depthwise(seed):
        rng = _input_rng(seed)
        return gradient_check(lambda x, w: ag.depthwise_conv2d(x, w, stride=1, padding=1),
                              [rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((3, 1, 3, 3))], seed=seed)

    def batchnorm(seed):
        rng = _input_rng(seed)
        state = ag.BatchNormState.create(3)
        return gradient_check(lambda x, g, b: ag.batchnorm2d(x, g, b, state, True),
                              [rng.standard_normal((3, 3, 4, 4)) * 2 + 1, rng.uniform(0.5, 2, 3),
                               rng.standard_normal(3)], seed=seed)

    def relu(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.relu, [_away_from(rng, (4, 5), [0.0])], seed=seed)

    def relu6(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.relu6, [_away_from(rng, (4, 5), [0.0, 6.0])], seed=seed)

    def sigmoid(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.sigmoid, [rng.standard_normal((4, 5)) * 3], seed=seed)

    def gap(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.global_avg_pool, [rng.standard_normal((2, 3, 4, 5))], seed=seed)

    def avgpool(seed):
        rng = _input_rng(seed)
        return gradient_check(lambda x: ag.avg_pool2d(x, 2), [rng.standard_normal((2, 3, 4, 6))], seed=seed)

    def concat(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.concat_channels, [rng.standard_normal((2, 2, 3, 3)), rng.standard_normal((2, 3, 3, 3))],
                              seed=seed)

    def linear(seed):
        rng = _input_rng(seed)
        return gradient_check(ag.linear, [rng.standard_normal((3, 4)), rng.standard_normal((5, 4)),
                                          rng.standard_normal(5)], seed=seed)

    def cross_entropy(seed):
        rng = _input_rng(seed)
        labels = rng.integers(0, 4, size=5)
        return gradient_check(lambda z: ag.softmax_cross_entropy(z, labels), [rng.standard_normal((5, 4)) * 2],
                              seed=seed)

    def elementwise(seed):
        rng = _input_rng(seed)
        return gradient_check(lambda a, b: ag.mul(ag.add(a, b), b), [rng.standard_normal((3, 4)),
                                                                      rng.standard_normal((1, 4))], seed=seed)

    return {
        "conv2d": conv,
        "depthwise_conv2d": depthwise,
        "batchnorm2d": batchnorm,
        "relu": relu,
        "relu6": relu6,
        "sigmoid": sigmoid,
        "global_avg_pool": gap,
        "avg_pool2d": avgpool,
        "concat_channels": concat,
        "linear": linear,
        "softmax_cross_entropy": cross_entropy,
        "add_mul": elementwise,
    }


def run_suite(seeds: Iterable[int] = range(20), include_model: bool = True, model_seeds: Optional[Iterable[int]] = None,
              model_coords: int = 40) -> dict[str, list[GradCheckReport]]:
    """Reports per case and seed.  The model case samples ``model_coords`` coordinates per tensor."""
    seeds = list(seeds)
    results = {name: [case(s) for s in seeds] for name, case in op_cases().items()}
    if include_model:
        results["fusion_model"] = [_model_case(s, model_coords) for s in (seeds if model_seeds is None else model_seeds)]
    return results


def summarize(results: dict[str, list[GradCheckReport]]) -> dict:
    out = {}
    for name, reports in results.items():
        out[name] = {
            "seeds": len(reports),
            "max_rel_error": max(r.max_rel_error for r in reports),
            "passed": all(r.passed for r in reports),
        }
    return out


__all__ = ["mini_model_config", "op_cases", "run_suite", "summarize", "Tensor"]

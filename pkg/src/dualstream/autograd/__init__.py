"""Dense tensors with reverse-mode differentiation."""
from .tensor import Tape, Tensor, as_tensor, check_finite, is_grad_enabled, no_grad
from .functional import (
    BatchNormState,
    add,
    avg_pool2d,
    batchnorm2d,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    global_avg_pool,
    kink_watch,
    linear,
    mul,
    relu,
    relu6,
    scale,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    total,
)
from .optim import SGD, OptimizerState, sgd_momentum_step
from .gradcheck import GradCheckReport, gradient_check, relative_error

__all__ = [
    "Tape", "Tensor", "as_tensor", "check_finite", "is_grad_enabled", "no_grad",
    "BatchNormState", "add", "avg_pool2d", "batchnorm2d", "concat_channels", "conv2d",
    "depthwise_conv2d", "global_avg_pool", "kink_watch", "linear", "mul", "relu", "relu6", "scale",
    "sigmoid", "softmax", "softmax_cross_entropy", "total",
    "SGD", "OptimizerState", "sgd_momentum_step",
    "GradCheckReport", "gradient_check", "relative_error",
]

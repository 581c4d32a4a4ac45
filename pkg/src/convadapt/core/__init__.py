from .gradcheck import GradCheckResult, check_gradients, finite_difference_grad, relative_error
from .ops import (
    add,
    batchnorm2d,
    conv2d,
    gelu,
    global_average_pool,
    linear,
    mean,
    mul,
    relu,
    reshape,
    same_padding,
    softmax_cross_entropy,
    sub,
    sum,
)
from .tensor import Parameter, Tensor, TapeRecord, backward, no_grad, trace

__all__ = [
    "GradCheckResult",
    "Parameter",
    "TapeRecord",
    "Tensor",
    "add",
    "backward",
    "batchnorm2d",
    "check_gradients",
    "conv2d",
    "finite_difference_grad",
    "gelu",
    "global_average_pool",
    "linear",
    "mean",
    "mul",
    "no_grad",
    "relative_error",
    "relu",
    "reshape",
    "same_padding",
    "softmax_cross_entropy",
    "sub",
    "sum",
    "trace",
]

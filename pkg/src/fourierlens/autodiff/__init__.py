"""Tape-based reverse-mode autodiff with recordable backward passes."""

import numpy as np

from . import ops as _ops  # noqa: F401  (registers op kinds)
from .tensor import (
    OPS,
    GradientMap,
    Tensor,
    as_tensor,
    backward,
    grad,
    grad_input,
    grad_mode,
    is_grad_enabled,
    no_grad,
    numeric_grad,
    record,
)


def parameter(data, dtype=None, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


def conv2d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    return record("conv2d", [x, w], stride=stride, padding=padding)


def avgpool2d(x, k: int = 2) -> Tensor:
    return record("avgpool2d", [x], k=k)


def maxpool2d(x, k: int = 2) -> Tensor:
    return record("maxpool2d", [x], k=k)


def softmax(x, axis: int = -1) -> Tensor:
    return record("softmax", [x], axis=axis)


def softmax_cross_entropy(logits, target) -> Tensor:
    return record("softmax-cross-entropy", [logits], target=np.asarray(target, dtype=np.int64))


def div_eps(a, b, eps: float) -> Tensor:
    return record("div", [a, b], eps=float(eps))


def complex_pack(re, im) -> Tensor:
    return record("complex-pack", [re, im])


def dft2_unitary(z, inverse: bool = False) -> Tensor:
    """Unitary 2D DFT of a packed (..., N, N, 2) tensor."""
    return record("dft2-unitary", [z], inverse=inverse)


def dft2_real(x) -> Tensor:
    """Unitary 2D DFT of a real (..., N, N) tensor, packed output."""
    x = as_tensor(x)
    return dft2_unitary(complex_pack(x, Tensor(np.zeros(x.shape, dtype=x.dtype))))


__all__ = [
    "OPS",
    "GradientMap",
    "Tensor",
    "as_tensor",
    "avgpool2d",
    "backward",
    "complex_pack",
    "conv2d",
    "dft2_real",
    "dft2_unitary",
    "div_eps",
    "grad",
    "grad_input",
    "grad_mode",
    "is_grad_enabled",
    "maxpool2d",
    "no_grad",
    "numeric_grad",
    "parameter",
    "record",
    "softmax",
    "softmax_cross_entropy",
]

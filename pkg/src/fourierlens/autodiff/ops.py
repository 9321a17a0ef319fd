"""Op kinds for the tape.

Each backward is expressed through :func:`record`, so it is itself
differentiable. Linear ops come in adjoint pairs (conv2d and its two
adjoints, avgpool/upsample, maxpool scatter/gather, dft/idft, pack/component),
which closes the set under repeated differentiation.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from . import kernels as K
from .tensor import Op, Tensor, record, register


def unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    axes = list(range(extra))
    for i, s in enumerate(shape):
        if s == 1 and g.shape[extra + i] != 1:
            axes.append(extra + i)
    out = g.sum(axis=tuple(axes), keepdims=True) if axes else g
    return out.reshape(shape)


def _broadcast_check(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}") from exc


# -- elementwise -------------------------------------------------------------


@register
class Add(Op):
    name, arity = "add", 2

    def forward(self, a, b):
        _broadcast_check(a, b)
        return a + b, None

    def backward(self, node, g, needs):
        a, b = node.parents
        return (
            unbroadcast(g, a.shape) if needs[0] else None,
            unbroadcast(g, b.shape) if needs[1] else None,
        )


@register
class Sub(Op):
    name, arity = "sub", 2

    def forward(self, a, b):
        _broadcast_check(a, b)
        return a - b, None

    def backward(self, node, g, needs):
        a, b = node.parents
        return (
            unbroadcast(g, a.shape) if needs[0] else None,
            unbroadcast(-g, b.shape) if needs[1] else None,
        )


@register
class Mul(Op):
    name, arity = "mul", 2

    def forward(self, a, b):
        _broadcast_check(a, b)
        return a * b, None

    def backward(self, node, g, needs):
        a, b = node.parents
        return (
            unbroadcast(g * b, a.shape) if needs[0] else None,
            unbroadcast(g * a, b.shape) if needs[1] else None,
        )


@register
class ScalarMul(Op):
    name = "scalar-mul"

    def forward(self, a, c):
        return a * c, None

    def backward(self, node, g, needs):
        return (record("scalar-mul", [g], c=node.attrs["c"]),)


@register
class AddScalar(Op):
    name = "add-scalar"

    def forward(self, a, c):
        return a + c, None

    def backward(self, node, g, needs):
        return (g,)


@register
class DivEps(Op):
    """a / (b + eps), elementwise with broadcasting."""

    name, arity = "div", 2

    def forward(self, a, b, eps):
        _broadcast_check(a, b)
        return a / (b + eps), None

    def backward(self, node, g, needs):
        a, b = node.parents
        eps = node.attrs["eps"]
        ga = gb = None
        if needs[0]:
            ga = unbroadcast(record("div", [g, b], eps=eps), a.shape)
        if needs[1]:
            gb = unbroadcast(-record("div", [g * node, b], eps=eps), b.shape)
        return ga, gb


@register
class Relu(Op):
    name = "relu"

    def forward(self, a):
        mask = (a > 0).astype(a.dtype)  # subgradient 0 at the kink
        return a * mask, mask

    def backward(self, node, g, needs):
        return (g * Tensor(node.saved),)


@register
class Exp(Op):
    name = "exp"

    def forward(self, a):
        return np.exp(a), None

    def backward(self, node, g, needs):
        return (g * node,)


@register
class Log(Op):
    name = "log"

    def forward(self, a):
        return np.log(a), None

    def backward(self, node, g, needs):
        return (record("div", [g, node.parents[0]], eps=0.0),)


@register
class Square(Op):
    name = "square"

    def forward(self, a):
        return a * a, None

    def backward(self, node, g, needs):
        return (g * node.parents[0] * 2.0,)


@register
class Sqrt(Op):
    name = "sqrt"

    def forward(self, a):
        return np.sqrt(a), None

    def backward(self, node, g, needs):
        return (record("div", [g * 0.5, node], eps=0.0),)


# -- shape / reductions --------------------------------------------------------


@register
class Reshape(Op):
    name = "reshape"

    def forward(self, a, shape):
        return a.reshape(shape), None

    def backward(self, node, g, needs):
        return (g.reshape(node.parents[0].shape),)


@register
class Transpose(Op):
    name = "transpose"

    def forward(self, a, axes):
        if sorted(axes) != list(range(a.ndim)):
            raise DimensionError(f"bad transpose axes {axes} for rank {a.ndim}")
        return np.array(a.transpose(axes), order="C"), None

    def backward(self, node, g, needs):
        inv = tuple(np.argsort(node.attrs["axes"]))
        return (g.transpose(inv),)


def _keepdims_shape(shape, axis):
    if axis is None:
        return tuple(1 for _ in shape)
    return tuple(1 if i in axis else s for i, s in enumerate(shape))


@register
class Sum(Op):
    name = "sum"

    def forward(self, a, axis, keepdims):
        return np.sum(a, axis=axis, keepdims=keepdims), None

    def backward(self, node, g, needs):
        shape = node.parents[0].shape
        g = g.reshape(_keepdims_shape(shape, node.attrs["axis"]))
        return (g.broadcast_to(shape),)


@register
class Mean(Op):
    name = "mean"

    def forward(self, a, axis, keepdims):
        return np.mean(a, axis=axis, keepdims=keepdims), None

    def backward(self, node, g, needs):
        shape = node.parents[0].shape
        n = int(np.prod(shape)) // max(int(np.prod(node.shape)), 1)
        g = g.reshape(_keepdims_shape(shape, node.attrs["axis"]))
        return (g.broadcast_to(shape) * (1.0 / n),)


@register
class BroadcastTo(Op):
    name = "broadcast-to"

    def forward(self, a, shape):
        return np.array(np.broadcast_to(a, shape)), None

    def backward(self, node, g, needs):
        return (unbroadcast(g, node.parents[0].shape),)


@register
class MatMul(Op):
    name, arity = "matmul", 2

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul needs (m,k)@(k,n), got {a.shape}@{b.shape}")
        return a @ b, None

    def backward(self, node, g, needs):
        a, b = node.parents
        return (
            g @ b.T if needs[0] else None,
            a.T @ g if needs[1] else None,
        )


# -- softmax / loss ------------------------------------------------------------


@register
class Softmax(Op):
    name = "softmax"

    def forward(self, a, axis=-1):
        return K.softmax(a, axis), None

    def backward(self, node, g, needs):
        axis = node.attrs.get("axis", -1)
        s = node
        gs = g * s
        return (gs - s * gs.sum(axis=axis, keepdims=True),)


@register
class SoftmaxCrossEntropy(Op):
    """Mean over the batch of -log softmax(logits)[target]."""

    name = "softmax-cross-entropy"

    def forward(self, z, target):
        if z.ndim != 2:
            raise DimensionError(f"logits must be (batch, classes), got {z.shape}")
        target = np.asarray(target)
        if target.shape != (z.shape[0],):
            raise DimensionError(f"targets {target.shape} do not match batch {z.shape[0]}")
        if target.size and (target.min() < 0 or target.max() >= z.shape[1]):
            raise ValueError("label out of range")
        lsm = K.log_softmax(z, axis=1)
        loss = -np.mean(lsm[np.arange(z.shape[0]), target])
        return np.asarray(loss, dtype=z.dtype), None

    def backward(self, node, g, needs):
        z = node.parents[0]
        target = node.attrs["target"]
        b, c = z.shape
        onehot = np.zeros((b, c), dtype=z.dtype)
        onehot[np.arange(b), target] = 1.0
        probs = record("softmax", [z], axis=1)
        return ((probs - Tensor(onehot)) * (g * (1.0 / b)),)


# -- complex packing and the unitary DFT ---------------------------------------


@register
class ComplexPack(Op):
    """(re, im) -> (..., 2) interleaved representation."""

    name, arity = "complex-pack", 2

    def forward(self, re, im):
        if re.shape != im.shape:
            raise DimensionError(f"real/imag shapes differ: {re.shape} vs {im.shape}")
        return np.stack([re, im], axis=-1), None

    def backward(self, node, g, needs):
        return (
            record("component", [g], index=0) if needs[0] else None,
            record("component", [g], index=1) if needs[1] else None,
        )


@register
class Component(Op):
    name = "component"

    def forward(self, z, index):
        if z.shape[-1] != 2:
            raise DimensionError(f"expected trailing axis of size 2, got {z.shape}")
        return np.ascontiguousarray(z[..., index]), None

    def backward(self, node, g, needs):
        zero = Tensor(np.zeros(g.shape, dtype=g.dtype))
        pair = [g, zero] if node.attrs["index"] == 0 else [zero, g]
        return (record("complex-pack", pair),)


@register
class Dft2Unitary(Op):
    """Unitary 2D DFT (or inverse) on a packed (..., N, N, 2) tensor.

    The map is complex-linear and unitary, so with the real inner product on
    the packed layout its adjoint is the opposite-direction transform.
    """

    name = "dft2-unitary"

    def forward(self, z, inverse=False):
        if z.ndim < 3 or z.shape[-1] != 2 or z.shape[-2] != z.shape[-3]:
            raise DimensionError(f"expected (..., N, N, 2), got {z.shape}")
        return K.dft2_packed(z, inverse), None

    def backward(self, node, g, needs):
        return (record("dft2-unitary", [g], inverse=not node.attrs.get("inverse", False)),)


# -- convolution and pooling -----------------------------------------------------


@register
class Conv2d(Op):
    name, arity = "conv2d", 2

    def forward(self, x, w, stride=1, padding=0):
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise DimensionError(f"conv2d needs x (B,C,H,W) and w (O,C,kh,kw), got {x.shape}, {w.shape}")
        if K.conv_out_size(x.shape[2], w.shape[2], stride, padding) < 1:
            raise DimensionError("kernel larger than padded input")
        return K.conv2d(x, w, stride, padding), None

    def backward(self, node, g, needs):
        x, w = node.parents
        s, p = node.attrs.get("stride", 1), node.attrs.get("padding", 0)
        gx = gw = None
        if needs[0]:
            gx = record("conv2d-input-grad", [g, w], x_hw=x.shape[2:], stride=s, padding=p)
        if needs[1]:
            gw = record("conv2d-weight-grad", [x, g], k_hw=w.shape[2:], stride=s, padding=p)
        return gx, gw


@register
class Conv2dInputGrad(Op):
    """y = conv2d_x^T(g; w). Bilinear in (g, w)."""

    name, arity = "conv2d-input-grad", 2

    def forward(self, g, w, x_hw, stride, padding):
        return K.conv2d_input_grad(g, w, tuple(x_hw), stride, padding), None

    def backward(self, node, h, needs):
        g, w = node.parents
        s, p = node.attrs["stride"], node.attrs["padding"]
        gg = gw = None
        if needs[0]:
            gg = record("conv2d", [h, w], stride=s, padding=p)
        if needs[1]:
            gw = record("conv2d-weight-grad", [h, g], k_hw=w.shape[2:], stride=s, padding=p)
        return gg, gw


@register
class Conv2dWeightGrad(Op):
    """y = conv2d_w^T(x; g). Bilinear in (x, g)."""

    name, arity = "conv2d-weight-grad", 2

    def forward(self, x, g, k_hw, stride, padding):
        return K.conv2d_weight_grad(x, g, tuple(k_hw), stride, padding), None

    def backward(self, node, h, needs):
        x, g = node.parents
        s, p = node.attrs["stride"], node.attrs["padding"]
        gx = gg = None
        if needs[0]:
            gx = record("conv2d-input-grad", [g, h], x_hw=x.shape[2:], stride=s, padding=p)
        if needs[1]:
            gg = record("conv2d", [x, h], stride=s, padding=p)
        return gx, gg


def _check_pool(x, k):
    if x.ndim != 4 or x.shape[2] % k or x.shape[3] % k:
        raise DimensionError(f"pool size {k} must divide spatial dims of {x.shape}")


@register
class AvgPool2d(Op):
    name = "avgpool2d"

    def forward(self, x, k=2):
        _check_pool(x, k)
        return K.avgpool2d(x, k), None

    def backward(self, node, g, needs):
        return (record("avgpool2d-adjoint", [g], k=node.attrs.get("k", 2)),)


@register
class AvgPool2dAdjoint(Op):
    name = "avgpool2d-adjoint"

    def forward(self, g, k):
        return K.avgpool2d_adjoint(g, k), None

    def backward(self, node, h, needs):
        return (record("avgpool2d", [h], k=node.attrs["k"]),)


@register
class MaxPool2d(Op):
    name = "maxpool2d"

    def forward(self, x, k=2):
        _check_pool(x, k)
        return K.maxpool2d(x, k)

    def backward(self, node, g, needs):
        return (record("maxpool2d-scatter", [g], idx=node.saved, k=node.attrs.get("k", 2)),)


@register
class MaxPool2dScatter(Op):
    name = "maxpool2d-scatter"

    def forward(self, g, idx, k):
        return K.maxpool2d_scatter(g, idx, k), None

    def backward(self, node, h, needs):
        return (record("maxpool2d-gather", [h], idx=node.attrs["idx"], k=node.attrs["k"]),)


@register
class MaxPool2dGather(Op):
    name = "maxpool2d-gather"

    def forward(self, h, idx, k):
        return K.maxpool2d_gather(h, idx, k), None

    def backward(self, node, g, needs):
        return (record("maxpool2d-scatter", [g], idx=node.attrs["idx"], k=node.attrs["k"]),)

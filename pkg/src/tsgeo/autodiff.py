"""Minimal dense-tensor reverse-mode autodiff engine.

Everything is float64.  A computation graph is built eagerly while
operations run, consumed by a single :func:`backward` call, and freed
afterwards; training loops rebuild the graph every step.  There is no
broadcasting except scalar-times-tensor: mismatched shapes are errors,
which keeps silent bugs out of a from-scratch engine.

The public primitive set is the one accepted by :func:`apply_op`:

    add, subtract, elementwise-multiply, scalar-multiply, matmul,
    conv2d, conv2d-transpose, relu, softmax, layer-norm, mean, sum,
    absolute-value, square, reshape, slice, concatenate

Composite operations (e.g. the spectral loss) can register custom graph
nodes through :func:`graph_node`.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class ShapeMismatchError(ValueError):
    """Operand shapes incompatible for the requested operator."""


class UnknownOpError(ValueError):
    """Operator kind not in the primitive set."""


class GraphConsumedError(RuntimeError):
    """backward() was called on a graph that has already been consumed."""


_node_counter = itertools.count(1)


class Tensor:
    """A dense float64 array that may participate in a computation graph.

    Attributes:
        data: the value, a C-contiguous float64 ndarray.
        requires_grad: whether backward() should deposit a gradient here.
        grad: accumulated gradient (same shape as data), or None.
        node_id: unique, creation-ordered id; also the topological order.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id",
                 "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id = next(_node_counter)
        self._parents: Optional[tuple] = None
        self._backward: Optional[Callable] = None
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def is_leaf(self) -> bool:
        return self._backward is None and not self._consumed

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = self.name or f"node{self.node_id}"
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"

    # small amount of operator sugar; the functional API below is the
    # primary surface
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return multiply(self, other)
        return scalar_multiply(self, other)

    __rmul__ = __mul__


def graph_node(data, parents: Sequence[Tensor], backward_fn, name: str = "") -> Tensor:
    """Create a graph node with a custom backward.

    ``backward_fn(grad_out)`` must return one gradient array (or None)
    per parent.  The node is only recorded when some parent requires
    gradients; otherwise the result is a plain constant tensor.
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    out.name = name
    return out


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss, accumulating leaf gradients.

    The traversed graph is freed afterwards; calling backward a second
    time through any part of it raises GraphConsumedError.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphConsumedError("graph already consumed by a previous backward()")

    # collect reachable nodes; node_id order is a topological order
    seen = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.node_id in seen:
            continue
        seen[t.node_id] = t
        if t._consumed:
            raise GraphConsumedError(
                "graph already consumed by a previous backward()")
        if t._parents:
            stack.extend(t._parents)

    grads = {loss.node_id: np.ones_like(loss.data)}
    for node_id in sorted(seen, reverse=True):
        t = seen[node_id]
        g = grads.pop(node_id, None)
        if g is None:
            continue
        if t._backward is None:
            if t.requires_grad:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += g
            continue
        parent_grads = t._backward(g)
        for parent, pg in zip(t._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(parent.node_id)
            if acc is None:
                grads[parent.node_id] = np.asarray(pg, dtype=np.float64)
            else:
                # fresh array: pg may be a read-only broadcast view
                grads[parent.node_id] = acc + pg
        # free and fence this part of the graph
        t._parents = None
        t._backward = None
        t._consumed = True
    loss._consumed = True


# ---------------------------------------------------------------------------
# primitives

def _shapes(op, *tensors):
    dims = " vs ".join(str(t.data.shape) for t in tensors)
    return f"{op}: incompatible shapes {dims}"


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(_shapes("add", a, b))
    return graph_node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def subtract(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(_shapes("subtract", a, b))
    return graph_node(a.data - b.data, (a, b), lambda g: (g, -g), "subtract")


def multiply(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(_shapes("elementwise-multiply", a, b))
    ad, bd = a.data, b.data
    return graph_node(ad * bd, (a, b), lambda g: (g * bd, g * ad),
                      "elementwise-multiply")


def scalar_multiply(a: Tensor, scalar: float) -> Tensor:
    c = float(scalar)
    return graph_node(a.data * c, (a,), lambda g: (g * c,), "scalar-multiply")


def matmul(a: Tensor, b: Tensor, transpose_a: bool = False,
           transpose_b: bool = False) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError(
            f"matmul: operands must be 2-D, got {a.data.shape} and {b.data.shape}")
    ad = a.data.T if transpose_a else a.data
    bd = b.data.T if transpose_b else b.data
    if ad.shape[1] != bd.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dimensions {ad.shape} x {bd.shape} do not agree")

    def back(g):
        ga = (bd @ g.T) if transpose_a else (g @ bd.T)
        gb = (g.T @ ad) if transpose_b else (ad.T @ g)
        return ga, gb

    return graph_node(ad @ bd, (a, b), back, "matmul")


def _check_conv_operands(op, x, w, bias, w_in_axis):
    if x.data.ndim != 3:
        raise ShapeMismatchError(f"{op}: input must be (C,H,W), got {x.data.shape}")
    if w.data.ndim != 4:
        raise ShapeMismatchError(f"{op}: weights must be 4-D, got {w.data.shape}")
    if x.data.shape[0] != w.data.shape[w_in_axis]:
        raise ShapeMismatchError(
            f"{op}: input channels {x.data.shape[0]} vs weight channels "
            f"{w.data.shape[w_in_axis]}")
    if bias is not None and bias.data.shape != (w.data.shape[1 - w_in_axis],):
        raise ShapeMismatchError(
            f"{op}: bias shape {bias.data.shape} does not match "
            f"{w.data.shape[1 - w_in_axis]} output channels")


def conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. x: (C,H,W), w: (K,C,kh,kw), bias: (K,)."""
    _check_conv_operands("conv2d", x, w, bias, w_in_axis=1)
    _, h, w_in = x.data.shape
    _, _, kh, kw = w.data.shape
    if h + 2 * padding < kh or w_in + 2 * padding < kw:
        raise ShapeMismatchError(
            f"conv2d: kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding}x{w_in + 2 * padding}")
    y = kernels.conv2d_forward(x.data, w.data, stride, padding)
    if bias is not None:
        y = y + bias.data[:, None, None]
    xd, wd = x.data, w.data

    def back(g):
        g = np.ascontiguousarray(g)
        gx = kernels.conv2d_input_grad(g, wd, stride, padding, h, w_in)
        gw = kernels.conv2d_weight_grad(xd, g, stride, padding, kh, kw)
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, w) if bias is None else (x, w, bias)
    return graph_node(y, parents, back, "conv2d")


def conv2d_transpose(x: Tensor, w: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """Transposed 2-D convolution. x: (C,H,W), w: (C,K,kh,kw), bias: (K,).

    Output spatial dims: (H-1)*stride - 2*padding + kh + output_padding.
    output_padding must be smaller than stride.
    """
    _check_conv_operands("conv2d-transpose", x, w, bias, w_in_axis=0)
    if not 0 <= output_padding < max(stride, 1):
        raise ShapeMismatchError(
            f"conv2d-transpose: output_padding {output_padding} must be in "
            f"[0, stride)")
    _, h, w_in = x.data.shape
    _, _, kh, kw = w.data.shape
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w_in - 1) * stride - 2 * padding + kw + output_padding
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"conv2d-transpose: output dims {ho}x{wo} collapse to nothing")
    # transposed conv is the input-gradient scatter of the matching conv2d
    y = kernels.conv2d_input_grad(x.data, w.data, stride, padding, ho, wo)
    if bias is not None:
        y = y + bias.data[:, None, None]
    xd, wd = x.data, w.data

    def back(g):
        g = np.ascontiguousarray(g)
        gx = kernels.conv2d_forward(g, wd, stride, padding)
        gw = kernels.conv2d_weight_grad(g, xd, stride, padding, kh, kw)
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, w) if bias is None else (x, w, bias)
    return graph_node(y, parents, back, "conv2d-transpose")


def relu(x: Tensor) -> Tensor:
    xd = x.data
    # gradient at exactly 0 is 0 (subgradient choice)
    return graph_node(np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0),), "relu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return graph_node(s, (x,), back, "softmax")


def layer_norm(x: Tensor, axis: int = -1, epsilon: float = 1e-5) -> Tensor:
    xd = x.data
    n = xd.shape[axis]
    mu = xd.mean(axis=axis, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=axis, keepdims=True)
    istd = 1.0 / np.sqrt(var + epsilon)
    xhat = (xd - mu) * istd

    def back(g):
        gsum = g.sum(axis=axis, keepdims=True)
        gxsum = (g * xhat).sum(axis=axis, keepdims=True)
        return ((istd / n) * (n * g - gsum - xhat * gxsum),)

    return graph_node(xhat, (x,), back, "layer-norm")


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    xd = x.data

    def back(g):
        if axis is None:
            return (np.full_like(xd, float(g.reshape(())) / xd.size),)
        return (np.broadcast_to(np.expand_dims(g, axis), xd.shape) / xd.shape[axis],)

    return graph_node(np.mean(xd, axis=axis), (x,), back, "mean")


def tensor_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    xd = x.data

    def back(g):
        if axis is None:
            return (np.full_like(xd, float(g.reshape(()))),)
        return (np.ascontiguousarray(
            np.broadcast_to(np.expand_dims(g, axis), xd.shape)),)

    return graph_node(np.sum(xd, axis=axis), (x,), back, "sum")


def absolute(x: Tensor) -> Tensor:
    xd = x.data
    return graph_node(np.abs(xd), (x,), lambda g: (g * np.sign(xd),),
                      "absolute-value")


def square(x: Tensor) -> Tensor:
    xd = x.data
    return graph_node(xd * xd, (x,), lambda g: (2.0 * g * xd,), "square")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise ShapeMismatchError(
            f"reshape: cannot reshape {x.data.shape} to {shape}")
    old = x.data.shape
    return graph_node(x.data.reshape(shape), (x,),
                      lambda g: (g.reshape(old),), "reshape")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    xd = x.data
    axis = axis % xd.ndim
    n = xd.shape[axis]
    if not (0 <= start < stop <= n):
        raise ShapeMismatchError(
            f"slice: [{start}:{stop}] out of range for axis {axis} of size {n}")
    index = tuple(slice(start, stop) if d == axis else slice(None)
                  for d in range(xd.ndim))

    def back(g):
        gx = np.zeros_like(xd)
        gx[index] = g
        return (gx,)

    return graph_node(xd[index].copy(), (x,), back, "slice")


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatchError("concatenate: no operands")
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        a, b = list(ref), list(t.data.shape)
        ax = axis % len(a) if a else 0
        if len(a) != len(b) or a[:ax] + a[ax + 1:] != b[:ax] + b[ax + 1:]:
            raise ShapeMismatchError(_shapes("concatenate", *tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(p)
                     for p in np.split(g, offsets, axis=axis))

    return graph_node(np.concatenate([t.data for t in tensors], axis=axis),
                      tuple(tensors), back, "concatenate")


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x @ w + b for 2-D x, with the bias row tiled via a ones matmul.

    Composed entirely from primitives, so the no-broadcast rule stays
    intact while the (out,) bias still reaches every row.
    """
    y = matmul(x, w)
    if b is not None:
        ones = Tensor(np.ones((x.data.shape[0], 1)))
        y = add(y, matmul(ones, reshape(b, (1, b.data.size))))
    return y


# ---------------------------------------------------------------------------
# kind-string dispatch

def _op_add(operands, attrs):
    return add(*operands)


def _op_subtract(operands, attrs):
    return subtract(*operands)


def _op_multiply(operands, attrs):
    return multiply(*operands)


def _op_scalar_multiply(operands, attrs):
    return scalar_multiply(operands[0], attrs["scalar"])


def _op_matmul(operands, attrs):
    return matmul(*operands, transpose_a=attrs.get("transpose_a", False),
                  transpose_b=attrs.get("transpose_b", False))


def _op_conv2d(operands, attrs):
    return conv2d(*operands, stride=attrs.get("stride", 1),
                  padding=attrs.get("padding", 0))


def _op_conv2d_transpose(operands, attrs):
    return conv2d_transpose(*operands, stride=attrs.get("stride", 1),
                            padding=attrs.get("padding", 0),
                            output_padding=attrs.get("output_padding", 0))


def _op_softmax(operands, attrs):
    return softmax(operands[0], axis=attrs.get("axis", -1))


def _op_layer_norm(operands, attrs):
    return layer_norm(operands[0], axis=attrs.get("axis", -1),
                      epsilon=attrs.get("epsilon", 1e-5))


def _op_mean(operands, attrs):
    return mean(operands[0], axis=attrs.get("axis"))


def _op_sum(operands, attrs):
    return tensor_sum(operands[0], axis=attrs.get("axis"))


def _op_reshape(operands, attrs):
    return reshape(operands[0], attrs["shape"])


def _op_slice(operands, attrs):
    return slice_axis(operands[0], attrs.get("axis", 0), attrs["start"],
                      attrs["stop"])


def _op_concatenate(operands, attrs):
    return concatenate(operands, axis=attrs.get("axis", 0))


_OPS = {
    "add": (_op_add, 2),
    "subtract": (_op_subtract, 2),
    "elementwise-multiply": (_op_multiply, 2),
    "scalar-multiply": (_op_scalar_multiply, 1),
    "matmul": (_op_matmul, 2),
    "conv2d": (_op_conv2d, (2, 3)),
    "conv2d-transpose": (_op_conv2d_transpose, (2, 3)),
    "relu": (lambda ops, at: relu(ops[0]), 1),
    "softmax": (_op_softmax, 1),
    "layer-norm": (_op_layer_norm, 1),
    "mean": (_op_mean, 1),
    "sum": (_op_sum, 1),
    "absolute-value": (lambda ops, at: absolute(ops[0]), 1),
    "square": (lambda ops, at: square(ops[0]), 1),
    "reshape": (_op_reshape, 1),
    "slice": (_op_slice, 1),
    "concatenate": (_op_concatenate, None),
}


def apply_op(kind: str, operands: Sequence[Tensor], attrs: Optional[dict] = None
             ) -> Tensor:
    """Apply a primitive by kind string; the uniform entry point.

    Raises UnknownOpError for a kind outside the primitive set and
    ShapeMismatchError when operand shapes are incompatible.
    """
    if kind not in _OPS:
        raise UnknownOpError(f"unknown operator kind: {kind!r}")
    fn, arity = _OPS[kind]
    operands = list(operands)
    if arity is not None:
        allowed = arity if isinstance(arity, tuple) else (arity,)
        if len(operands) not in allowed:
            raise ShapeMismatchError(
                f"{kind}: expected {allowed} operands, got {len(operands)}")
    return fn(operands, attrs or {})

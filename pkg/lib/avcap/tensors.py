# -*- coding: utf-8 -*-
#
# AVCap tensor core.
#
# Dense numpy tensors with reverse-mode differentiation. Every op is a Function subclass with a
# forward() over numpy arrays and a backward() returning one gradient per parent. The graph is
# recorded only when some input requires a gradient and recording is enabled (see no_grad()).
#
# Every op checks its output for NaN/Inf and raises NumericalError naming the op.
#

# --- Python standard library ---
from __future__ import unicode_literals
from __future__ import division
from __future__ import annotations

import contextlib
import logging
import typing

# --- Numerics ---
import numpy as np
from scipy import special, stats

from avcap import constants
from avcap.constants import ShapeError, InputError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_float_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray) and data.dtype.kind == 'f' and dtype is None:
        return data
    return np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)


def _check_finite(op_name: str, array: np.ndarray):
    if not np.all(np.isfinite(array)):
        raise NumericalError('Non-finite values produced by {}'.format(op_name))


#
# Sums a broadcast gradient back to the shape of the operand it came from.
#
def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -------------------------------------------------------------------------------------------------
# Tensor
# -------------------------------------------------------------------------------------------------
class Tensor(object):

    def __init__(self, data, requires_grad: bool = False, _ctx: Function = None, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: typing.Optional[np.ndarray] = None
        self._ctx = _ctx

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError('Tensor of shape {} is not a scalar'.format(self.shape))
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return 'Tensor(shape={}, dtype={}, requires_grad={})'.format(self.shape, self.dtype, self.requires_grad)

    # --- Operators ---
    def __add__(self, other): return Add.apply(self, _lift(other, self))
    def __radd__(self, other): return Add.apply(_lift(other, self), self)
    def __sub__(self, other): return Sub.apply(self, _lift(other, self))
    def __rsub__(self, other): return Sub.apply(_lift(other, self), self)
    def __mul__(self, other): return Mul.apply(self, _lift(other, self))
    def __rmul__(self, other): return Mul.apply(_lift(other, self), self)
    def __neg__(self): return Mul.apply(self, _lift(-1.0, self))
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False) -> Tensor:
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> Tensor:
        count = self.data.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes if axes else None)

    # ---------------------------------------------------------------------------------------------
    # Reverse pass. Gradients land in .grad of the leaf tensors that require them.
    # ---------------------------------------------------------------------------------------------
    def backward(self, grad: np.ndarray = None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError('backward() needs a scalar loss, got shape {}'.format(self.shape))
            grad = np.ones_like(self.data)

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        grads = {id(self): grad}
        for node in reversed(topo):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._ctx is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            parent_grads = node._ctx.backward(node_grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                _check_finite('{}.backward'.format(type(node._ctx).__name__), parent_grad)
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


# -------------------------------------------------------------------------------------------------
# Function base
# -------------------------------------------------------------------------------------------------
class Function(object):

    def __init__(self, *parents: Tensor):
        self.parents = parents

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError()

    def backward(self, grad: np.ndarray) -> typing.Sequence[typing.Optional[np.ndarray]]:
        raise NotImplementedError()

    @classmethod
    def apply(cls, *parents: Tensor, **kwargs) -> Tensor:
        ctx = cls(*parents)
        data = ctx.forward(*[p.data for p in parents], **kwargs)
        _check_finite(cls.__name__, data)
        requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=requires_grad, _ctx=ctx if requires_grad else None)


# -------------------------------------------------------------------------------------------------
# Elementwise and structural ops
# -------------------------------------------------------------------------------------------------
class Add(Function):
    def forward(self, x, y):
        self.x_shape, self.y_shape = x.shape, y.shape
        return x + y

    def backward(self, grad):
        return _unbroadcast(grad, self.x_shape), _unbroadcast(grad, self.y_shape)


class Sub(Function):
    def forward(self, x, y):
        self.x_shape, self.y_shape = x.shape, y.shape
        return x - y

    def backward(self, grad):
        return _unbroadcast(grad, self.x_shape), _unbroadcast(-grad, self.y_shape)


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return _unbroadcast(grad * self.y, self.x.shape), _unbroadcast(grad * self.x, self.y.shape)


class MatMul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return _unbroadcast(grad_a, self.a.shape), _unbroadcast(grad_b, self.b.shape)


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.x_shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, axis=self.axis)
        return np.broadcast_to(grad, self.x_shape).copy(),


class Reshape(Function):
    def forward(self, x, shape=None):
        self.x_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeError('Cannot reshape {} into {}'.format(x.shape, shape))

    def backward(self, grad):
        return grad.reshape(self.x_shape),


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, grad):
        if self.axes is None:
            return np.transpose(grad),
        return np.transpose(grad, np.argsort(self.axes)),


class GetItem(Function):
    def forward(self, x, index=None):
        self.x_shape, self.x_dtype, self.index = x.shape, x.dtype, index
        return np.array(x[index])

    def backward(self, grad):
        full = np.zeros(self.x_shape, dtype=self.x_dtype)
        np.add.at(full, self.index, grad)
        return full,


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Gelu(Function):
    def forward(self, x):
        self.x = x
        self.cdf = 0.5 * (1.0 + special.erf(x / np.sqrt(2.0)))
        return (x * self.cdf).astype(x.dtype)

    def backward(self, grad):
        pdf = np.exp(-0.5 * self.x * self.x) / np.sqrt(2.0 * np.pi)
        return (grad * (self.cdf + self.x * pdf)).astype(grad.dtype),


# -------------------------------------------------------------------------------------------------
# Fused normalisation and attention ops
# -------------------------------------------------------------------------------------------------
class LayerNorm(Function):
    def forward(self, x, gamma, beta, eps=constants.LN_EPS):
        mean = x.mean(axis=-1, keepdims=True)
        var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mean) * self.inv_std
        self.gamma = gamma
        self.x_shape = x.shape
        return self.xhat * gamma + beta

    def backward(self, grad):
        D = self.x_shape[-1]
        lead = tuple(range(grad.ndim - 1))
        grad_gamma = (grad * self.xhat).sum(axis=lead)
        grad_beta = grad.sum(axis=lead)
        dxhat = grad * self.gamma
        grad_x = (self.inv_std / D) * (
            D * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - self.xhat * (dxhat * self.xhat).sum(axis=-1, keepdims=True))
        return grad_x, grad_gamma, grad_beta


class MaskedSoftmax(Function):
    def forward(self, scores, mask=None):
        if mask is not None:
            scores = scores + np.where(mask, 0.0, constants.MASK_PENALTY).astype(scores.dtype)
        shifted = scores - scores.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return s * (grad - (grad * s).sum(axis=-1, keepdims=True)),


class LogSoftmax(Function):
    def forward(self, x):
        shifted = x - x.max(axis=-1, keepdims=True)
        self.out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        return self.out

    def backward(self, grad):
        return grad - np.exp(self.out) * grad.sum(axis=-1, keepdims=True),


class Embedding(Function):
    def forward(self, table, ids=None):
        self.table_shape, self.table_dtype, self.ids = table.shape, table.dtype, ids
        return table[ids]

    def backward(self, grad):
        full = np.zeros(self.table_shape, dtype=self.table_dtype)
        np.add.at(full, self.ids, grad)
        return full,


# -------------------------------------------------------------------------------------------------
# Functional surface
# -------------------------------------------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError('matmul needs operands with at least 2 dimensions, got {} and {}'.format(a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul inner dimensions disagree: {} and {}'.format(a.shape, b.shape))
    return MatMul.apply(a, b)


def linear(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def concat(tensors: typing.Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError('concat needs at least one tensor')
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(r != o for i, (r, o) in enumerate(zip(ref, other)) if i != axis % len(ref)):
            raise ShapeError('concat shapes disagree: {} and {}'.format(tuple(ref), t.shape))
    return Concat.apply(*tensors, axis=axis)


def gelu(x: Tensor) -> Tensor:
    return Gelu.apply(x)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = constants.LN_EPS) -> Tensor:
    D = x.shape[-1]
    if gamma.shape != (D,) or beta.shape != (D,):
        raise ShapeError('layer_norm parameters {} / {} do not match last dimension {}'.format(
            gamma.shape, beta.shape, D))
    return LayerNorm.apply(x, gamma, beta, eps=eps)


#
# Softmax over the last axis with an additive -1e9 penalty on masked entries. The mask is a
# boolean/0-1 array broadcastable to the scores; true means "may attend".
#
def masked_softmax(scores: Tensor, mask: np.ndarray = None) -> Tensor:
    if mask is not None:
        mask = np.asarray(mask).astype(bool)
        if mask.ndim < 2 or mask.shape[-2:] != scores.shape[-2:]:
            raise ShapeError('Mask shape {} does not match scores {}'.format(mask.shape, scores.shape))
        if not np.all(mask.any(axis=-1)):
            raise NumericalError('masked_softmax: a row is fully masked')
    return MaskedSoftmax.apply(scores, mask=mask)


def log_softmax(x: Tensor) -> Tensor:
    return LogSoftmax.apply(x)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InputError('Token id out of range [0, {}): {}'.format(table.shape[0], ids.reshape(-1).tolist()))
    return Embedding.apply(table, ids=ids)


# -------------------------------------------------------------------------------------------------
# Parameter store
# -------------------------------------------------------------------------------------------------
def truncated_normal(rng: np.random.Generator, shape, std: float = constants.INIT_STD,
                     dtype=DEFAULT_DTYPE) -> np.ndarray:
    values = stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=dtype).reshape(shape)


#
# Named parameter tensors in insertion order. The group of a parameter is the first component
# of its dotted name (audio_encoder, joint_encoder, decoder, head, ...).
#
class ModelParams(object):

    def __init__(self):
        self._tensors: typing.Dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise ShapeError('Parameter "{}" is already defined'.format(name))
        t = Tensor(np.array(data), requires_grad=trainable)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ShapeError('Unknown parameter "{}"'.format(name))

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> typing.List[str]:
        return list(self._tensors.keys())

    def items(self) -> typing.List[typing.Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def numel(self) -> int:
        return sum(t.size for t in self._tensors.values())

    @property
    def dtype(self):
        for t in self._tensors.values():
            return t.dtype
        return DEFAULT_DTYPE

    # --- Groups and trainable flags ---
    @staticmethod
    def group_of(name: str) -> str:
        return name.split('.', 1)[0]

    def groups(self) -> typing.List[str]:
        seen = []
        for name in self._tensors:
            group = self.group_of(name)
            if group not in seen:
                seen.append(group)
        return seen

    def names_in_group(self, group: str) -> typing.List[str]:
        return [n for n in self._tensors if self.group_of(n) == group]

    def is_trainable(self, name: str) -> bool:
        return self[name].requires_grad

    def set_trainable(self, name: str, trainable: bool):
        self[name].requires_grad = trainable

    def set_group_trainable(self, group: str, trainable: bool):
        for name in self.names_in_group(group):
            self.set_trainable(name, trainable)

    def trainable_names(self) -> typing.List[str]:
        return [n for n, t in self._tensors.items() if t.requires_grad]

    # --- Values ---
    def assign(self, name: str, data: np.ndarray):
        t = self[name]
        data = np.asarray(data)
        if data.shape != t.shape:
            raise ShapeError('Parameter "{}": expected shape {}, got {}'.format(name, t.shape, data.shape))
        t.data = data.astype(t.dtype, copy=True)

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def astype(self, dtype) -> ModelParams:
        copy = ModelParams()
        for name, t in self._tensors.items():
            copy.add(name, t.data.astype(dtype), trainable=t.requires_grad)
        return copy

    def copy(self) -> ModelParams:
        return self.astype(self.dtype)

    def snapshot(self) -> typing.Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}


#
# Runs the reverse pass of a scalar loss and returns the gradient of every trainable parameter.
# Frozen parameters are not part of the recorded graph and get no entry.
#
def backward(loss: Tensor, params: ModelParams) -> typing.Dict[str, np.ndarray]:
    if loss.size != 1:
        raise ShapeError('backward() needs a scalar loss, got shape {}'.format(loss.shape))
    params.zero_grad()
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for name in params.trainable_names():
        t = params[name]
        grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
    return grads

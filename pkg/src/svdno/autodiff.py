"""Dense-tensor reverse-mode automatic differentiation over numpy float64 arrays.

The graph is rebuilt on every forward pass; parameter tensors persist across
passes and accumulate gradients until explicitly zeroed.  Binary operations
broadcast by numpy's trailing-axes rule only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericError, ShapeError

__all__ = [
    "Tensor",
    "parameter",
    "constant",
    "concat",
    "zero_grads",
    "finite_difference_check",
    "GradCheckReport",
    "track_allocations",
]

_ALLOC_COUNTER = None


class track_allocations:
    """Context manager counting bytes of tensor storage (values and gradients)
    allocated inside the block; `.bytes` holds the total afterwards."""

    def __init__(self):
        self.bytes = 0

    def __enter__(self):
        global _ALLOC_COUNTER
        self._prev = _ALLOC_COUNTER
        _ALLOC_COUNTER = self
        return self

    def __exit__(self, *exc):
        global _ALLOC_COUNTER
        _ALLOC_COUNTER = self._prev
        return False

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy-backed node in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = _parents
        self._backward = _backward
        if _ALLOC_COUNTER is not None:
            _ALLOC_COUNTER.bytes += self.data.nbytes

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(np.broadcast_to(g, self.data.shape),
                                 dtype=np.float64)
            if _ALLOC_COUNTER is not None:
                _ALLOC_COUNTER.bytes += self.grad.nbytes
        else:
            self.grad += g

    @staticmethod
    def _lift(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _make(self, data, parents, backward, op):
        req = any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=req, _parents=parents if req else (),
                      _backward=backward if req else None, op=op)

    # -- binary elementwise --------------------------------------------------

    def _check_broadcast(self, other, op):
        try:
            np.broadcast_shapes(self.data.shape, other.data.shape)
        except ValueError:
            raise ShapeError(f"{op}: shapes {self.data.shape} and {other.data.shape} "
                             "are not broadcastable") from None

    def __add__(self, other):
        other = self._lift(other)
        self._check_broadcast(other, "add")
        out_data = self.data + other.data

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad, other.data.shape))

        return self._make(out_data, (self, other), backward, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        self._check_broadcast(other, "sub")
        out_data = self.data - other.data

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-out.grad, other.data.shape))

        return self._make(out_data, (self, other), backward, "sub")

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other)
        self._check_broadcast(other, "mul")
        out_data = self.data * other.data

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))

        return self._make(out_data, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        self._check_broadcast(other, "div")
        out_data = self.data / other.data

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-out.grad * out_data / other.data,
                                               other.data.shape))

        return self._make(out_data, (self, other), backward, "div")

    def __neg__(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(-out.grad)

        return self._make(-self.data, (self,), backward, "neg")

    # -- matmul --------------------------------------------------------------

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
        try:
            out_data = np.matmul(a, b)
        except ValueError:
            raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} "
                             "are not broadcastable") from None

        def backward(out):
            g = out.grad
            if self.requires_grad:
                ga = np.matmul(g, b.swapaxes(-1, -2))
                self._accumulate(_unbroadcast(ga, a.shape))
            if other.requires_grad:
                gb = np.matmul(a.swapaxes(-1, -2), g)
                other._accumulate(_unbroadcast(gb, b.shape))

        return self._make(out_data, (self, other), backward, "matmul")

    matmul = __matmul__

    # -- unary elementwise ---------------------------------------------------

    def sin(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * np.cos(self.data))

        return self._make(np.sin(self.data), (self,), backward, "sin")

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * (1.0 - out_data * out_data))

        return self._make(out_data, (self,), backward, "tanh")

    def sigmoid(self):
        out_data = 1.0 / (1.0 + np.exp(-self.data))

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * out_data * (1.0 - out_data))

        return self._make(out_data, (self,), backward, "sigmoid")

    def gelu(self):
        """Exact error-function form x * N(x) with N the standard normal CDF."""
        x = self.data
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out_data = x * cdf

        def backward(out):
            if self.requires_grad:
                pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
                self._accumulate(out.grad * (cdf + x * pdf))

        return self._make(out_data, (self,), backward, "gelu")

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * 0.5 / out_data)

        return self._make(out_data, (self,), backward, "sqrt")

    def square(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * 2.0 * self.data)

        return self._make(self.data * self.data, (self,), backward, "square")

    # -- reductions & shape ops ----------------------------------------------

    def _check_axes(self, axis, op):
        if axis is None:
            return None
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        for ax in axes:
            if not -self.data.ndim <= ax < self.data.ndim:
                raise ShapeError(f"{op}: axis {ax} out of range for shape {self.data.shape}")
        return axes

    def sum(self, axis=None, keepdims=False):
        axes = self._check_axes(axis, "sum")
        out_data = self.data.sum(axis=axes, keepdims=keepdims)

        def backward(out):
            if self.requires_grad:
                g = out.grad
                if not keepdims and axes is not None:
                    g = np.expand_dims(g, [a % self.data.ndim for a in axes])
                self._accumulate(np.broadcast_to(g, self.data.shape))

        return self._make(out_data, (self,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        axes = self._check_axes(axis, "mean")
        count = self.data.size if axes is None else int(
            np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad.reshape(self.data.shape))

        return self._make(out_data, (self,), backward, "reshape")

    def transpose(self, axes):
        axes = tuple(axes)
        inv = np.argsort(axes)

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad.transpose(inv))

        return self._make(self.data.transpose(axes), (self,), backward, "transpose")

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(out):
            if self.requires_grad:
                g = np.zeros_like(self.data)
                np.add.at(g, key, out.grad)
                self._accumulate(g)

        return self._make(out_data, (self,), backward, "getitem")

    # -- backward ------------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar; accumulates into `.grad` fields."""
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node)


def parameter(data, name=None):
    """Create a trainable leaf tensor (name is advisory, used in reports)."""
    t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, op=name or "param")
    return t


def constant(data):
    return Tensor(data, requires_grad=False)


def concat(tensors, axis=0):
    """Concatenate along `axis`; backward splits the gradient."""
    tensors = [Tensor._lift(t) for t in tensors]
    datas = [t.data for t in tensors]
    try:
        out_data = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(out.grad[tuple(idx)])

    req = any(t.requires_grad for t in tensors)
    return Tensor(out_data, requires_grad=req,
                  _parents=tuple(tensors) if req else (),
                  _backward=backward if req else None, op="concat")


def zero_grads(params):
    """Zero gradients on an iterable or mapping of tensors."""
    values = params.values() if hasattr(params, "values") else params
    for p in values:
        p.zero_grad()


@dataclass
class GradCheckReport:
    """Central-difference vs autodiff comparison across sampled coordinates."""

    entries: list = field(default_factory=list)  # (param_name, flat_index, fd, ad, rel_err)

    def add(self, name, index, fd, ad):
        scale = max(abs(fd), abs(ad), 1e-8)
        self.entries.append((name, index, fd, ad, abs(fd - ad) / scale))

    @property
    def rel_errors(self):
        return np.array([e[4] for e in self.entries])

    @property
    def max_rel_error(self):
        return float(self.rel_errors.max()) if self.entries else 0.0

    def percentile(self, q):
        return float(np.percentile(self.rel_errors, q)) if self.entries else 0.0

    def worst(self, k=5):
        return sorted(self.entries, key=lambda e: -e[4])[:k]


def finite_difference_check(f, params, step=1e-5, samples_per_param=5, seed=0):
    """Compare autodiff gradients of scalar `f()` against central differences.

    `params` maps names to parameter tensors that `f` reads.  For each
    parameter, up to `samples_per_param` coordinates are perturbed by +/-step.
    """
    if step <= 0:
        raise ContractError("finite_difference_check: step must be positive")
    zero_grads(params)
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise NumericError("finite_difference_check: f produced non-finite values")
    loss.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name, p in params.items():
        n = p.data.size
        idxs = np.arange(n) if n <= samples_per_param else rng.choice(n, samples_per_param,
                                                                      replace=False)
        flat = p.data.reshape(-1)
        for i in sorted(int(i) for i in idxs):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError(f"finite_difference_check: non-finite f at {name}[{i}]")
            fd = (hi - lo) / (2.0 * step)
            report.add(name, i, fd, float(analytic[name].reshape(-1)[i]))
    zero_grads(params)
    return report

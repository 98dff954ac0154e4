#!/usr/bin/env python3
"""
Neural network core
Reverse-mode autograd over float64 numpy arrays, the handful of layers the
tree policy needs, AdamW and a finite-difference gradient checker
"""

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeMismatch

ArrayLike = Union["Tensor", np.ndarray, float, int]

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in this thread"""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum grad down to shape after numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array that remembers how it was computed"""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    # numpy defers to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (), op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Optional[Callable[[], None]] = None
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    @staticmethod
    def lift(value: ArrayLike) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    def _result(self, data: np.ndarray, parents: Tuple["Tensor", ...], op: str) -> "Tensor":
        needs = grad_enabled() and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=needs, _parents=parents if needs else (), op=op)

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def detach(self) -> "Tensor":
        """Same values, cut from the graph"""
        return Tensor(self.data)

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        out = self._result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad)
                other._accumulate(out.grad)
            out._backward = _backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = self._result(-self.data, (self,), "neg")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(-out.grad)
        return out

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-Tensor.lift(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        out = self._result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * other.data)
                other._accumulate(out.grad * self.data)
            out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        out = self._result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad / other.data)
                other._accumulate(-out.grad * self.data / (other.data * other.data))
            out._backward = _backward
        return out

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Tensor.lift(other) / self

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        a, b = self.data, other.data
        if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
            raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
        out = self._result(a @ b, (self, other), "matmul")
        if out.requires_grad:
            def _backward():
                g = out.grad
                if a.ndim == 1 and b.ndim == 1:
                    self._accumulate(g * b)
                    other._accumulate(g * a)
                elif b.ndim == 1:
                    self._accumulate(np.outer(g, b))
                    other._accumulate(a.T @ g)
                elif a.ndim == 1:
                    self._accumulate(b @ g)
                    other._accumulate(np.outer(a, g))
                else:
                    self._accumulate(g @ b.T)
                    other._accumulate(a.T @ g)
            out._backward = _backward
        return out

    # -- unary functions ---------------------------------------------------

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = self._result(value, (self,), "exp")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * value)
        return out

    def log(self) -> "Tensor":
        out = self._result(np.log(self.data), (self,), "log")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad / self.data)
        return out

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        out = self._result(value, (self,), "sqrt")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * 0.5 / value)
        return out

    def leaky_relu(self, slope: float = 0.01) -> "Tensor":
        positive = self.data > 0
        out = self._result(np.where(positive, self.data, slope * self.data), (self,), "leaky_relu")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * np.where(positive, 1.0, slope))
        return out

    def clip(self, low: float, high: float) -> "Tensor":
        inside = (self.data >= low) & (self.data <= high)
        out = self._result(np.clip(self.data, low, high), (self,), "clip")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad * inside)
        return out

    def minimum(self, other: ArrayLike) -> "Tensor":
        other = Tensor.lift(other)
        take_self = self.data <= other.data
        out = self._result(np.where(take_self, self.data, other.data), (self, other), "minimum")
        if out.requires_grad:
            def _backward():
                self._accumulate(out.grad * take_self)
                other._accumulate(out.grad * ~take_self)
            out._backward = _backward
        return out

    # -- reductions and indexing ------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        out = self._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        if out.requires_grad:
            def _backward():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.shape))
            out._backward = _backward
        return out

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(max(count, 1))

    def max(self) -> "Tensor":
        """Maximum over all entries; the gradient goes to the first maximizer"""
        flat_index = int(np.argmax(self.data))
        out = self._result(self.data.reshape(-1)[flat_index], (self,), "max")
        if out.requires_grad:
            def _backward():
                g = np.zeros(self.data.size)
                g[flat_index] = out.grad
                self._accumulate(g.reshape(self.shape))
            out._backward = _backward
        return out

    def take(self, indices: Sequence[int]) -> "Tensor":
        """Rows (first axis) at the given indices, repeats allowed"""
        idx = np.asarray(indices, dtype=int)
        out = self._result(self.data[idx], (self,), "take")
        if out.requires_grad:
            def _backward():
                g = np.zeros_like(self.data)
                np.add.at(g, idx, out.grad)
                self._accumulate(g)
            out._backward = _backward
        return out

    def segment_sum(self, segments: Sequence[int], num_segments: int) -> "Tensor":
        """out[s] = sum of entries of a vector whose segment id is s"""
        seg = np.asarray(segments, dtype=int)
        if self.ndim != 1 or seg.shape != self.shape:
            raise ShapeMismatch(f"segment ids {seg.shape} do not match vector {self.shape}")
        out = self._result(np.bincount(seg, weights=self.data, minlength=num_segments),
                           (self,), "segment_sum")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad[seg])
        return out

    def reshape(self, *shape) -> "Tensor":
        out = self._result(self.data.reshape(*shape), (self,), "reshape")
        if out.requires_grad:
            out._backward = lambda: self._accumulate(out.grad.reshape(self.shape))
        return out

    @staticmethod
    def concat(tensors: Sequence["Tensor"], axis: int = 0) -> "Tensor":
        tensors = [Tensor.lift(t) for t in tensors]
        data = np.concatenate([t.data for t in tensors], axis=axis)
        out = tensors[0]._result(data, tuple(tensors), "concat")
        if out.requires_grad:
            splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

            def _backward():
                for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
                    t._accumulate(g)
            out._backward = _backward
        return out

    # -- backward ------------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar"""
        if self.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar, got shape {self.shape}")
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()


def backward(loss: Tensor):
    loss.backward()


# =============================================================================
# LAYERS
# =============================================================================

def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} does not match weight rows {W.shape[0]}")
    y = x @ W
    return y if b is None else y + b


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    return Tensor.lift(x).leaky_relu(slope)


def layernorm_noaffine(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean, unit population variance over the last axis"""
    x = Tensor.lift(x)
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (variance + eps).sqrt()


def log_softmax(x: Tensor) -> Tensor:
    """Log-probabilities over a 1-D tensor"""
    x = Tensor.lift(x)
    if x.ndim != 1:
        raise ShapeMismatch(f"log_softmax expects a vector, got shape {x.shape}")
    shifted = x - float(np.max(x.data))
    return shifted - shifted.exp().sum().log()


def softmax(x: Tensor) -> Tensor:
    return log_softmax(x).exp()


def mean(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ShapeMismatch("mean of an empty sequence")
    total = xs[0]
    for x in xs[1:]:
        if x.shape != total.shape:
            raise ShapeMismatch(f"cannot average shapes {total.shape} and {x.shape}")
        total = total + x
    return total / float(len(xs))


# =============================================================================
# PARAMETERS AND OPTIMIZER
# =============================================================================

@dataclass
class ParameterSet:
    """Named float64 arrays with trainable and weight-decay flags"""
    tensors: Dict[str, Tensor] = field(default_factory=dict)
    trainable: Dict[str, bool] = field(default_factory=dict)
    decay: Dict[str, bool] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray, trainable: bool = True, decay: bool = True) -> Tensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable)
        self.tensors[name] = tensor
        self.trainable[name] = trainable
        self.decay[name] = decay
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self):
        for tensor in self.tensors.values():
            tensor.grad = None

    def gradients(self) -> Dict[str, np.ndarray]:
        """Gradient per trainable array, zeros where nothing flowed"""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.tensors.items() if self.trainable[name]
        }

    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.gradients().values()))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients so their global norm is at most max_norm; returns the norm before"""
        norm = self.grad_norm()
        if max_norm > 0 and norm > max_norm:
            scale = max_norm / (norm + 1e-12)
            for tensor in self.tensors.values():
                if tensor.grad is not None:
                    tensor.grad = tensor.grad * scale
        return norm

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        for name, tensor in self.tensors.items():
            if name not in arrays:
                raise KeyError(name)
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeMismatch(f"{name}: expected {tensor.shape}, got {value.shape}")
            tensor.data = value.copy()

    def copy(self) -> "ParameterSet":
        clone = ParameterSet()
        for name, tensor in self.tensors.items():
            clone.add(name, tensor.data, trainable=self.trainable[name], decay=self.decay[name])
        return clone

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors.values())


class AdamW:
    """Adam with decoupled weight decay; arrays flagged no-decay skip the decay term"""

    def __init__(self, params: ParameterSet, lr: float = 3e-4,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self):
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, grad in self.params.gradients().items():
            tensor = self.params[name]
            m = self.m.get(name, np.zeros_like(tensor.data))
            v = self.v.get(name, np.zeros_like(tensor.data))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.m[name], self.v[name] = m, v

            data = tensor.data
            if self.params.decay[name] and self.weight_decay:
                data = data - self.lr * self.weight_decay * data
            m_hat = m / correction1
            v_hat = v / correction2
            tensor.data = data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, object]:
        return {"steps": self.steps,
                "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: Dict[str, object]):
        self.steps = int(state["steps"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


# =============================================================================
# GRADIENT CHECK
# =============================================================================

@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    errors: Dict[str, float]
    worst: Optional[str] = None

    @property
    def worst_error(self) -> float:
        return self.errors[self.worst] if self.worst is not None else 0.0

    def summary(self) -> str:
        status = "passed" if self.passed else "FAILED"
        lines = [f"gradient check {status} (tolerance {self.tolerance:g})"]
        for name, error in sorted(self.errors.items(), key=lambda kv: -kv[1]):
            marker = " <- worst" if name == self.worst else ""
            lines.append(f"  {name}: relative error {error:.3e}{marker}")
        return "\n".join(lines)


def grad_check(loss_fn: Callable[[], Tensor], params: ParameterSet, tolerance: float = 1e-4,
               step: float = 1e-5, max_entries: Optional[int] = 64,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """
    Compare analytic gradients against central differences.

    Checks up to max_entries randomly chosen entries per trainable array
    (all entries when None). The error per array is
    ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-6).
    """
    rng = rng or np.random.default_rng(0)
    params.zero_grad()
    loss_fn().backward()
    analytic = params.gradients()

    errors: Dict[str, float] = {}
    for name, grad in analytic.items():
        tensor = params[name]
        size = tensor.data.size
        if max_entries is None or size <= max_entries:
            entries = np.arange(size)
        else:
            entries = rng.choice(size, size=max_entries, replace=False)

        numeric = np.zeros(len(entries))
        with no_grad():
            for k, flat in enumerate(entries):
                index = np.unravel_index(int(flat), tensor.shape)
                original = tensor.data[index]
                tensor.data[index] = original + step
                plus = loss_fn().item()
                tensor.data[index] = original - step
                minus = loss_fn().item()
                tensor.data[index] = original
                numeric[k] = (plus - minus) / (2.0 * step)

        picked = grad.reshape(-1)[entries]
        denom = max(float(np.linalg.norm(picked) + np.linalg.norm(numeric)), 1e-6)
        errors[name] = float(np.linalg.norm(picked - numeric)) / denom

    params.zero_grad()
    worst = max(errors, key=errors.get) if errors else None
    passed = all(e < tolerance for e in errors.values())
    return GradCheckReport(passed=passed, tolerance=tolerance, errors=errors, worst=worst)

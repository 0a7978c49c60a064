"""Dense tensors with reverse-mode differentiation, sized for small MLPs.

A :class:`Tensor` wraps a numpy array. Ops that touch a tensor requiring
gradients record a closure that maps the upstream gradient to one gradient
per parent; :meth:`Tensor.backward` replays them in reverse topological
order and accumulates into :class:`Parameter` leaves.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass


class GradCheckError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        kind = type(self).__name__
        return f"{kind}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def backward(self) -> None:
        """Accumulate d(self)/d(param) into every reachable Parameter.grad."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if isinstance(node, Parameter):
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


class Parameter(Tensor):
    __slots__ = ("grad", "name")

    def __init__(self, data, name: str = "param"):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.name = name

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0).astype(x.data.dtype), (x,),
                 lambda g: (g * mask,))


def tabs(x) -> Tensor:
    x = as_tensor(x)
    return _node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


# ------------------------------------------------------------------ reductions

def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(x.data.sum(axis=axis)), (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / count)


def logsumexp(x, axis: int = -1) -> Tensor:
    """Max-subtracted log-sum-exp along ``axis``."""
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    soft = e / s
    return _node(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,))


# ------------------------------------------------------------------- structure

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(x.data[idx], (x,), backward)


def concat(items: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in items]
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def affine_forward(x, W, b) -> Tensor:
    """``x @ W + b`` for x [n×p], W [p×q], b [q]."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine: input {x.shape} does not conform to weight {W.shape}")
    if b.shape != (W.shape[1],):
        raise ShapeError(f"affine: bias {b.shape} does not conform to weight {W.shape}")
    return _node(x.data @ W.data + b.data, (x, W, b),
                 lambda g: (g @ W.data.T, x.data.T @ g, g.sum(axis=0)))


# ------------------------------------------------------------------------ losses

def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean of -log softmax(logits)[label].

    ``logits`` is [K] with an integer label, or [n×K] with n labels.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    y = np.atleast_1d(np.asarray(labels))
    if y.dtype.kind not in "iu":
        raise IndexError(f"labels must be integers, got dtype {y.dtype}")
    n, k = z.shape
    if y.shape != (n,):
        raise ShapeError(f"{n} logit rows but labels have shape {y.shape}")
    if np.any(y < 0) or np.any(y >= k):
        raise IndexError(f"label out of range [0, {k}): {y[(y < 0) | (y >= k)][:5]}")
    rows = np.arange(n)
    # log sum_j exp(z_j - z_y); when z_y is the row max, log1p keeps tiny losses exact
    rel = z - z[rows, y][:, None]
    top = np.maximum(rel.max(axis=1), 0.0)
    rest = np.exp(rel - top[:, None])
    rest[rows, y] = 0.0
    per_row = np.where(top == 0.0, np.log1p(rest.sum(axis=1)),
                       top + np.log(rest.sum(axis=1) + np.exp(-top)))
    loss = max(float(np.mean(per_row)), 0.0)

    def backward(g):
        d = softmax(z, axis=1)
        d[rows, y] -= 1.0
        d *= g / n
        return (d[0] if single else d,)

    return _node(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


# ---------------------------------------------------------------- optimization

def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def sgd_step(params: Iterable[Parameter], lr: float) -> None:
    """value <- value - lr * grad for every parameter."""
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name!r}")
    for p in params:
        p.data = p.data - lr * p.grad


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
               eps: float = 1e-5, max_coords: int | None = 50,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between backprop and central differences.

    At most ``max_coords`` coordinates per parameter are probed (all of them
    when None). ``loss_fn`` must be deterministic.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise GradCheckError(f"loss is not finite: {loss.data}")
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            up = loss_fn().item()
            flat[c] = orig - eps
            down = loss_fn().item()
            flat[c] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise GradCheckError(f"non-finite loss while perturbing {p.name}[{c}]")
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[c]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst


# ------------------------------------------------------------ seeding and init

def rng_stream(seed: int) -> np.random.Generator:
    """Philox counter-based generator; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(master: int, *keys: int) -> int:
    """Independent 64-bit child seed for (master, keys...)."""
    ss = np.random.SeedSequence([int(master), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator,
                   dtype=np.float64) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)

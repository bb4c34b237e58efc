"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array; operations record parents and a backward
closure when any input is tracked, forming a single-use tape. backward()
walks the tape once in reverse topological order and accumulates gradients
into tracked leaves. Calling backward twice on the same result is an error;
rebuild the graph each iteration instead.

Reductions and all arithmetic run in double precision so finite-difference
gradient checks hold to tight tolerances.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ContractError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backfn", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backfn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backfn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backfn = backfn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_shapes(op: str, a, b):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ContractError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}")


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_shapes("add", a, b)
    out = a.data + b.data

    def backfn(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _node(out, (a, b), backfn)


def sub(a, b) -> Tensor:
    return add(a, scale(_as_tensor(b), -1.0))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_shapes("mul", a, b)
    out = a.data * b.data

    def backfn(g):
        return ((a, _unbroadcast(g * b.data, a.data.shape)),
                (b, _unbroadcast(g * a.data, b.data.shape)))

    return _node(out, (a, b), backfn)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def backfn(g):
        return ((a, g * c),)

    return _node(a.data * c, (a,), backfn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ContractError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = a.data @ b.data

    def backfn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ((a, _unbroadcast(ga, a.data.shape)), (b, _unbroadcast(gb, b.data.shape)))

    return _node(out, (a, b), backfn)


def transpose(a) -> Tensor:
    a = _as_tensor(a)

    def backfn(g):
        return ((a, np.swapaxes(g, -1, -2)),)

    return _node(np.swapaxes(a.data, -1, -2), (a,), backfn)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape

    def backfn(g):
        return ((a, g.reshape(old)),)

    return _node(a.data.reshape(shape), (a,), backfn)


def concat(tensors, axis: int = 1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)

    def backfn(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple((t, piece) for t, piece in zip(ts, pieces))

    return _node(out, tuple(ts), backfn)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backfn(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return ((a, full),)

    return _node(a.data[index], (a,), backfn)


def gather_rows(a, idx) -> Tensor:
    """Select rows by integer index array; output shape idx.shape + a.shape[1:]."""
    a = _as_tensor(a)
    idx = np.asarray(idx)

    def backfn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, *a.data.shape[1:]))
        return ((a, full),)

    return _node(a.data[idx], (a,), backfn)


def take_per_row(a, idx) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    a = _as_tensor(a)
    idx = np.asarray(idx)
    rows = np.arange(a.data.shape[0])

    def backfn(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        return ((a, full),)

    return _node(a.data[rows, idx], (a,), backfn)


# ---------------------------------------------------------------------------
# nonlinearities and reductions

def log(a) -> Tensor:
    a = _as_tensor(a)

    def backfn(g):
        return ((a, g / a.data),)

    return _node(np.log(a.data), (a,), backfn)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def backfn(g):
        return ((a, g * out),)

    return _node(out, (a,), backfn)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def backfn(g):
        return ((a, g * (1.0 - out * out)),)

    return _node(out, (a,), backfn)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backfn(g):
        return ((a, g * (a.data > 0.0)),)

    return _node(out, (a,), backfn)


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def backfn(g):
        return ((a, g / (1.0 + np.exp(-a.data))),)

    return _node(out, (a,), backfn)


def powc(a, p: float) -> Tensor:
    """Elementwise power with a constant exponent (inputs must be >= 0 when
    the exponent is fractional)."""
    a = _as_tensor(a)
    p = float(p)
    out = np.power(a.data, p)

    def backfn(g):
        return ((a, g * p * np.power(a.data, p - 1.0)),)

    return _node(out, (a,), backfn)


def row_softmax(a) -> Tensor:
    """Softmax along the last axis."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backfn(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((a, out * (g - dot)),)

    return _node(out, (a,), backfn)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backfn(g):
        gg = np.expand_dims(g, axis) if not keepdims else g
        return ((a, gg * soft),)

    return _node(out, (a,), backfn)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backfn(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(gg, a.data.shape).copy()),)

    return _node(out, (a,), backfn)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def stop_gradient(a) -> Tensor:
    return Tensor(np.array(_as_tensor(a).data, copy=True))


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """Populate grads of every tracked leaf reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise ContractError("backward: loss does not require grad")
    if loss._consumed:
        raise ContractError("backward: tape already consumed; rebuild the graph")
    loss._consumed = True

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backfn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in node._backfn(g):
            if not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


def zero_grads(params) -> None:
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizers

class RMSProp:
    """Running-average-of-squares update: v <- decay*v + (1-decay)*g^2,
    p <- p - lr * g / sqrt(v + epsilon)."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 epsilon: float = 1e-2, decay: float = 0.99):
        self.params = params
        self.lr = lr
        self.epsilon = epsilon
        self.decay = decay
        self.sq = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            v = self.sq[name]
            v *= self.decay
            v += (1.0 - self.decay) * g * g
            p.data -= self.lr * g / np.sqrt(v + self.epsilon)

    def zero_grad(self) -> None:
        zero_grads(self.params)


class Adagrad:
    """Accumulated-squares update: a <- a + g^2, p <- p - lr * g / (sqrt(a)+1e-10)."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.1):
        self.params = params
        self.lr = lr
        self.acc = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            a = self.acc[name]
            a += g * g
            p.data -= self.lr * g / (np.sqrt(a) + 1e-10)

    def zero_grad(self) -> None:
        zero_grads(self.params)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Bit-exact parameter snapshot (npz with a version + metadata record)."""
    header = {"format_version": CHECKPOINT_VERSION, "meta": meta or {}}
    payload = {f"p:{k}": np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload["__header__"] = np.array(json.dumps(header))
    np.savez(path, **payload)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ContractError(
                f"unsupported checkpoint version {header.get('format_version')}")
        arrays = {k[2:]: z[k] for k in z.files if k.startswith("p:")}
    return arrays, header.get("meta", {})


# ---------------------------------------------------------------------------
# gradient checking

def finite_difference_grads(f, tensors, h: float = 1e-4):
    """Central-difference gradients of scalar f() w.r.t. each tensor element."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradcheck(f, tensors, h: float = 1e-4) -> float:
    """Run f once with backward, compare against finite differences, and
    return the worst elementwise relative error."""
    for t in tensors:
        t.grad = None
    loss = f()
    backward(loss)
    numeric = finite_difference_grads(f, tensors, h=h)
    worst = 0.0
    for t, n in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, max_relative_error(analytic, n))
    return worst

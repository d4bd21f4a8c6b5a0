"""Reverse-mode automatic differentiation over dense float64 tensors.

Forward evaluation is eager; each op records a backward closure so a single
`backprop` pass over the tape yields exact adjoints.  Graphs are small
(procedural renderer + a 3-conv CNN), so no attempt is made at fusion or
memory reuse.  conv2d is cross-correlation with explicit zero padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AutodiffError(Exception):
    """Base class for engine failures."""


class ShapeError(AutodiffError):
    """Input shapes do not conform to a primitive's shape rule."""


class NonFiniteError(AutodiffError):
    """A forward op produced inf or NaN."""


class ContractError(AutodiffError):
    """An operation was called outside its contract."""


class Tensor:
    """A node in the computation graph: float64 values plus backward state."""

    __slots__ = ("values", "requires_grad", "grad", "kind", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.kind = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(kind={self.kind!r}, shape={self.shape})"

    # operator sugar; scalars are lifted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _node(kind: str, values: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"primitive {kind!r} produced a non-finite value")
    out = Tensor(values)
    out.kind = kind
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a, b)
    out_values = a.values + b.values

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node("add", out_values, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a, b)
    out_values = a.values - b.values

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node("sub", out_values, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a, b)
    out_values = a.values * b.values

    def backward(g):
        _accum(a, _unbroadcast(g * b.values, a.shape))
        _accum(b, _unbroadcast(g * a.values, b.shape))

    return _node("mul", out_values, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("div", a, b)
    out_values = a.values / b.values

    def backward(g):
        _accum(a, _unbroadcast(g / b.values, a.shape))
        _accum(b, _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _node("div", out_values, (a, b), backward)


def scalar_pow(x: Tensor, exponent: float) -> Tensor:
    out_values = x.values**exponent

    def backward(g):
        _accum(x, g * exponent * x.values ** (exponent - 1.0))

    return _node("scalar-pow", out_values, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out_values = np.exp(x.values)

    def backward(g):
        _accum(x, g * out_values)

    return _node("exp", out_values, (x,), backward)


def log(x: Tensor) -> Tensor:
    out_values = np.log(x.values)

    def backward(g):
        _accum(x, g / x.values)

    return _node("log", out_values, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out_values = np.tanh(x.values)

    def backward(g):
        _accum(x, g * (1.0 - out_values * out_values))

    return _node("tanh", out_values, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out_values = 1.0 / (1.0 + np.exp(-x.values))

    def backward(g):
        _accum(x, g * out_values * (1.0 - out_values))

    return _node("sigmoid", out_values, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out_values = np.maximum(x.values, 0.0)

    def backward(g):
        _accum(x, g * (x.values > 0.0))

    return _node("relu", out_values, (x,), backward)


def smooth_clamp(x: Tensor, lo: float, hi: float, softness: float = 1e-3) -> Tensor:
    """Smooth clamp into [lo, hi] via soft-max/min corners (C^inf)."""
    if hi <= lo:
        raise ContractError(f"smooth-clamp: hi {hi} must exceed lo {lo}")
    d2 = softness * softness
    v = x.values
    sa = np.sqrt((v - lo) ** 2 + d2)
    low = 0.5 * (v + lo + sa)  # smooth max(v, lo)
    sb = np.sqrt((low - hi) ** 2 + d2)
    out_values = 0.5 * (low + hi - sb)  # smooth min(low, hi)

    def backward(g):
        dlow = 0.5 * (1.0 + (v - lo) / sa)
        dout = 0.5 * (1.0 - (low - hi) / sb)
        _accum(x, g * dout * dlow)

    return _node("smooth-clamp", out_values, (x,), backward)


# ---------------------------------------------------------------------------
# reductions and losses


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out_values = x.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    return _node("sum", np.asarray(out_values), (x,), backward)


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.values.size if axis is None else x.shape[axis]
    out_values = x.values.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape) / count)

    return _node("mean", np.asarray(out_values), (x,), backward)


def mse(x: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != x.shape:
        raise ShapeError(f"mse: prediction {x.shape} vs target {t.shape}")
    diff = x.values - t
    out_values = np.asarray((diff * diff).mean())

    def backward(g):
        _accum(x, g * 2.0 * diff / diff.size)

    return _node("mse", out_values, (x,), backward)


_PNORM_EPS = 1e-6  # abs smoothing for odd orders


def pnorm(x: Tensor, order: int) -> Tensor:
    """p-norm of all entries; order 1 uses sqrt(x^2 + eps^2) for |x|."""
    if order not in (1, 2):
        raise ContractError(f"p-norm: unsupported order {order}")
    if order == 2:
        sq = x.values * x.values
        norm = float(np.sqrt(sq.sum()))
        out_values = np.asarray(norm)

        def backward(g):
            if norm == 0.0:
                _accum(x, np.zeros_like(x.values))
            else:
                _accum(x, g * x.values / norm)

    else:
        sa = np.sqrt(x.values * x.values + _PNORM_EPS * _PNORM_EPS)
        out_values = np.asarray(sa.sum())

        def backward(g):
            _accum(x, g * x.values / sa)

    return _node("p-norm", out_values, (x,), backward)


# ---------------------------------------------------------------------------
# dense / convolutional primitives


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with x:(N,I), w:(I,O), b:(O,)."""
    if x.values.ndim != 2 or w.values.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"matmul-with-bias: x {x.shape} vs w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"matmul-with-bias: bias {b.shape} vs out dim {w.shape[1]}")
    out_values = x.values @ w.values + b.values

    def backward(g):
        _accum(x, g @ w.values.T)
        _accum(w, x.values.T @ g)
        _accum(b, g.sum(axis=0))

    return _node("matmul-with-bias", out_values, (x, w, b), backward)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation: x:(N,C,H,W), w:(F,C,KH,KW), b:(F,)."""
    if x.values.ndim != 4 or w.values.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: x {x.shape} vs w {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias {b.shape} vs filters {w.shape[0]}")
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{wd} at pad {pad}")
    xp = np.pad(x.values, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.values
    cols = _im2col(xp, kh, kw, stride, ho, wo)  # (N, C*KH*KW, HO*WO)
    wflat = w.values.reshape(f, -1)
    out_values = (wflat @ cols).reshape(n, f, ho, wo) + b.values[None, :, None, None]

    def backward(g):
        gflat = g.reshape(n, f, ho * wo)
        _accum(w, np.einsum("nfp,ncp->fc", gflat, cols).reshape(w.shape))
        _accum(b, g.sum(axis=(0, 2, 3)))
        dcols = np.einsum("fc,nfp->ncp", wflat, gflat).reshape(n, c, kh, kw, ho, wo)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, :, i, j]
        _accum(x, dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp)

    return _node("conv2d", out_values, (x, w, b), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C) spatial mean."""
    if x.values.ndim != 4:
        raise ShapeError(f"global-average-pool: expected 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    out_values = x.values.mean(axis=(2, 3))

    def backward(g):
        _accum(x, np.broadcast_to(g[:, :, None, None], x.shape) / (h * w))

    return _node("global-average-pool", out_values, (x,), backward)


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a flat tensor as a scalar node."""
    if x.values.ndim != 1:
        raise ShapeError(f"pick: expected a flat tensor, got {x.shape}")
    out_values = np.asarray(x.values[index])

    def backward(g):
        full = np.zeros(x.shape)
        full[index] = g
        _accum(x, full)

    return _node("pick", out_values, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_values = x.values.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.shape))

    return _node("reshape", out_values, (x,), backward)


# ---------------------------------------------------------------------------
# dispatch, backward pass, gradient checking, optimizers

_PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scalar-pow": scalar_pow,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "smooth-clamp": smooth_clamp,
    "sum": tsum,
    "mean": tmean,
    "mse": mse,
    "p-norm": pnorm,
    "matmul-with-bias": linear,
    "conv2d": conv2d,
    "global-average-pool": global_avg_pool,
    "pick": pick,
    "reshape": reshape,
}


def apply_primitive(kind: str, inputs: list[Tensor], **params) -> Tensor:
    """Apply a primitive by name; forward value is computed eagerly."""
    if kind not in _PRIMITIVES:
        raise ContractError(f"unknown primitive kind {kind!r}")
    return _PRIMITIVES[kind](*inputs, **params)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros(t.shape, dtype=np.float64)
    t.grad += g


def _toposort(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad:
                stack.append((p, False))
    return order


def backprop(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse pass from a scalar root; returns {leaf tensor: gradient}."""
    if root.values.size != 1:
        raise ContractError(f"backprop root must be scalar, got shape {root.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    _accum(root, np.ones(root.shape, dtype=np.float64))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    return {
        node: node.grad
        for node in order
        if node.requires_grad and node._backward is None and node.grad is not None
    }


@dataclass
class GradReport:
    """Backprop-vs-central-differences comparison for one scalar function."""

    max_abs_error: float
    max_rel_error: float
    table: list[tuple[int, float, float, float]] = field(repr=False, default_factory=list)


def finite_diff_check(fn, point: np.ndarray, eps: float = 1e-5) -> GradReport:
    """Compare backprop gradients of ``fn`` against central differences.

    ``fn`` maps a flat parameter Tensor to a scalar Tensor and must be
    deterministic.  Every coordinate of ``point`` is probed.
    """
    if eps <= 0:
        raise ContractError("finite_diff_check: eps must be positive")
    point = np.asarray(point, dtype=np.float64).ravel()
    x = Tensor(point.copy(), requires_grad=True)
    out = fn(x)
    analytic = backprop(out)[x].ravel()

    table = []
    max_abs = 0.0
    max_rel = 0.0
    for i in range(point.size):
        probe = point.copy()
        probe[i] += eps
        f_plus = fn(Tensor(probe)).item()
        probe[i] = point[i] - eps
        f_minus = fn(Tensor(probe)).item()
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"finite_diff_check: non-finite value at coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        abs_err = abs(analytic[i] - numeric)
        rel_err = abs_err / max(abs(analytic[i]), abs(numeric), 1e-8)
        table.append((i, float(analytic[i]), float(numeric), float(rel_err)))
        max_abs = max(max_abs, abs_err)
        max_rel = max(max_rel, rel_err)
    return GradReport(max_abs_error=float(max_abs), max_rel_error=float(max_rel), table=table)


class OptimizerError(AutodiffError):
    """A parameter update received a non-finite gradient."""


class SGD:
    def __init__(self, lr: float):
        if lr <= 0:
            raise ContractError("SGD: step size must be positive")
        self.lr = lr

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise OptimizerError(f"NaN/inf gradient for parameter {name!r}")
            p.values -= self.lr * g


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ContractError("Adam: step size must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise OptimizerError(f"NaN/inf gradient for parameter {name!r}")
            m = self.m.setdefault(name, np.zeros_like(p.values))
            v = self.v.setdefault(name, np.zeros_like(p.values))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1**self.t)
            vhat = v / (1.0 - self.beta2**self.t)
            p.values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ContractError(f"unknown optimizer {name!r}")

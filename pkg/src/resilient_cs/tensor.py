"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operators the sensing/reconstruction pipeline needs are provided.
Operations append to the active :class:`Tape` (if any); :func:`backward`
walks the tape in reverse and accumulates gradients into leaf tensors.

    with Tape() as tape:
        loss = mse(linear(W, x), t)
    grads = backward(tape, loss)
"""
from __future__ import annotations

import contextvars
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError, ConfigurationError

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tape", default=None)
_RELU_PROBE: contextvars.ContextVar["list | None"] = contextvars.ContextVar("relu_probe", default=None)


class Tensor:
    """An n-d float64 array, optionally a named trainable leaf."""

    __slots__ = ("data", "grad", "name", "requires_grad")

    def __init__(self, data, name: str | None = None, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    """One recorded operation."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    forward: Callable[..., np.ndarray]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]
    consts: dict = field(default_factory=dict)


class Tape:
    """Ordered record of applied operations (the computation record).

    Nodes are appended in execution order, so the list is already
    topologically sorted.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> list[Tensor]:
        produced = {id(n.output) for n in self.nodes}
        seen: dict[int, Tensor] = {}
        for n in self.nodes:
            for t in n.inputs:
                if id(t) not in produced:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def replay(self) -> list[np.ndarray]:
        """Recompute every node's output from the current leaf values."""
        values: dict[int, np.ndarray] = {}
        outs = []
        for n in self.nodes:
            args = [values.get(id(t), t.data) for t in n.inputs]
            out = n.forward(*args)
            values[id(n.output)] = out
            outs.append(out)
        return outs


def _record(op, inputs, out_data, forward, vjp, **consts) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(out_data, dtype=np.float64)
    out.grad, out.name, out.requires_grad = None, None, False
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.nodes.append(Node(op, tuple(inputs), out, forward, vjp, consts))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every trainable leaf.

    Returns the gradients of named trainable leaves. Leaves on no path to
    the loss get an all-zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    for leaf in tape.leaves():
        if leaf.requires_grad:
            leaf.zero_grad()
    upstream: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = upstream.pop(id(node.output), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.vjp(g)):
            if gi is None:
                continue
            if t.requires_grad and t.grad is not None:
                t.grad += gi
            key = id(t)
            if key in upstream:
                upstream[key] = upstream[key] + gi
            else:
                upstream[key] = gi
    return {t.name: t.grad for t in tape.leaves() if t.requires_grad and t.name}


class ParamSet(Mapping):
    """Named trainable tensors with a parallel gradient map."""

    def __init__(self, params: Mapping[str, Tensor] | None = None):
        self._params: dict[str, Tensor] = {}
        for name, t in (params or {}).items():
            self.add(name, t)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.name = name
        t.requires_grad = True
        t.zero_grad()
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self._params.items()}

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def subset(self, prefixes) -> "ParamSet":
        out = ParamSet()
        out._params = {k: t for k, t in self._params.items() if k.startswith(tuple(prefixes))}
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load(self, values: Mapping[str, np.ndarray]) -> None:
        for k, v in values.items():
            t = self._params[k]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != t.shape:
                raise DimensionError(f"parameter {k}: expected shape {t.shape}, got {v.shape}")
            t.data = v.copy()
            t.zero_grad()


# -- operators ---------------------------------------------------------------

def linear(W: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """``W @ x (+ b)`` applied over the last axis of ``x``."""
    W, x = as_tensor(W), as_tensor(x)
    if W.data.ndim != 2 or x.data.ndim < 1 or W.shape[1] != x.shape[-1]:
        raise DimensionError(f"linear: W shape {W.shape} incompatible with x shape {x.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"linear: bias shape {b.shape} does not match W shape {W.shape}")

    def fwd(w, xv, bv=None):
        y = xv @ w.T
        return y if bv is None else y + bv

    wd, xd = W.data, x.data

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xd.reshape(-1, xd.shape[-1])
        gw = g2.T @ x2
        gx = g @ wd
        if b is None:
            return gw, gx
        return gw, gx, g2.sum(axis=0)

    inputs = (W, x) if b is None else (W, x, b)
    return _record("linear", inputs, fwd(*(t.data for t in inputs)), fwd, vjp)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, pad: int | None = None) -> Tensor:
    """Same-size 2-D cross-correlation with zero padding.

    ``x`` is (C_in, H, W) or (B, C_in, H, W); kernels (C_out, C_in, k, k).
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if kernels.data.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise DimensionError(f"conv2d: kernels must be (C_out, C_in, k, k), got {kernels.shape}")
    k = kernels.shape[2]
    if k % 2 == 0:
        raise ConfigurationError(f"conv2d: kernel size must be odd, got {k}")
    if pad is not None and pad != (k - 1) // 2:
        raise ConfigurationError(f"conv2d: pad must be {(k - 1) // 2} for same-size output, got {pad}")
    squeeze = x.data.ndim == 3
    if x.data.ndim not in (3, 4) or x.shape[-3] != kernels.shape[1]:
        raise DimensionError(f"conv2d: input shape {x.shape} incompatible with kernels {kernels.shape}")
    if bias.shape != (kernels.shape[0],):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {kernels.shape[0]} outputs")
    cout, cin = kernels.shape[:2]

    def fwd(xv, wv, bv):
        x4 = xv[None] if squeeze else xv
        n, _, h, w = x4.shape
        y = wv.reshape(cout, -1) @ _kernels.im2col(x4, k) + bv[:, None]
        y = y.reshape(cout, n, h, w).transpose(1, 0, 2, 3)
        return np.ascontiguousarray(y[0] if squeeze else y)

    x4 = x.data[None] if squeeze else x.data
    n, _, h, w = x4.shape
    cols = _kernels.im2col(x4, k)
    wmat = kernels.data.reshape(cout, -1)
    out = (wmat @ cols + bias.data[:, None]).reshape(cout, n, h, w).transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out[0] if squeeze else out)

    def vjp(g):
        g2 = (g[None] if squeeze else g).transpose(1, 0, 2, 3).reshape(cout, n * h * w)
        gw = (g2 @ cols.T).reshape(kernels.shape)
        gb = g2.sum(axis=1)
        gx = _kernels.col2im(wmat.T @ g2, n, cin, h, w, k)
        return (gx[0] if squeeze else gx), gw, gb

    return _record("conv2d", (x, kernels, bias), out, fwd, vjp, k=k)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    probe = _RELU_PROBE.get()
    if probe is not None:
        probe.append(x.data > 0)

    def fwd(xv):
        return np.maximum(xv, 0.0)

    pos = x.data > 0

    def vjp(g):
        return (g * pos,)

    return _record("relu", (x,), fwd(x.data), fwd, vjp)


def mul_mask(x: Tensor, m) -> Tensor:
    """Elementwise product with a constant binary mask."""
    x = as_tensor(x)
    mv = np.asarray(getattr(m, "values", m), dtype=np.float64)
    if mv.shape != x.shape:
        raise DimensionError(f"mul_mask: mask shape {mv.shape} does not match input shape {x.shape}")

    def fwd(xv):
        return xv * mv

    def vjp(g):
        return (g * mv,)

    return _record("mul_mask", (x,), fwd(x.data), fwd, vjp, mask=mv)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def fwd(av, bv):
        return av + bv

    return _record("add", (a, b), fwd(a.data, b.data), fwd, lambda g: (g, g))


def mse(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all elements; ``target`` is constant."""
    pred = as_tensor(pred)
    tv = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if pred.shape != tv.shape:
        raise DimensionError(f"mse: prediction shape {pred.shape} does not match target {tv.shape}")
    count = pred.size

    def fwd(pv):
        d = pv - tv
        return np.array(np.dot(d.ravel(), d.ravel()) / count)

    diff = pred.data - tv

    def vjp(g):
        return (g * 2.0 * diff / count,)

    return _record("mse", (pred,), fwd(pred.data), fwd, vjp)


# -- structural ops (shape plumbing, all linear) ------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def fwd(xv):
        return xv.reshape(shape)

    return _record("reshape", (x,), fwd(x.data), fwd, lambda g: (g.reshape(src),))


def select(x: Tensor, index: int, axis: int) -> Tensor:
    """Take one slice along ``axis`` (the axis is dropped)."""
    x = as_tensor(x)
    src = x.shape

    def fwd(xv):
        return np.take(xv, index, axis=axis)

    def vjp(g):
        out = np.zeros(src)
        idx = [slice(None)] * len(src)
        idx[axis] = index
        out[tuple(idx)] = g
        return (out,)

    return _record("select", (x,), fwd(x.data), fwd, vjp)


def stack(xs, axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    shapes = {t.shape for t in xs}
    if len(shapes) != 1:
        raise DimensionError(f"stack: mismatched shapes {sorted(shapes)}")

    def fwd(*vs):
        return np.stack(vs, axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _record("stack", xs, fwd(*(t.data for t in xs)), fwd, vjp)


def concat(xs, axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    sizes = [t.shape[axis] for t in xs]
    bounds = np.cumsum(sizes)[:-1]

    def fwd(*vs):
        return np.concatenate(vs, axis=axis)

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", xs, fwd(*(t.data for t in xs)), fwd, vjp)


def split(x: Tensor, sizes, axis: int) -> list[Tensor]:
    """Inverse of :func:`concat`; implemented with one narrow op per piece."""
    x = as_tensor(x)
    out, start = [], 0
    for s in sizes:
        out.append(narrow(x, start, s, axis))
        start += s
    return out


def narrow(x: Tensor, start: int, length: int, axis: int) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    idx = [slice(None)] * len(src)
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def fwd(xv):
        return xv[idx].copy()

    def vjp(g):
        out = np.zeros(src)
        out[idx] = g
        return (out,)

    return _record("narrow", (x,), fwd(x.data), fwd, vjp)


def to_blocks(x: Tensor, block: int) -> Tensor:
    """(..., H, W) -> (..., H/B * W/B, B*B), blocks in raster order, row-major inside."""
    x = as_tensor(x)
    *lead, h, w = x.shape
    if h % block or w % block:
        raise DimensionError(f"to_blocks: {h}x{w} does not tile into {block}x{block} blocks")
    nh, nw = h // block, w // block
    nl = len(lead)
    perm = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3)

    def fwd(xv):
        v = xv.reshape(*lead, nh, block, nw, block).transpose(perm)
        return v.reshape(*lead, nh * nw, block * block)

    def vjp(g):
        v = g.reshape(*lead, nh, nw, block, block).transpose(perm)
        return (v.reshape(*lead, h, w),)

    return _record("to_blocks", (x,), fwd(x.data), fwd, vjp, block=block)


def from_blocks(x: Tensor, block: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`to_blocks`."""
    x = as_tensor(x)
    *lead, nb, n = x.shape
    nh, nw = h // block, w // block
    if nb != nh * nw or n != block * block:
        raise DimensionError(f"from_blocks: shape {x.shape} cannot form a {h}x{w} image of {block}-blocks")
    nl = len(lead)
    perm = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3)

    def fwd(xv):
        v = xv.reshape(*lead, nh, nw, block, block).transpose(perm)
        return v.reshape(*lead, h, w)

    def vjp(g):
        v = g.reshape(*lead, nh, block, nw, block).transpose(perm)
        return (v.reshape(*lead, nb, n),)

    return _record("from_blocks", (x,), fwd(x.data), fwd, vjp, block=block)


def linear_op(x: Tensor, fn, adjoint, op: str) -> Tensor:
    """Record a fixed linear map given as forward/adjoint array functions."""
    x = as_tensor(x)
    return _record(op, (x,), fn(x.data), fn, lambda g: (adjoint(g),))


class relu_probe:
    """Collect ReLU activation patterns of every relu call inside the block."""

    def __enter__(self) -> list:
        self.patterns: list = []
        self._token = _RELU_PROBE.set(self.patterns)
        return self.patterns

    def __exit__(self, *exc) -> None:
        _RELU_PROBE.reset(self._token)

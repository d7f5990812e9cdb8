"""Dense tensors with reverse-mode automatic differentiation.

Every value the networks touch is a ``Tensor``: a numpy array plus an
optional gradient buffer and a link back to the operations that produced
it.  Calling :meth:`Tensor.backward` on a scalar walks the recorded graph
in reverse topological order and accumulates ``d root / d leaf`` into the
``grad`` buffer of every tensor that requires gradients.  Gradients
accumulate across backward calls until explicitly cleared; this is what
lets several loss heads share one trunk.

All math is float64 unless tensors were created with another dtype.
Operations never mutate their inputs, so the graph is confined to a single
logical thread by construction.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "conv1d",
    "activation",
    "softmax_rows",
    "reduce",
    "concat",
    "reshape",
    "transpose",
    "expand",
    "absolute",
    "sqrt",
    "square",
    "grad_check",
    "reset_grads",
    "no_grad",
]

# Fault-injection hook used by the gradient-check harness to prove the
# harness actually detects broken derivatives.  Never set outside tests.
_CORRUPTED_BACKWARD: set[str] = set()

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the ``with`` block (eval-mode forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense n-dimensional real array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, values, shape=None, requires_grad: bool = False, dtype=np.float64):
        arr = np.array(values, dtype=dtype, order="C")
        if shape is not None:
            if arr.size != int(np.prod(shape)):
                raise ValueError(
                    f"data length {arr.size} does not match shape {tuple(shape)}"
                )
            arr = arr.reshape(shape)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ValueError("zero-size tensors are rejected")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values in tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- graph construction -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str) -> "Tensor":
        """Wrap an op result without re-validating; callers attach ``_backward``."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
        else:
            out.requires_grad = False
            out._parents = ()
        out._backward = None
        return out

    # -- basic properties ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- gradient plumbing ----------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.op = "detach"
        out._parents = ()
        out._backward = None
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate gradients of everything reachable from this scalar root.

        Repeated calls without clearing accumulate into ``grad``; use
        :func:`reset_grads` or :meth:`zero_grad` between independent passes.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar root, got shape {self.shape}")
        if not self.requires_grad or not self._parents:
            raise ValueError("root is not attached to a recorded computation")
        order = _toposort(self)
        _PASS.clear()
        _PASS[id(self)] = np.ones_like(self.data)
        try:
            for node in order:
                g = _PASS.pop(id(node), None)
                if g is None:
                    continue
                node._accumulate(g)
                if node._backward is not None:
                    node._backward(g)
        finally:
            _PASS.clear()

    # Operator sugar used throughout the layer code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)


# Per-backward-pass gradient staging area keyed by tensor id.  Confined to a
# single thread together with the rest of the graph machinery.
_PASS: dict[int, np.ndarray] = {}


def _send(parent: Tensor, g: np.ndarray) -> None:
    if not parent.requires_grad:
        return
    prev = _PASS.get(id(parent))
    _PASS[id(parent)] = g if prev is None else prev + g


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse-topological order of the graph rooted at ``root`` (iterative)."""
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
    order.reverse()
    return order


def reset_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


# -- arithmetic ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be rank-1 broadcast over the last axis (bias)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        bias_case = False
    elif b.ndim == 1 and a.ndim >= 2 and a.shape[-1] == b.shape[0]:
        bias_case = True
    else:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor._from_op(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _bw(g):
            _send(a, g)
            if bias_case:
                _send(b, g.reshape(-1, b.shape[0]).sum(axis=0))
            else:
                _send(b, g)
        out._backward = _bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor._from_op(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def _bw(g):
            _send(a, g)
            _send(b, -g)
        out._backward = _bw
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with an equal-shape tensor or a python scalar."""
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        scale = float(b)
        out = Tensor._from_op(a.data * scale, (a,), "scale")
        if out.requires_grad:
            out._backward = lambda g: _send(a, g * scale)
        return out
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor._from_op(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _bw(g):
            _send(a, g * b.data)
            _send(b, g * a.data)
        out._backward = _bw
    return out


def div(a: Tensor, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        return mul(a, 1.0 / float(b))
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"div: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor._from_op(a.data / b.data, (a, b), "div")
    if out.requires_grad:
        def _bw(g):
            _send(a, g / b.data)
            _send(b, -g * a.data / (b.data * b.data))
        out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors: [m,k] @ [k,n] -> [m,n]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    out = Tensor._from_op(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _bw(g):
            _send(a, g @ b.data.T)
            _send(b, a.data.T @ g)
        out._backward = _bw
    return out


# -- convolution ----------------------------------------------------------------


def conv1d(x: Tensor, kernels: Tensor, padding: int = 0) -> Tensor:
    """1-d cross-correlation over the last axis (no kernel flip).

    ``x`` is [C_in, L] or [B, C_in, L]; ``kernels`` is [C_out, C_in, K].
    Output length is L + 2*padding - K + 1.
    """
    x, kernels = _as_tensor(x), _as_tensor(kernels)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.ndim != 3:
        raise ValueError(f"conv1d: bad ranks {x.shape}, {kernels.shape}")
    B, c_in, L = xd.shape
    c_out, kc_in, K = kernels.shape
    if kc_in != c_in:
        raise ValueError(f"conv1d: channel mismatch (input {c_in}, kernel {kc_in})")
    if padding < 0:
        raise ValueError("conv1d: negative padding")
    Lp = L + 2 * padding
    if K > Lp:
        raise ValueError(f"conv1d: kernel {K} longer than padded input {Lp}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)  # [B,Cin,L',K]
    # out[b,co,l] = sum_{ci,k} w[co,ci,k] * win[b,ci,l,k]
    data = np.tensordot(win, kernels.data, axes=([1, 3], [1, 2]))  # [B,L',Cout]
    data = np.ascontiguousarray(np.transpose(data, (0, 2, 1)))
    out = Tensor._from_op(data[0] if squeeze else data, (x, kernels), "conv1d")

    if out.requires_grad:
        def _bw(g):
            gb = g[None] if squeeze else g  # [B,Cout,L']
            gk = np.tensordot(gb, win, axes=([0, 2], [0, 2]))  # [Cout,Cin,K]
            _send(kernels, gk)
            if x.requires_grad:
                gpad = np.pad(gb, ((0, 0), (0, 0), (K - 1, K - 1)))
                gwin = np.lib.stride_tricks.sliding_window_view(gpad, K, axis=2)  # [B,Cout,Lp,K]
                wrev = kernels.data[:, :, ::-1]
                gx = np.tensordot(gwin, wrev, axes=([1, 3], [0, 2]))  # [B,Lp,Cin]
                gx = np.transpose(gx, (0, 2, 1))
                if padding:
                    gx = gx[:, :, padding:padding + L]
                _send(x, gx[0] if squeeze else gx)
        out._backward = _bw
    return out


# -- nonlinearities ------------------------------------------------------------


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise relu / sigmoid / tanh; relu'(0) is defined as 0."""
    x = _as_tensor(x)
    if kind == "relu":
        data = np.maximum(x.data, 0.0)
    elif kind == "sigmoid":
        data = _stable_sigmoid(x.data)
    elif kind == "tanh":
        data = np.tanh(x.data)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    out = Tensor._from_op(data, (x,), kind)
    if out.requires_grad:
        if kind == "relu":
            local = (x.data > 0.0).astype(x.data.dtype)
        elif kind == "sigmoid":
            local = data * (1.0 - data)
        else:
            local = 1.0 - data * data
        if kind in _CORRUPTED_BACKWARD:
            local = local * 1.5  # fault injection for harness self-tests
        out._backward = lambda g: _send(x, g * local)
    return out


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a rank-2 tensor, max-subtracted for stability."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"softmax_rows expects rank 2, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)
    out = Tensor._from_op(data, (x,), "softmax_rows")
    if out.requires_grad:
        def _bw(g):
            dot = (g * data).sum(axis=1, keepdims=True)
            _send(x, data * (g - dot))
        out._backward = _bw
    return out


# -- reductions and shape ops -----------------------------------------------


def _sum_axes(x: Tensor, axes: tuple[int, ...] | None, keepdims: bool, mean: bool) -> Tensor:
    x = _as_tensor(x)
    n = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    fn = np.mean if mean else np.sum
    data = np.asarray(fn(x.data, axis=axes, keepdims=keepdims))
    if data.ndim == 0:
        data = data.reshape(1)
    out = Tensor._from_op(data, (x,), "mean" if mean else "sum")
    if out.requires_grad:
        def _bw(g):
            gg = g
            if not keepdims and axes is not None:
                for a in sorted(axes):
                    gg = np.expand_dims(gg, a)
            gg = np.broadcast_to(gg.reshape(gg.shape if axes is not None else (1,) * x.ndim), x.shape)
            _send(x, gg / n if mean else gg + np.zeros_like(x.data))
        out._backward = _bw
    return out


def reduce(x: Tensor, kind: str = "sum", axis: str = "all") -> Tensor:
    """Sum or mean over all entries or over the last axis."""
    if kind not in ("sum", "mean"):
        raise ValueError(f"unknown reduce kind {kind!r}")
    if axis == "all":
        axes = None
    elif axis == "last":
        axes = (_as_tensor(x).ndim - 1,)
    else:
        raise ValueError(f"reduce axis must be 'all' or 'last', got {axis!r}")
    return _sum_axes(x, axes, keepdims=False, mean=(kind == "mean"))


def mean_over(x: Tensor, axes: tuple[int, ...], keepdims: bool = False) -> Tensor:
    return _sum_axes(x, axes, keepdims=keepdims, mean=True)


def sum_over(x: Tensor, axes: tuple[int, ...], keepdims: bool = False) -> Tensor:
    return _sum_axes(x, axes, keepdims=keepdims, mean=False)


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    return concat_n([a, b], axis)


def concat_n(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; backward splits the incoming gradient."""
    ts = [_as_tensor(t) for t in tensors]
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref):
            raise ValueError("concat: rank mismatch")
        for ax, (da, db) in enumerate(zip(ref, t.shape)):
            if ax != (axis % len(ref)) and da != db:
                raise ValueError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    data = np.concatenate([t.data for t in ts], axis=axis)
    out = Tensor._from_op(data, tuple(ts), "concat")
    if out.requires_grad:
        sizes = [t.shape[axis % t.ndim] for t in ts]
        offsets = np.cumsum(sizes)[:-1]
        def _bw(g):
            for t, piece in zip(ts, np.split(g, offsets, axis=axis)):
                _send(t, piece)
        out._backward = _bw
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)
    out = Tensor._from_op(data, (x,), "reshape")
    if out.requires_grad:
        out._backward = lambda g: _send(x, g.reshape(x.shape))
    return out


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    data = np.ascontiguousarray(np.transpose(x.data, axes))
    out = Tensor._from_op(data, (x,), "transpose")
    if out.requires_grad:
        inv = tuple(np.argsort(axes))
        out._backward = lambda g: _send(x, np.transpose(g, inv))
    return out


def expand(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Broadcast size-1 axes of ``x`` up to ``shape`` (ranks must match)."""
    x = _as_tensor(x)
    if len(shape) != x.ndim:
        raise ValueError(f"expand: rank mismatch {x.shape} -> {shape}")
    axes = tuple(i for i, (a, b) in enumerate(zip(x.shape, shape)) if a != b)
    for a in axes:
        if x.shape[a] != 1:
            raise ValueError(f"expand: cannot grow axis {a} of {x.shape} to {shape}")
    data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    out = Tensor._from_op(data, (x,), "expand")
    if out.requires_grad:
        out._backward = lambda g: _send(x, g.sum(axis=axes, keepdims=True) if axes else g)
    return out


def _getitem(x: Tensor, idx) -> Tensor:
    data = x.data[idx]
    if np.isscalar(data) or data.ndim == 0:
        data = np.asarray(data).reshape(1)
        scalar = True
    else:
        scalar = False
    out = Tensor._from_op(np.ascontiguousarray(data), (x,), "slice")
    if out.requires_grad:
        def _bw(g):
            gx = np.zeros_like(x.data)
            gx[idx] = g.reshape(()) if scalar else g
            _send(x, gx)
        out._backward = _bw
    return out


# -- elementwise extras --------------------------------------------------------


def absolute(x: Tensor) -> Tensor:
    """|x| with subgradient sign(0) = 0."""
    x = _as_tensor(x)
    out = Tensor._from_op(np.abs(x.data), (x,), "abs")
    if out.requires_grad:
        out._backward = lambda g: _send(x, g * np.sign(x.data))
    return out


def square(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = Tensor._from_op(x.data * x.data, (x,), "square")
    if out.requires_grad:
        out._backward = lambda g: _send(x, g * 2.0 * x.data)
    return out


def sqrt(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.sqrt(x.data)
    out = Tensor._from_op(data, (x,), "sqrt")
    if out.requires_grad:
        out._backward = lambda g: _send(x, g * 0.5 / data)
    return out


# -- verification harness -------------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must map a tensor to a scalar tensor deterministically.  The error
    per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = np.array(x.data, dtype=np.float64)

    probe = Tensor(base, requires_grad=True)
    y = f(probe)
    if y.size != 1:
        raise ValueError("grad_check target must return a scalar")
    y.backward()
    analytic = probe.grad.reshape(-1).copy() if probe.grad is not None else np.zeros(base.size)

    numeric = np.zeros_like(analytic)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        with no_grad():
            hi = f(Tensor(base)).item()
        flat[i] = orig - step
        with no_grad():
            lo = f(Tensor(base)).item()
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * step)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))

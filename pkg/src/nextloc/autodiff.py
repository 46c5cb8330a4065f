"""Dense tensors with reverse-mode automatic differentiation.

A deliberately small engine: rank-0/1/2 float arrays, a dynamic tape built
through parent links, and exactly the primitives the model needs (matmul,
concat, gather/scatter, segment mean, the usual pointwise nonlinearities,
masked softmax, log-softmax + NLL, inverted dropout, row L2 normalization).
float32 by default; float64 is available for gradient checking.
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible for an op; message names the op."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily switch the dtype used by tensor()/zeros() factories."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape construction (evaluation mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A dense array plus optional gradient buffer and tape links.

    ``_backward`` is a closure that reads ``self.grad`` and accumulates
    into the parents' ``grad`` buffers; calling the closures of a tape in
    any reverse topological order yields the same gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents) if _GRAD_ENABLED else ()
        self._backward = backward if _GRAD_ENABLED else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, value):
        if self.grad is None:
            self.grad = np.array(value, dtype=self.data.dtype, copy=True)
        else:
            self.grad += value

    def backward(self, grad=None):
        """Reverse pass from this tensor; seeds with ones when grad is None."""
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
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        if grad is None:
            grad = np.ones_like(self.data)
        self.accumulate_grad(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable tensor with a stable name for checkpointing."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data, dtype=_DEFAULT_DTYPE), requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


def tensor(data, requires_grad=False) -> Tensor:
    """Wrap data as a constant (or leaf) tensor in the default dtype."""
    return Tensor(np.asarray(data, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE))


def _result(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    if not (_GRAD_ENABLED and req):
        return Tensor(data)
    out = Tensor(data, requires_grad=True, parents=parents, backward=None)
    out._backward = backward(out)
    return out


def _check(cond, op, *shapes):
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


def _unbroadcast(grad, shape):
    # reduce a broadcast gradient back to the operand's shape
    if grad.shape == shape:
        return grad
    if shape == ():
        return grad.sum()
    # (n,k) grad vs (k,) operand or (n,1) operand
    if len(shape) == 1:
        return grad.sum(axis=0)
    if len(shape) == 2 and shape[0] == 1 and grad.shape[0] != 1:
        return grad.sum(axis=0, keepdims=True)
    if len(shape) == 2 and shape[1] == 1 and grad.shape[1] != 1:
        return grad.sum(axis=1, keepdims=True)
    raise ShapeError(f"unbroadcast: cannot reduce {grad.shape} to {shape}")


def _binary_shapes_ok(a, b):
    # supported: identical shapes, scalar with anything, (n,k) with (k,),
    # (n,k) with (n,1) or (1,k)
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return True
    x, y = (a, b) if a.ndim >= b.ndim else (b, a)
    if x.ndim == 2 and y.ndim == 1 and x.shape[1] == y.shape[0]:
        return True
    if x.ndim == 2 and y.ndim == 2:
        return (x.shape[0] == y.shape[0] and y.shape[1] == 1) or (
            x.shape[1] == y.shape[1] and y.shape[0] == 1
        )
    return False


def _as_tensor(x):
    return x if isinstance(x, Tensor) else tensor(x)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check(_binary_shapes_ok(a.data, b.data), "add", a.shape, b.shape)
    data = a.data + b.data

    def backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g, b.data.shape))
        return fn

    return _result(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check(_binary_shapes_ok(a.data, b.data), "sub", a.shape, b.shape)
    data = a.data - b.data

    def backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(-_unbroadcast(g, b.data.shape))
        return fn

    return _result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check(_binary_shapes_ok(a.data, b.data), "mul", a.shape, b.shape)
    data = a.data * b.data

    def backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))
        return fn

    return _result(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check(
        a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
        "matmul", a.shape, b.shape,
    )
    data = a.data @ b.data

    def backward(out):
        def fn():
            g = out.grad
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        return fn

    return _result(data, (a, b), backward)


def concat(parts, axis=-1) -> Tensor:
    """Concatenate rank-1 or rank-2 tensors along axis 0 or the last axis."""
    parts = [_as_tensor(p) for p in parts]
    nd = parts[0].ndim
    _check(all(p.ndim == nd for p in parts), "concat", *[p.shape for p in parts])
    ax = axis if axis >= 0 else nd + axis
    _check(ax in (0, nd - 1), "concat", *[p.shape for p in parts])
    data = np.concatenate([p.data for p in parts], axis=ax)
    sizes = [p.shape[ax] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        def fn():
            g = out.grad
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    sl = (slice(lo, hi),) if ax == 0 else (Ellipsis, slice(lo, hi))
                    p.accumulate_grad(g[sl])
        return fn

    return _result(data, tuple(parts), backward)


def _pointwise(a, fwd, dfn):
    a = _as_tensor(a)
    data = fwd(a.data)

    def backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * dfn(a.data, data))
        return fn

    return _result(data, (a,), backward)


def sigmoid(a) -> Tensor:
    return _pointwise(a, lambda x: 1.0 / (1.0 + np.exp(-x)), lambda x, y: y * (1.0 - y))


def tanh(a) -> Tensor:
    return _pointwise(a, np.tanh, lambda x, y: 1.0 - y * y)


def relu(a) -> Tensor:
    return _pointwise(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(x.dtype))


def sin(a) -> Tensor:
    return _pointwise(a, np.sin, lambda x, y: np.cos(x))


def softmax(a) -> Tensor:
    """Softmax over the last axis (rank 1 or 2)."""
    a = _as_tensor(a)
    _check(a.ndim in (1, 2), "softmax", a.shape)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(out):
        def fn():
            if a.requires_grad:
                g = out.grad
                y = out.data
                dot = (g * y).sum(axis=-1, keepdims=True)
                a.accumulate_grad(y * (g - dot))
        return fn

    return _result(data, (a,), backward)


def log_softmax(a) -> Tensor:
    """Log-softmax over the last axis (rank 1 or 2)."""
    a = _as_tensor(a)
    _check(a.ndim in (1, 2), "log_softmax", a.shape)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - lse

    def backward(out):
        def fn():
            if a.requires_grad:
                g = out.grad
                a.accumulate_grad(g - np.exp(out.data) * g.sum(axis=-1, keepdims=True))
        return fn

    return _result(data, (a,), backward)


def nll_loss(logp, targets) -> Tensor:
    """Mean over rows of -logp[i, targets[i]]; logp is (n, k) log-probabilities."""
    logp = _as_tensor(logp)
    targets = np.asarray(targets, dtype=np.int64)
    _check(logp.ndim == 2 and targets.shape == (logp.shape[0],), "nll_loss", logp.shape, targets.shape)
    n = logp.shape[0]
    rows = np.arange(n)
    data = np.asarray(-logp.data[rows, targets].mean(), dtype=logp.data.dtype)

    def backward(out):
        def fn():
            if logp.requires_grad:
                g = np.zeros_like(logp.data)
                g[rows, targets] = -out.grad / n
                logp.accumulate_grad(g)
        return fn

    return _result(data, (logp,), backward)


def cross_entropy(logits, targets) -> Tensor:
    """Softmax cross-entropy via log-softmax + NLL, mean over rows."""
    return nll_loss(log_softmax(logits), targets)


def sum_all(a) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    a = _as_tensor(a)
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(np.broadcast_to(out.grad, a.data.shape).copy())
        return fn

    return _result(data, (a,), backward)


def mean_rows(a) -> Tensor:
    """Mean over axis 0 of an (n, k) tensor, returning shape (k,)."""
    a = _as_tensor(a)
    _check(a.ndim == 2, "mean_rows", a.shape)
    n = a.shape[0]
    data = a.data.mean(axis=0)

    def backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(np.repeat(out.grad[None, :] / n, n, axis=0))
        return fn

    return _result(data, (a,), backward)


def gather_rows(table, indices) -> Tensor:
    """Row gather table[indices] for an (m, k) tensor; embedding lookup."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    _check(table.ndim == 2 and idx.ndim == 1, "gather_rows", table.shape, idx.shape)
    data = table.data[idx]

    def backward(out):
        def fn():
            if table.requires_grad:
                g = np.zeros_like(table.data)
                np.add.at(g, idx, out.grad)
                table.accumulate_grad(g)
        return fn

    return _result(data, (table,), backward)


def scatter_rows(base, indices, rows) -> Tensor:
    """Copy of base with base[indices] replaced by rows; indices must be unique."""
    base, rows = _as_tensor(base), _as_tensor(rows)
    idx = np.asarray(indices, dtype=np.int64)
    _check(
        base.ndim == 2 and rows.ndim == 2 and rows.shape == (idx.shape[0], base.shape[1]),
        "scatter_rows", base.shape, rows.shape,
    )
    data = base.data.copy()
    data[idx] = rows.data

    def backward(out):
        def fn():
            g = out.grad
            if base.requires_grad:
                gb = g.copy()
                gb[idx] = 0.0
                base.accumulate_grad(gb)
            if rows.requires_grad:
                rows.accumulate_grad(g[idx])
        return fn

    return _result(data, (base, rows), backward)


def segment_mean(data_t, segment_ids, num_segments) -> Tensor:
    """Per-segment mean of rows; empty segments yield the zero vector."""
    data_t = _as_tensor(data_t)
    seg = np.asarray(segment_ids, dtype=np.int64)
    _check(data_t.ndim == 2 and seg.shape == (data_t.shape[0],), "segment_mean", data_t.shape, seg.shape)
    k = data_t.shape[1]
    sums = np.zeros((num_segments, k), dtype=data_t.data.dtype)
    np.add.at(sums, seg, data_t.data)
    counts = np.bincount(seg, minlength=num_segments).astype(data_t.data.dtype)
    denom = np.maximum(counts, 1.0)[:, None]
    out_data = sums / denom

    def backward(out):
        def fn():
            if data_t.requires_grad:
                data_t.accumulate_grad(out.grad[seg] / denom[seg])
        return fn

    return _result(out_data, (data_t,), backward)


def dropout(a, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: scales survivors by 1/(1-p) in train mode, identity in eval."""
    a = _as_tensor(a)
    if not train or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    data = a.data * keep

    def backward(out):
        def fn():
            if a.requires_grad:
                a.accumulate_grad(out.grad * keep)
        return fn

    return _result(data, (a,), backward)


def l2_normalize_rows(a, eps: float = 1e-12) -> Tensor:
    """Rows scaled to unit L2 norm; all-zero rows are left at zero."""
    a = _as_tensor(a)
    _check(a.ndim == 2, "l2_normalize_rows", a.shape)
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    denom = np.maximum(norms, eps)
    data = a.data / denom

    def backward(out):
        def fn():
            if a.requires_grad:
                g = out.grad
                y = out.data
                dot = (g * y).sum(axis=1, keepdims=True)
                a.accumulate_grad((g - y * dot) / denom)
        return fn

    return _result(data, (a,), backward)


def slice_cols(a, start: int, stop: int) -> Tensor:
    """Column slice a[:, start:stop] of an (n, k) tensor."""
    a = _as_tensor(a)
    _check(a.ndim == 2 and 0 <= start < stop <= a.shape[1], "slice_cols", a.shape, (start, stop))
    data = a.data[:, start:stop]

    def backward(out):
        def fn():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                g[:, start:stop] = out.grad
                a.accumulate_grad(g)
        return fn

    return _result(data, (a,), backward)

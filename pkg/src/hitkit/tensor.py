"""Dense tensors with a reverse-mode gradient tape.

Every differentiable operation records a backward rule on a module-level
tape; ``backward`` replays the tape in reverse and accumulates gradients
on requires_grad leaves. Shapes are strict: binary elementwise ops demand
identical shapes, and the only implicit broadcast is scalar * tensor.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if any(dim < 1 for dim in arr.shape):
            raise ShapeError(f"tensor dimensions must all be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class _Entry:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_tape: list[_Entry] = []
_recording: bool = True


def tape_size() -> int:
    return len(_tape)


def clear_tape() -> None:
    _tape.clear()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / finite differences)."""
    global _recording
    prev = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = prev


def _emit(out_data, inputs, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    track = _recording and any(t.requires_grad for t in inputs)
    out.requires_grad = track
    if track:
        _tape.append(_Entry(out, inputs, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf, then clear the tape."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    produced = {id(e.out) for e in _tape}
    for entry in reversed(_tape):
        dout = grads.pop(id(entry.out), None)
        holders.pop(id(entry.out), None)
        if dout is None:
            continue
        for tensor, g in zip(entry.inputs, entry.backward_fn(dout)):
            if g is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                holders[key] = tensor
    for key, tensor in holders.items():
        if key in produced:
            continue
        g = np.array(grads[key], dtype=np.float64, copy=True)
        tensor.grad = g if tensor.grad is None else tensor.grad + g
    clear_tape()


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _emit(a.data + b.data, (a, b), lambda dout: (dout, dout))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda dout: (dout, -dout))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda dout: (dout * bd, dout * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"div shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _emit(ad / bd, (a, b), lambda dout: (dout / bd, -dout * ad / (bd * bd)))


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    return _emit(x.data * s, (x,), lambda dout: (dout * s,))


def scalar_mul(s: Tensor, x: Tensor) -> Tensor:
    """Multiply a tensor by a one-element gate tensor (differentiable in both)."""
    if s.data.size != 1:
        raise ShapeError(f"scalar_mul gate must be one element, got shape {s.shape}")
    sval = float(s.data.reshape(()))
    xd = x.data
    sshape = s.shape

    def bwd(dout):
        return (np.sum(dout * xd).reshape(sshape), dout * sval)

    return _emit(xd * sval, (s, x), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _emit(ad @ bd, (a, b), lambda dout: (dout @ bd.T, ad.T @ dout))


def transpose2d(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose2d needs a matrix, got shape {x.shape}")
    return _emit(np.ascontiguousarray(x.data.T), (x,), lambda dout: (dout.T,))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {shape}") from exc
    return _emit(out, (x,), lambda dout: (dout.reshape(old),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda dout: (dout * (1.0 - y * y),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _emit(np.where(pos, x.data, 0.0), (x,), lambda dout: (dout * pos,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    y = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))), np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
    return _emit(y, (x,), lambda dout: (dout * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _emit(y, (x,), lambda dout: (dout * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _emit(np.log(xd), (x,), lambda dout: (dout / xd,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _emit(y, (x,), lambda dout: (dout * 0.5 / y,))


_ELEMENTWISE = {}


def elementwise(op: str, *operands: Tensor) -> Tensor:
    """Dispatch by name over the basic pointwise ops."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*operands)


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Stable softmax along one axis; masked-out entries get probability zero."""
    ax = axis if axis >= 0 else x.ndim + axis
    if ax < 0 or ax >= x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    xd = x.data
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != xd.shape:
            raise ShapeError(f"softmax mask shape {m.shape} does not match {xd.shape}")
        if not m.any(axis=ax).all():
            raise ValueError("softmax: a slice has every position masked")
        xm = np.where(m, xd, -np.inf)
    else:
        xm = xd
    shifted = xm - xm.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=ax, keepdims=True)

    def bwd(dout):
        inner = (dout * y).sum(axis=ax, keepdims=True)
        return (y * (dout - inner),)

    return _emit(y, (x,), bwd)


def outer_product(u: Tensor, v: Tensor) -> Tensor:
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise ShapeError(f"outer_product needs equal-length vectors, got {u.shape} and {v.shape}")
    ud, vd = u.data, v.data
    return _emit(np.outer(ud, vd), (u, v), lambda dout: (dout @ vd, dout.T @ ud))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match last dim {d}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data
    lead = tuple(range(xd.ndim - 1))

    def bwd(dout):
        dbeta = dout.sum(axis=lead) if lead else dout.copy()
        dgamma = (dout * xhat).sum(axis=lead) if lead else dout * xhat
        dxhat = dout * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return (dx, dgamma, dbeta)

    return _emit(y, (x, gamma, beta), bwd)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ShapeError(f"embedding ids must be a non-empty 1-d sequence, got shape {ids.shape}")
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be a matrix, got shape {table.shape}")
    vocab = table.shape[0]
    bad = ids[(ids < 0) | (ids >= vocab)]
    if bad.size:
        raise ValueError(f"embedding id {int(bad[0])} out of range for table of size {vocab}")
    tshape = table.shape

    def bwd(dout):
        g = np.zeros(tshape, dtype=np.float64)
        np.add.at(g, ids, dout)
        return (g,)

    return _emit(table.data[ids], (table,), bwd)


gather_rows = embedding_lookup


def cross_entropy(logits: Tensor, targets, ignore_index=None) -> Tensor:
    """Mean -log softmax(logits)[target] over positions whose target != ignore_index."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy needs (N, C) logits, got shape {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if t.shape != (n,):
        raise ShapeError(f"cross_entropy target length {t.shape} does not match {n} rows")
    valid = np.ones(n, dtype=bool) if ignore_index is None else (t != ignore_index)
    count = int(valid.sum())
    if count == 0:
        raise ValueError("empty loss: every position is ignored")
    tv = t[valid]
    if tv.size and (tv.min() < 0 or tv.max() >= c):
        raise ValueError(f"cross_entropy target out of range [0, {c})")
    xd = logits.data
    shifted = xd - xd.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.nonzero(valid)[0]
    loss = -logp[rows, tv].sum() / count

    def bwd(dout):
        p = np.exp(logp)
        g = p.copy()
        g[rows, tv] -= 1.0
        g[~valid] = 0.0
        return (g * (float(dout) / count),)

    return _emit(np.asarray(loss), (logits,), bwd)


def dropout(x: Tensor, p: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: zero with probability p and scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    m = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit(x.data * m, (x,), lambda dout: (dout * m,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a bias vector to every row of a matrix (the one sanctioned row broadcast)."""
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    return _emit(x.data + b.data, (x, b), lambda dout: (dout, dout.sum(axis=0)))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _emit(np.asarray(x.data.sum()), (x,), lambda dout: (np.full(shape, float(dout)),))


def mean_rows(x: Tensor, mask=None) -> Tensor:
    """Mean over (unmasked) rows of a matrix."""
    if x.ndim != 2:
        raise ShapeError(f"mean_rows needs a matrix, got shape {x.shape}")
    n, d = x.shape
    m = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ShapeError(f"mean_rows mask length {m.shape} does not match {n} rows")
    count = int(m.sum())
    if count == 0:
        raise ValueError("mean_rows: every row is masked")

    def bwd(dout):
        g = np.zeros((n, d), dtype=np.float64)
        g[m] = dout / count
        return (g,)

    return _emit(x.data[m].sum(axis=0) / count, (x,), bwd)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2 or not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice_cols [{start}:{stop}] invalid for shape {x.shape}")
    shape = x.shape

    def bwd(dout):
        g = np.zeros(shape, dtype=np.float64)
        g[:, start:stop] = dout
        return (g,)

    return _emit(np.ascontiguousarray(x.data[:, start:stop]), (x,), bwd)


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    if not parts or any(p.ndim != 2 or p.shape[0] != parts[0].shape[0] for p in parts):
        raise ShapeError("concat_cols needs matrices with equal row counts")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(dout):
        return tuple(dout[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=1), tuple(parts), bwd)


def concat_rows(parts) -> Tensor:
    parts = list(parts)
    if not parts or any(p.ndim != 2 or p.shape[1] != parts[0].shape[1] for p in parts):
        raise ShapeError("concat_rows needs matrices with equal column counts")
    heights = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + heights)

    def bwd(dout):
        return tuple(dout[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bwd)


def concat_vec(parts) -> Tensor:
    parts = list(parts)
    if not parts or any(p.ndim != 1 for p in parts):
        raise ShapeError("concat_vec needs rank-1 tensors")
    lengths = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + lengths)

    def bwd(dout):
        return tuple(dout[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts]), tuple(parts), bwd)


def stack_rows(rows) -> Tensor:
    rows = list(rows)
    if not rows or any(r.ndim != 1 or r.shape != rows[0].shape for r in rows):
        raise ShapeError("stack_rows needs equal-length vectors")

    def bwd(dout):
        return tuple(dout[i] for i in range(len(rows)))

    return _emit(np.stack([r.data for r in rows]), tuple(rows), bwd)


def get_element(x: Tensor, index: int) -> Tensor:
    if x.ndim != 1 or not (0 <= index < x.shape[0]):
        raise ShapeError(f"get_element index {index} invalid for shape {x.shape}")
    n = x.shape[0]

    def bwd(dout):
        g = np.zeros(n, dtype=np.float64)
        g[index] = float(dout)
        return (g,)

    return _emit(np.asarray(x.data[index]), (x,), bwd)


# ---------------------------------------------------------------------------
# pairwise ops used by outer-product attention


def pairwise_hadamard(q: Tensor, k: Tensor) -> Tensor:
    """out[i, j, :] = q[i] * k[j] for all query/key row pairs."""
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ShapeError(f"pairwise_hadamard shape mismatch: {q.shape} vs {k.shape}")
    qd, kd = q.data, k.data

    def bwd(dout):
        return (np.einsum("ijd,jd->id", dout, kd), np.einsum("ijd,id->jd", dout, qd))

    return _emit(qd[:, None, :] * kd[None, :, :], (q, k), bwd)


def opa_sum_outer(s: Tensor, v: Tensor, allowed) -> Tensor:
    """out[i] = sum over allowed j of s[i, j, :] (outer) v[j], a matrix per query."""
    a = np.asarray(allowed, dtype=np.float64)
    if s.ndim != 3 or v.ndim != 2 or a.shape != s.shape[:2] or v.shape[0] != s.shape[1]:
        raise ShapeError(f"opa_sum_outer shape mismatch: scores {s.shape}, values {v.shape}")
    sd, vd = s.data, v.data

    def bwd(dout):
        ds = np.einsum("ij,ide,je->ijd", a, dout, vd)
        dv = np.einsum("ij,ijd,ide->je", a, sd, dout)
        return (ds, dv)

    return _emit(np.einsum("ij,ijd,je->ide", a, sd, vd), (s, v), bwd)


def opa_sum_hadamard(s: Tensor, v: Tensor, allowed) -> Tensor:
    """out[i] = sum over allowed j of s[i, j, :] * v[j]."""
    a = np.asarray(allowed, dtype=np.float64)
    if s.ndim != 3 or v.ndim != 2 or a.shape != s.shape[:2] or v.shape != s.shape[1:]:
        raise ShapeError(f"opa_sum_hadamard shape mismatch: scores {s.shape}, values {v.shape}")
    sd, vd = s.data, v.data

    def bwd(dout):
        ds = np.einsum("ij,id,jd->ijd", a, dout, vd)
        dv = np.einsum("ij,ijd,id->jd", a, sd, dout)
        return (ds, dv)

    return _emit(np.einsum("ij,ijd,jd->id", a, sd, vd), (s, v), bwd)


_ELEMENTWISE.update({"tanh": tanh, "add": add, "mul": mul, "scale": scale, "relu": relu})


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """Differentiable cosine between two vectors; rejects zero-norm inputs."""
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise ShapeError(f"cosine needs equal-length vectors, got {u.shape} and {v.shape}")
    nu = math.sqrt(float(np.dot(u.data, u.data)))
    nv = math.sqrt(float(np.dot(v.data, v.data)))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine of a zero-norm embedding")
    dot = sum_all(mul(u, v))
    return div(dot, mul(sqrt(sum_all(mul(u, u))), sqrt(sum_all(mul(v, v)))))

"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Storage and elementwise kernels are numpy; the differentiation machinery
(tape, backward rules, gradient checking) lives here. Everything runs in
float64 so finite-difference oracles can use tight tolerances.
"""

from __future__ import annotations

import zlib

import numpy as np

from .exceptions import (
    ConfigurationError,
    DegenerateSliceError,
    DimensionError,
    NumericError,
    RankError,
)

__all__ = [
    "Tensor",
    "ComputationTape",
    "RngState",
    "tape",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "pair_einsum",
    "power",
    "exp",
    "log",
    "sigmoid",
    "relu",
    "clamp",
    "tsum",
    "tmean",
    "reshape",
    "transpose",
    "swapaxes",
    "concat",
    "dropout",
    "softmax_lastdim",
    "logsumexp_lastdim",
    "unfold_time",
    "layer_norm",
    "linear",
    "finite_diff_check",
    "GradCheckReport",
]


class Tensor:
    """A dense float64 array with an optional gradient accumulator.

    ``grad`` is ``None`` until a gradient is written; ``zero_grad`` and the
    constructor of a ``requires_grad`` leaf materialize it as zeros.
    """

    __slots__ = ("data", "requires_grad", "grad", "_taped")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._taped = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def item(self):
        if self.data.size != 1:
            raise RankError(f"item() requires a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all semantics live in the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class ComputationTape:
    """Ordered record of executed operations for one forward pass.

    Each record holds the output tensor, the input tensors, and a closure
    mapping the output gradient to per-input gradients. Backward replay
    visits records exactly once, in reverse execution order.
    """

    __slots__ = ("_records",)

    def __init__(self):
        self._records = []

    def record(self, out, inputs, backward_fn):
        out._taped = True
        self._records.append((out, inputs, backward_fn))

    def reset(self):
        self._records.clear()

    def __len__(self):
        return len(self._records)


_TAPE = ComputationTape()
_GRAD_ENABLED = True


def tape():
    """The process-global tape (one forward pass owns it at a time)."""
    return _TAPE


def is_grad_enabled():
    return _GRAD_ENABLED


class no_grad:
    """Context manager that disables taping (evaluation-mode forwards)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def backward(loss):
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Repeated calls without ``zero_grad`` accumulate. Gradients propagate
    through a per-call map so earlier accumulated values never feed back
    into the traversal. Published buffers are never mutated in place, so
    assigning them without copying is safe.
    """
    if loss.data.size != 1:
        raise RankError(f"backward requires a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    if not loss._taped:
        if loss.requires_grad:
            _publish(loss, seed)
        return
    upstream = {id(loss): seed}
    for out, inputs, fn in reversed(_TAPE._records):
        g = upstream.pop(id(out), None)
        if g is None:
            continue
        _publish(out, g)
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                continue
            if t._taped:
                key = id(t)
                upstream[key] = upstream[key] + gi if key in upstream else gi
            else:
                _publish(t, gi)


def _publish(t, g):
    t.grad = g if t.grad is None else t.grad + g


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, inputs, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{opname}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    return _make(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(x):
    x = _as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,))


def matmul(a, b):
    """Matrix product with stacked (batched) leading dimensions."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise DimensionError(f"matmul: batch dimensions disagree for {a.shape} x {b.shape}") from None

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(out, (a, b), bw)


def power(x, p):
    """Elementwise x**p for a scalar exponent p."""
    x = _as_tensor(x)
    p = float(p)
    out = x.data**p

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * x.data ** (p - 1.0)
        d = np.where(np.isfinite(d), d, 0.0)
        return (g * d,)

    return _make(out, (x,), bw)


def exp(x):
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x):
    x = _as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def sigmoid(x):
    x = _as_tensor(x)
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x):
    x = _as_tensor(x)
    return _make(np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),))


def clamp(x, lo=None, hi=None):
    """Clip to [lo, hi]; gradient passes only through unclipped entries."""
    x = _as_tensor(x)
    out = np.clip(x.data, lo, hi)
    inside = np.ones_like(x.data, dtype=bool)
    if lo is not None:
        inside &= x.data > lo
    if hi is not None:
        inside &= x.data < hi
    # entries exactly at the original value keep their gradient
    inside |= out == x.data
    return _make(out, (x,), lambda g: (g * inside,))


def tsum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), bw)


def tmean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape):
    x = _as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    x = _as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swapaxes(x, a, b):
    axes = list(range(_as_tensor(x).ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def pair_einsum(subscripts, a, b):
    """Two-operand einsum without diagonals or free summed indices.

    Every index of each operand must appear in the other operand or in the
    output, so each input gradient is the einsum of the output gradient with
    the other operand.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    spec = subscripts.replace(" ", "")
    inputs, out_subs = spec.split("->")
    a_subs, b_subs = inputs.split(",")
    for name, subs in (("first", a_subs), ("second", b_subs)):
        if len(set(subs)) != len(subs):
            raise DimensionError(f"pair_einsum: repeated index in {name} operand ({subs})")
    if not (set(a_subs) <= set(b_subs) | set(out_subs) and set(b_subs) <= set(a_subs) | set(out_subs)):
        raise DimensionError(f"pair_einsum: {spec} has an index summed out of a single operand")
    out = np.einsum(spec, a.data, b.data)

    def bw(g):
        ga = np.einsum(f"{out_subs},{b_subs}->{a_subs}", g, b.data)
        gb = np.einsum(f"{out_subs},{a_subs}->{b_subs}", g, a.data)
        return ga, gb

    return _make(out, (a, b), bw)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    base = list(tensors[0].shape)
    ax = axis if axis >= 0 else len(base) + axis
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != ax and other[i] != base[i] for i in range(len(base))
        ):
            raise DimensionError(
                f"concat: shapes {[tuple(t.shape) for t in tensors]} differ off axis {axis}"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return _make(out, tuple(tensors), bw)


def dropout(x, rate, rng, training):
    """Zero entries with probability ``rate``; survivors scale by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.uniform(size=x.shape) < keep) / keep
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


def softmax_lastdim(x):
    """Stable softmax over the last axis; -inf entries get exactly 0 weight."""
    x = _as_tensor(x)
    m = np.max(x.data, axis=-1, keepdims=True)
    if np.isneginf(m).any():
        raise DegenerateSliceError("softmax slice has no finite entry")
    z = np.exp(x.data - m)
    out = z / z.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return ((g - inner) * out,)

    return _make(out, (x,), bw)


def logsumexp_lastdim(x, keepdims=False):
    x = _as_tensor(x)
    m = np.max(x.data, axis=-1, keepdims=True)
    z = np.exp(x.data - m)
    s = z.sum(axis=-1, keepdims=True)
    out = m + np.log(s)
    soft = z / s
    if not keepdims:
        out = out.squeeze(-1)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, -1)
        return (g * soft,)

    return _make(out, (x,), bw)


def _window_offsets(t, w):
    idx = np.arange(t)[:, None] + (np.arange(w)[None, :] - w // 2)
    valid = (idx >= 0) & (idx < t)
    return idx, valid


def unfold_time(x, w):
    """Per-timestep windows of the time axis.

    ``x`` has shape (..., t, h); the result has shape (..., t, w, h) where
    slot (i, j) holds row i - w//2 + j, zero-filled outside [0, t). Also
    returns the (t, w) boolean validity mask (False = padding).

    Forward and backward run as one contiguous slice copy (or add) per
    window offset, so cost is w passes over the data with no scatter.
    """
    if w < 1 or w % 2 == 0:
        raise ConfigurationError(f"window size must be odd and positive, got {w}")
    x = _as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"unfold_time requires rank >= 2 input, got {x.shape}")
    t, h = x.shape[-2], x.shape[-1]
    half = w // 2
    _, valid = _window_offsets(t, w)

    # query rows i with an in-range source index i - half + j: i in [lo, hi)
    spans = [(max(0, half - j), min(t, t + half - j)) for j in range(w)]
    gathered = np.zeros(x.shape[:-2] + (t, w, h))
    for j, (lo, hi) in enumerate(spans):
        if lo < hi:
            gathered[..., lo:hi, j, :] = x.data[..., lo - half + j : hi - half + j, :]

    def bw(g):
        dx = np.zeros(x.shape)
        for j, (lo, hi) in enumerate(spans):
            if lo < hi:
                dx[..., lo - half + j : hi - half + j, :] += g[..., lo:hi, j, :]
        return (dx,)

    return _make(gathered, (x,), bw), valid


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data

    def bw(g):
        dgamma = _unbroadcast(g * xhat, gamma.shape)
        dbeta = _unbroadcast(g, beta.shape)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), bw)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


class RngState:
    """Deterministic random stream (PCG64 seeded via SeedSequence).

    Identical (seed, branch) pairs produce identical sample streams across
    runs and platforms. ``derive`` creates an independent child stream so
    subsystems never share draws.
    """

    algorithm = "pcg64"

    def __init__(self, seed, _branch=()):
        self.seed = int(seed)
        self._branch = tuple(_branch)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *self._branch]))
        )

    def derive(self, *keys):
        branch = self._branch + tuple(
            k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys
        )
        return RngState(self.seed, branch)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def get_state(self):
        return self._gen.bit_generator.state

    def set_state(self, state):
        self._gen.bit_generator.state = state


class GradCheckReport:
    """Result of a finite-difference gradient check."""

    def __init__(self, max_rel_discrepancy, worst_param, worst_index, per_param, rel_tol):
        self.max_rel_discrepancy = max_rel_discrepancy
        self.worst_param = worst_param
        self.worst_index = worst_index
        self.per_param = per_param
        self.rel_tol = rel_tol

    @property
    def passed(self):
        return self.max_rel_discrepancy < self.rel_tol

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"GradCheckReport({status}: max {self.max_rel_discrepancy:.3e} "
            f"at {self.worst_param}[{self.worst_index}], tol {self.rel_tol:.1e})"
        )


def finite_diff_check(f, params, rel_tol=1e-4, step=1e-5, max_entries_per_param=None, rng=None):
    """Compare taped gradients of ``f()`` against central finite differences.

    ``f`` must be deterministic (fix any RngState it uses) and return a
    scalar Tensor. ``params`` maps names to leaf tensors. When
    ``max_entries_per_param`` is set, a seeded subset of coordinates per
    tensor is probed instead of every entry.
    """
    params = dict(params)
    _TAPE.reset()
    for p in params.values():
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is non-finite before differentiation")
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    _TAPE.reset()

    if rng is None:
        rng = RngState(0)
    worst = 0.0
    worst_param, worst_index = None, None
    per_param = {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            n = flat.size
            if max_entries_per_param is not None and n > max_entries_per_param:
                coords = np.sort(rng.derive("fdcheck", name).choice(n, size=max_entries_per_param, replace=False))
            else:
                coords = np.arange(n)
            local_worst = 0.0
            for i in coords:
                orig = flat[i]
                h = step * max(1.0, abs(orig))
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
                fd = (fp - fm) / (2.0 * h)
                ad = analytic[name].reshape(-1)[i]
                rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-6)
                if rel > local_worst:
                    local_worst = rel
                if rel > worst:
                    worst, worst_param, worst_index = rel, name, int(i)
            per_param[name] = local_worst
    return GradCheckReport(worst, worst_param, worst_index, per_param, rel_tol)

"""Minimal feedforward network engine.

Reverse-mode autodiff over numpy arrays (a small tape of vector ops, enough
for chained MLP rollout losses), two-hidden-layer networks with Gaussian
mean / log-std output heads, reparameterized sampling, and Adam.

The same forward code runs in two modes: called with plain numpy arrays it is
a fast gradient-free path; called with Var-wrapped parameters it records a
tape that backward() differentiates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

# when set (see kink_tracking), relu/clip record how close inputs came to
# their non-differentiable points; finite-difference checks reject cases
# that graze a kink
_kink_watch: list | None = None


class kink_tracking:
    """Context manager collecting min distances to relu/clip kinks."""

    def __enter__(self):
        global _kink_watch
        self._prev = _kink_watch
        _kink_watch = []
        return _kink_watch

    def __exit__(self, *exc):
        global _kink_watch
        _kink_watch = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Var:
    """A node in the computation graph holding a numpy array value."""

    # Keep numpy from consuming Var in mixed expressions; reflected ops run instead.
    __array_ufunc__ = None
    __slots__ = ("value", "grad", "_parents", "_bwd", "requires")

    def __init__(self, value, parents=(), bwd=None, requires=None):
        self.value = np.asarray(value)
        self.grad = None
        self._parents = parents
        self._bwd = bwd
        if requires is None:
            requires = any(p.requires for p in parents)
        self.requires = requires

    @classmethod
    def param(cls, value) -> "Var":
        return cls(value, requires=True)

    def _accum(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g

    # arithmetic

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires={self.requires})"


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x, requires=False)


def _any_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def add(a, b):
    if not _any_var(a, b):
        return np.add(a, b)
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value + b.value, (a, b))

    def bwd(g):
        if a.requires:
            a._accum(_unbroadcast(g, a.value.shape))
        if b.requires:
            b._accum(_unbroadcast(g, b.value.shape))

    out._bwd = bwd
    return out


def mul(a, b):
    if not _any_var(a, b):
        return np.multiply(a, b)
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value * b.value, (a, b))

    def bwd(g):
        if a.requires:
            a._accum(_unbroadcast(g * b.value, a.value.shape))
        if b.requires:
            b._accum(_unbroadcast(g * a.value, b.value.shape))

    out._bwd = bwd
    return out


def matmul(a, b):
    if not _any_var(a, b):
        return np.matmul(a, b)
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value @ b.value, (a, b))

    def bwd(g):
        if a.requires:
            a._accum(g @ b.value.T)
        if b.requires:
            b._accum(a.value.T @ g)

    out._bwd = bwd
    return out


def relu(x):
    if _kink_watch is not None:
        v = x.value if isinstance(x, Var) else np.asarray(x)
        if v.size:
            _kink_watch.append(float(np.min(np.abs(v))))
    if not isinstance(x, Var):
        return np.maximum(x, 0.0)
    out = Var(np.maximum(x.value, 0.0), (x,))

    def bwd(g):
        if x.requires:
            x._accum(g * (x.value > 0.0))

    out._bwd = bwd
    return out


def vexp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    val = np.exp(x.value)
    out = Var(val, (x,))

    def bwd(g):
        if x.requires:
            x._accum(g * val)

    out._bwd = bwd
    return out


def clip(x, lo: float, hi: float):
    """Clamp with pass-through gradient strictly inside (lo, hi), zero outside."""
    if _kink_watch is not None:
        v = x.value if isinstance(x, Var) else np.asarray(x)
        if v.size:
            _kink_watch.append(float(np.min(np.minimum(np.abs(v - lo), np.abs(v - hi)))))
    if not isinstance(x, Var):
        return np.clip(x, lo, hi)
    out = Var(np.clip(x.value, lo, hi), (x,))

    def bwd(g):
        if x.requires:
            x._accum(g * ((x.value > lo) & (x.value < hi)))

    out._bwd = bwd
    return out


def concat(parts: list, axis: int = 1):
    if not _any_var(*parts):
        return np.concatenate(parts, axis=axis)
    parts = [_as_var(p) for p in parts]
    widths = [p.value.shape[axis] for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts))

    def bwd(g):
        start = 0
        for p, w in zip(parts, widths):
            if p.requires:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, start + w)
                p._accum(g[tuple(idx)])
            start += w

    out._bwd = bwd
    return out


def gather_blocks(x, idx: np.ndarray, num_blocks: int):
    """Select per-row block idx[i] from a (B, num_blocks * w) array -> (B, w)."""
    idx = np.asarray(idx, dtype=np.int64)
    if not isinstance(x, Var):
        b = x.shape[0]
        w = x.shape[1] // num_blocks
        return x.reshape(b, num_blocks, w)[np.arange(b), idx]
    b = x.value.shape[0]
    w = x.value.shape[1] // num_blocks
    val = x.value.reshape(b, num_blocks, w)[np.arange(b), idx]
    out = Var(val, (x,))

    def bwd(g):
        if x.requires:
            full = np.zeros((b, num_blocks, w), dtype=g.dtype)
            full[np.arange(b), idx] = g
            x._accum(full.reshape(b, num_blocks * w))

    out._bwd = bwd
    return out


def vsum(x):
    """Sum all entries to a scalar."""
    if not isinstance(x, Var):
        return np.sum(x)
    shape = x.value.shape
    out = Var(np.sum(x.value), (x,))

    def bwd(g):
        if x.requires:
            x._accum(np.broadcast_to(np.asarray(g), shape).astype(x.value.dtype, copy=False))

    out._bwd = bwd
    return out


def sum_axis(x, axis: int):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    out = Var(np.sum(x.value, axis=axis), (x,))

    def bwd(g):
        if x.requires:
            x._accum(np.repeat(np.expand_dims(g, axis), x.value.shape[axis], axis=axis))

    out._bwd = bwd
    return out


def backward(root: Var) -> None:
    """Accumulate d(root)/d(leaf) into .grad of every parameter reachable from root."""
    if root.value.shape != ():
        raise ValueError("backward expects a scalar root")
    if not np.isfinite(root.value):
        raise FloatingPointError("non-finite loss")
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    root.grad = np.asarray(1.0, dtype=root.value.dtype)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)


def gaussian_sample(mean, log_std, noise):
    """Reparameterized draw mean + exp(log_std) * noise; differentiable in mean/log_std."""
    return add(mean, mul(vexp(log_std), noise))


# MLP: input -> 64 -> 64 -> (mean head, log-std head)

FIELD_ORDER = ("w1", "b1", "w2", "b2", "w_mean", "b_mean", "w_std", "b_std")


@dataclass(eq=False)
class MlpParams:
    w1: object
    b1: object
    w2: object
    b2: object
    w_mean: object
    b_mean: object
    w_std: object
    b_std: object

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int, hidden: int = 64, dtype=np.float32):
        def layer(fan_in, fan_out):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)
            b = np.zeros(fan_out, dtype=dtype)
            return w, b

        w1, b1 = layer(in_dim, hidden)
        w2, b2 = layer(hidden, hidden)
        wm, bm = layer(hidden, out_dim)
        ws, bs = layer(hidden, out_dim)
        return cls(w1, b1, w2, b2, wm, bm, ws, bs)

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in FIELD_ORDER]

    def wrap(self) -> "MlpParams":
        """Var-wrapped copy whose leaves collect gradients."""
        return MlpParams(*[Var.param(a) for a in self.arrays()])

    def grads(self) -> list[np.ndarray]:
        """Gradients from a wrapped copy after backward(); zeros where untouched."""
        out = []
        for f in FIELD_ORDER:
            v = getattr(self, f)
            out.append(v.grad if v.grad is not None else np.zeros_like(v.value))
        return out

    @property
    def in_dim(self) -> int:
        w = self.w1.value if isinstance(self.w1, Var) else self.w1
        return w.shape[0]

    @property
    def out_dim(self) -> int:
        w = self.w_mean.value if isinstance(self.w_mean, Var) else self.w_mean
        return w.shape[1]


def forward(p: MlpParams, x, want_std: bool = True):
    """(mean, log_std) heads; log_std clamped to [LOG_STD_MIN, LOG_STD_MAX].

    x may be a numpy batch (fast path) or Var (taped); p likewise.
    """
    h = relu(add(matmul(x, p.w1), p.b1))
    h = relu(add(matmul(h, p.w2), p.b2))
    mean = add(matmul(h, p.w_mean), p.b_mean)
    if not want_std:
        return mean, None
    log_std = clip(add(matmul(h, p.w_std), p.b_std), LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, p: MlpParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in p.arrays()],
            v=[np.zeros_like(a) for a in p.arrays()],
        )


def adam_step(
    p: MlpParams,
    grads: list[np.ndarray],
    st: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; pure, returns fresh params and state."""
    arrays = p.arrays()
    t = st.t + 1
    new_params, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, st.m, st.v):
        g = np.asarray(g, dtype=a.dtype)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in adam_step")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append(a - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return MlpParams(*new_params), AdamState(new_m, new_v, t)

"""Parameterized-action data model.

A parameterized action is a discrete index k paired with a continuous
parameter vector z whose width depends on k. Continuous parameters are
normalized to [-1, 1] everywhere; environments rescale internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EncodingError(ValueError):
    """Raised when an action cannot be encoded against a spec."""


@dataclass(frozen=True)
class ParamActionSpec:
    """Shape of a parameterized action space.

    num_discrete: number of discrete actions K (>= 1).
    param_dims: per-action continuous parameter width, length K, entries >= 0.
    """

    num_discrete: int
    param_dims: tuple[int, ...]

    def __post_init__(self):
        if self.num_discrete < 1:
            raise ValueError("num_discrete must be >= 1")
        if len(self.param_dims) != self.num_discrete:
            raise ValueError("param_dims must have one entry per discrete action")
        if any(d < 0 for d in self.param_dims):
            raise ValueError("param_dims entries must be >= 0")
        object.__setattr__(self, "param_dims", tuple(int(d) for d in self.param_dims))

    @property
    def total_param_width(self) -> int:
        return sum(self.param_dims)

    @property
    def max_param_dim(self) -> int:
        return max(self.param_dims) if self.param_dims else 0

    def slot_offset(self, k: int) -> int:
        """Start column of action k's slot in the padded parameter layout."""
        return sum(self.param_dims[:k])

    def dims_array(self) -> np.ndarray:
        return np.asarray(self.param_dims, dtype=np.int64)

    def offsets_array(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.param_dims)[:-1]]).astype(np.int64)

    def key(self) -> str:
        """Canonical string identity, used for checkpoint compatibility checks."""
        return f"K={self.num_discrete};dims={','.join(map(str, self.param_dims))}"


@dataclass(frozen=True, eq=False)
class ParamAction:
    """One parameterized action: discrete index k plus its parameter vector z."""

    k: int
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.float64).reshape(-1))

    @classmethod
    def clamped(cls, k: int, z) -> "ParamAction":
        """Construct with z clamped into [-1, 1]; the sanctioned sampling path."""
        z = np.clip(np.asarray(z, dtype=np.float64).reshape(-1), -1.0, 1.0)
        return cls(int(k), z)


@dataclass(frozen=True, eq=False)
class Transition:
    """One environment step: (s, action, r, s_next, c). c = 1 means the episode continues."""

    s: np.ndarray
    action: ParamAction
    r: float
    s_next: np.ndarray
    c: int


@dataclass(eq=False)
class TrajectorySegment:
    """H+1 consecutive transitions from one episode, starting at time start_index.

    loss_mask, when present, zeroes loss terms for padded steps appended to
    episodes shorter than the segment window; real steps carry mask 1.
    """

    transitions: tuple[Transition, ...]
    start_index: int
    loss_mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.transitions = tuple(self.transitions)
        for a, b in zip(self.transitions, self.transitions[1:]):
            if not np.array_equal(a.s_next, b.s):
                raise ValueError("segment transitions are not chained")
        for i, t in enumerate(self.transitions[:-1]):
            if t.c == 0:
                # allowed only when everything after i is masked padding
                padded = self.loss_mask is not None and not np.any(self.loss_mask[i + 1 :])
                if not padded:
                    raise ValueError("only the final transition of a segment may terminate")

    def __len__(self) -> int:
        return len(self.transitions)


def validate_action(spec: ParamActionSpec, a: ParamAction) -> bool:
    """True iff a's index, parameter width, and [-1, 1] bounds all fit spec."""
    if not 0 <= a.k < spec.num_discrete:
        return False
    if a.z.shape != (spec.param_dims[a.k],):
        return False
    return bool(np.all(a.z >= -1.0) and np.all(a.z <= 1.0))


def discrete_distance(k1: int, k2: int) -> int:
    """Kronecker-delta metric on discrete actions: 0 if equal, else 1."""
    return 0 if k1 == k2 else 1


def encode_action(spec: ParamActionSpec, a: ParamAction) -> np.ndarray:
    """Fixed-width encoding: one_hot(k) followed by z placed in action k's slot.

    Width is num_discrete + total_param_width regardless of k, so one network
    signature serves every action.
    """
    if not validate_action(spec, a):
        raise EncodingError(f"invalid action (k={a.k}, |z|={a.z.shape[0]}) for spec {spec.key()}")
    out = np.zeros(spec.num_discrete + spec.total_param_width, dtype=np.float64)
    out[a.k] = 1.0
    off = spec.num_discrete + spec.slot_offset(a.k)
    out[off : off + spec.param_dims[a.k]] = a.z
    return out


def one_hot_batch(spec: ParamActionSpec, ks: np.ndarray, dtype=np.float64) -> np.ndarray:
    """(B, K) one-hot rows for a batch of discrete indices."""
    ks = np.asarray(ks, dtype=np.int64)
    out = np.zeros((ks.shape[0], spec.num_discrete), dtype=dtype)
    out[np.arange(ks.shape[0]), ks] = 1.0
    return out


def scatter_params_batch(
    spec: ParamActionSpec, ks: np.ndarray, zs: np.ndarray, dtype=np.float64
) -> np.ndarray:
    """(B, total_param_width) padded layout with zs[i, :dims[k_i]] in slot k_i.

    zs is (B, max_param_dim); columns at or beyond dims[k_i] are ignored.
    """
    ks = np.asarray(ks, dtype=np.int64)
    b = ks.shape[0]
    out = np.zeros((b, spec.total_param_width), dtype=dtype)
    maxd = spec.max_param_dim
    if maxd == 0:
        return out
    dims = spec.dims_array()[ks]
    offs = spec.offsets_array()[ks]
    cols = offs[:, None] + np.arange(maxd)[None, :]
    mask = np.arange(maxd)[None, :] < dims[:, None]
    rows = np.broadcast_to(np.arange(b)[:, None], (b, maxd))
    out[rows[mask], cols[mask]] = zs[:, :maxd][mask]
    return out


def encode_batch(spec: ParamActionSpec, ks: np.ndarray, zs: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Vectorized encode_action for (ks, zs) batches; zs padded to max_param_dim."""
    return np.concatenate(
        [one_hot_batch(spec, ks, dtype), scatter_params_batch(spec, ks, zs, dtype)], axis=1
    )

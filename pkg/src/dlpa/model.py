"""Learned PAMDP world model.

Three stochastic predictors (next state, episode continuation, reward) under
one of three inference architectures:

  parallel    one network eats [s | one_hot(k) | padded z] directly.
  masking     one network eats [s | padded z] and emits K stacked output
              blocks; block k is selected afterwards.
  sequential  stage one maps [s | one_hot(k)] to a latent embedding, stage
              two maps [latent | z padded to the max parameter width] to the
              Gaussian head.

Rewards use two separate networks routed by the continuation flag (ground
truth during training, predicted during imagination); unify_reward collapses
them into one network for the ablation. Training minimizes a discounted
multi-step rollout loss that feeds each predicted state back as the next
input, so gradients flow through the whole imagined chain.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .actions import (
    ParamAction,
    ParamActionSpec,
    TrajectorySegment,
    one_hot_batch,
    scatter_params_batch,
)
from .rng import substream

ARCHITECTURES = ("parallel", "masking", "sequential")

CHECKPOINT_VERSION = 1


def _group_nets(arch: str, prefix: str) -> list[str]:
    if arch == "sequential":
        return [prefix + "_s1", prefix + "_s2"]
    return [prefix]


@dataclass(eq=False)
class DynamicsModel:
    spec: ParamActionSpec
    state_dim: int
    arch: str = "sequential"
    unify_reward: bool = False
    latent_dim: int = 64
    hidden: int = 64
    dtype: type = np.float32
    nets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")

    @property
    def reward_groups(self) -> list[str]:
        return ["reward"] if self.unify_reward else ["reward_alive", "reward_terminal"]

    def net_names(self) -> list[str]:
        names = []
        for group in ["transition"] + self.reward_groups:
            names.extend(_group_nets(self.arch, group))
        names.append("continue")
        return names

    def spec_hash(self) -> str:
        ident = (
            f"{self.spec.key()};ds={self.state_dim};arch={self.arch};"
            f"unify={int(self.unify_reward)};latent={self.latent_dim};hidden={self.hidden}"
        )
        return hashlib.sha256(ident.encode()).hexdigest()[:16]

    # ---- construction

    @classmethod
    def create(cls, spec: ParamActionSpec, state_dim: int, seed: int, arch: str = "sequential",
               unify_reward: bool = False, latent_dim: int = 64, hidden: int = 64,
               dtype=np.float32) -> "DynamicsModel":
        m = cls(spec, state_dim, arch, unify_reward, latent_dim, hidden, dtype)
        k, w_total, maxd = spec.num_discrete, spec.total_param_width, spec.max_param_dim
        shapes: dict[str, tuple[int, int]] = {}
        for group in ["transition"] + m.reward_groups:
            out = state_dim if group == "transition" else 1
            if arch == "parallel":
                shapes[group] = (state_dim + k + w_total, out)
            elif arch == "masking":
                shapes[group] = (state_dim + w_total, out * k)
            else:
                shapes[group + "_s1"] = (state_dim + k, latent_dim)
                shapes[group + "_s2"] = (latent_dim + maxd, out)
        shapes["continue"] = (state_dim, 1)
        for name in m.net_names():
            in_dim, out_dim = shapes[name]
            m.nets[name] = nn.MlpParams.init(
                substream(seed, "model_init", name), in_dim, out_dim, hidden, dtype
            )
        return m

    # ---- architecture dispatch

    def _params(self, name: str, params: dict | None) -> nn.MlpParams:
        return (params or self.nets)[name]

    def _dispatch(self, group: str, s, ks: np.ndarray, zs: np.ndarray,
                  params: dict | None = None, want_std: bool = True):
        """(mean, log_std) of predictor `group` for a batch of (s, k, z) inputs.

        s may be a numpy array (fast path) or a Var (taped); ks and zs are
        plain arrays since actions are never differentiated.
        """
        ks = np.asarray(ks, dtype=np.int64)
        if self.arch == "parallel":
            onehot = one_hot_batch(self.spec, ks, self.dtype)
            padded = scatter_params_batch(self.spec, ks, zs, self.dtype)
            x = nn.concat([s, onehot, padded], axis=1)
            return nn.forward(self._params(group, params), x, want_std)
        if self.arch == "masking":
            padded = scatter_params_batch(self.spec, ks, zs, self.dtype)
            x = nn.concat([s, padded], axis=1)
            mean, log_std = nn.forward(self._params(group, params), x, want_std)
            k = self.spec.num_discrete
            mean = nn.gather_blocks(mean, ks, k)
            if log_std is not None:
                log_std = nn.gather_blocks(log_std, ks, k)
            return mean, log_std
        # sequential
        onehot = one_hot_batch(self.spec, ks, self.dtype)
        x1 = nn.concat([s, onehot], axis=1)
        latent, _ = nn.forward(self._params(group + "_s1", params), x1, want_std=False)
        maxd = self.spec.max_param_dim
        if maxd > 0:
            z = np.ascontiguousarray(zs[:, :maxd], dtype=self.dtype)
            x2 = nn.concat([latent, z], axis=1)
        else:
            x2 = latent
        return nn.forward(self._params(group + "_s2", params), x2, want_std)

    def _continue_mean(self, s_next, params: dict | None = None):
        mean, _ = nn.forward(self._params("continue", params), s_next, want_std=False)
        return mean

    def _reward(self, s, ks, zs, alive_mask, params: dict | None = None, noise=None):
        """Reward routed by alive_mask (1 -> alive net, 0 -> terminal net)."""
        want_std = noise is not None
        if self.unify_reward:
            mean, log_std = self._dispatch("reward", s, ks, zs, params, want_std)
            return mean if noise is None else nn.gaussian_sample(mean, log_std, noise)
        mean_a, std_a = self._dispatch("reward_alive", s, ks, zs, params, want_std)
        mean_t, std_t = self._dispatch("reward_terminal", s, ks, zs, params, want_std)
        if noise is None:
            r_a, r_t = mean_a, mean_t
        else:
            r_a = nn.gaussian_sample(mean_a, std_a, noise)
            r_t = nn.gaussian_sample(mean_t, std_t, noise)
        w = np.asarray(alive_mask, dtype=self.dtype).reshape(-1, 1)
        return nn.add(nn.mul(r_a, w), nn.mul(r_t, 1.0 - w))

    # ---- single-sample predictor API

    def _as_batch(self, a: ParamAction) -> tuple[np.ndarray, np.ndarray]:
        maxd = self.spec.max_param_dim
        z = np.zeros((1, maxd), dtype=self.dtype)
        z[0, : a.z.shape[0]] = a.z
        return np.asarray([a.k]), z

    def predict_transition(self, s: np.ndarray, a: ParamAction, noise: np.ndarray) -> np.ndarray:
        ks, zs = self._as_batch(a)
        s = np.asarray(s, dtype=self.dtype).reshape(1, -1)
        noise = np.asarray(noise, dtype=self.dtype).reshape(1, -1)
        if noise.shape[1] != self.state_dim:
            raise ValueError("noise width must equal state_dim")
        mean, log_std = self._dispatch("transition", s, ks, zs)
        return np.asarray(nn.gaussian_sample(mean, log_std, noise))[0]

    def predict_continue(self, s_next: np.ndarray, noise: float | None = None) -> tuple[int, float]:
        """(flag, raw mean). The flag binarizes the mean at 0.5; ties go to 0."""
        s_next = np.asarray(s_next, dtype=self.dtype).reshape(1, -1)
        mean = float(np.asarray(self._continue_mean(s_next))[0, 0])
        return (1 if mean > 0.5 else 0), mean

    def predict_reward(self, s: np.ndarray, a: ParamAction, flag: int, noise: float = 0.0) -> float:
        ks, zs = self._as_batch(a)
        s = np.asarray(s, dtype=self.dtype).reshape(1, -1)
        n = np.asarray([[noise]], dtype=self.dtype)
        r = self._reward(s, ks, zs, np.asarray([flag]), noise=n)
        return float(np.asarray(r)[0, 0])

    # ---- batched imagination step (numpy fast path)

    def step_batch(self, s: np.ndarray, ks: np.ndarray, zs: np.ndarray,
                   trans_noise: np.ndarray | None = None,
                   reward_noise: np.ndarray | None = None):
        """One imagined step for a batch: (s_next, reward, flag, continue_mean).

        Reward is predicted from the input state and routed by the predicted
        continuation flag of this step.
        """
        want_std = trans_noise is not None
        mean, log_std = self._dispatch("transition", s, ks, zs, want_std=want_std)
        s2 = mean if trans_noise is None else nn.gaussian_sample(mean, log_std, trans_noise)
        s2 = np.asarray(s2)
        c_mean = np.asarray(self._continue_mean(s2))[:, 0]
        flag = (c_mean > 0.5).astype(np.float64)
        noise = None if reward_noise is None else np.asarray(reward_noise, self.dtype).reshape(-1, 1)
        r = np.asarray(self._reward(s, ks, zs, flag, noise=noise))[:, 0]
        return s2, r, flag, c_mean


class OracleModel:
    """True-environment dynamics behind the model interface, for oracle planning."""

    def __init__(self, env):
        self.spec = env.spec.action_spec
        self.state_dim = env.spec.state_dim
        self.dtype = np.float64
        self._dynamics = env.dynamics

    def step_batch(self, s, ks, zs, trans_noise=None, reward_noise=None):
        s2, r, c = self._dynamics(np.asarray(s, dtype=np.float64), ks, zs)
        return s2, r, c.astype(np.float64), c.astype(np.float64)


def reward_mask(flags: np.ndarray, literal_eq4: bool = False) -> np.ndarray:
    """Per-step reward mask along the last axis of a (..., T) flag array.

    Default: running product of *past* flags, so the terminating step's own
    reward still counts and everything after it is zeroed. literal_eq4
    instead multiplies each reward by its own step's flag, exactly as the
    return definition is written.
    """
    flags = np.asarray(flags, dtype=np.float64)
    if literal_eq4:
        return flags
    shifted = np.concatenate([np.ones_like(flags[..., :1]), flags[..., :-1]], axis=-1)
    return np.cumprod(shifted, axis=-1)


@dataclass(eq=False)
class ImaginedTrajectory:
    states: np.ndarray          # (T, state_dim) predicted next states
    rewards: np.ndarray         # (T,)
    flags: np.ndarray           # (T,) binarized continuation flags
    continue_means: np.ndarray  # (T,)
    mask: np.ndarray            # (T,) reward mask


def imagine_rollout(m, s0: np.ndarray, actions, noise_stream=None,
                    literal_eq4: bool = False) -> ImaginedTrajectory:
    """Open-loop rollout feeding each predicted state back as the next input.

    actions is a sequence of ParamAction; noise_stream is a Generator driving
    reparameterized sampling, or None for a deterministic mean rollout. Works
    for DynamicsModel and OracleModel alike.
    """
    maxd = m.spec.max_param_dim
    s = np.asarray(s0, dtype=m.dtype).reshape(1, -1)
    states, rewards, flags, c_means = [], [], [], []
    for t, a in enumerate(actions):
        ks = np.asarray([a.k])
        zs = np.zeros((1, maxd), dtype=m.dtype)
        zs[0, : a.z.shape[0]] = a.z
        if noise_stream is not None and isinstance(m, DynamicsModel):
            tn = noise_stream.standard_normal((1, m.state_dim)).astype(m.dtype)
            rn = noise_stream.standard_normal(1).astype(m.dtype)
        else:
            tn = rn = None
        s2, r, flag, c_mean = m.step_batch(s, ks, zs, tn, rn)
        if not (np.all(np.isfinite(s2)) and np.all(np.isfinite(r))):
            raise FloatingPointError(f"non-finite prediction at imagination step {t}")
        states.append(s2[0])
        rewards.append(r[0])
        flags.append(flag[0])
        c_means.append(c_mean[0])
        s = s2
    flags_arr = np.asarray(flags)
    return ImaginedTrajectory(
        states=np.asarray(states),
        rewards=np.asarray(rewards),
        flags=flags_arr,
        continue_means=np.asarray(c_means),
        mask=reward_mask(flags_arr, literal_eq4),
    )


# ---- training loss

def segments_to_arrays(spec: ParamActionSpec, segments: list[TrajectorySegment], dtype):
    """Stack a batch of segments into dense arrays for the rollout loss."""
    b = len(segments)
    t_len = len(segments[0])
    ds = segments[0].transitions[0].s.shape[0]
    maxd = spec.max_param_dim
    s0 = np.zeros((b, ds), dtype)
    ks = np.zeros((b, t_len), np.int64)
    zs = np.zeros((b, t_len, maxd), dtype)
    s_next = np.zeros((b, t_len, ds), dtype)
    r = np.zeros((b, t_len), dtype)
    c = np.zeros((b, t_len), dtype)
    mask = np.ones((b, t_len), dtype)
    for i, seg in enumerate(segments):
        if len(seg) != t_len:
            raise ValueError("segments in a batch must share one length")
        s0[i] = seg.transitions[0].s
        if seg.loss_mask is not None:
            mask[i] = seg.loss_mask
        for t, tr in enumerate(seg.transitions):
            ks[i, t] = tr.action.k
            zs[i, t, : tr.action.z.shape[0]] = tr.action.z
            s_next[i, t] = tr.s_next
            r[i, t] = tr.r
            c[i, t] = tr.c
    return s0, ks, zs, s_next, r, c, mask


def _loss_graph(m: DynamicsModel, arrays, beta: float, lams, noise=None, params=None):
    """Batch-mean multi-step rollout loss; taped when params are Var-wrapped.

    Rewards are routed by the ground-truth continuation flag here (teacher
    forcing for the router only); imagination routes by the prediction.
    Returns (total, (state_part, reward_part, continue_part)), each part
    already weighted by its loss coefficient and the per-step decay.
    """
    s0, ks, zs, s_next, r, c, mask = arrays
    lam1, lam2, lam3 = lams
    b, t_len = ks.shape
    s_hat = s0
    total_t = total_r = total_c = 0.0
    inv_b = 1.0 / b
    for t in range(t_len):
        w = ((beta**t) * mask[:, t] * inv_b).astype(m.dtype)
        w_col = w.reshape(-1, 1)
        tn = None if noise is None else noise["transition"][:, t]
        rn = None if noise is None else noise["reward"][:, t].reshape(-1, 1)

        r_hat = m._reward(s_hat, ks[:, t], zs[:, t], c[:, t], params, noise=rn)
        e_r = nn.add(r_hat, -r[:, t].reshape(-1, 1))
        total_r = nn.add(total_r, nn.vsum(nn.mul(nn.mul(e_r, e_r), w_col)))

        mean_T, std_T = m._dispatch("transition", s_hat, ks[:, t], zs[:, t], params,
                                    want_std=tn is not None)
        s_hat = mean_T if tn is None else nn.gaussian_sample(mean_T, std_T, tn)
        e_s = nn.add(s_hat, -s_next[:, t])
        total_t = nn.add(total_t, nn.vsum(nn.mul(nn.sum_axis(nn.mul(e_s, e_s), 1), w)))

        c_mean = m._continue_mean(s_hat, params)
        e_c = nn.add(c_mean, -c[:, t].reshape(-1, 1))
        total_c = nn.add(total_c, nn.vsum(nn.mul(nn.mul(e_c, e_c), w_col)))

    total_t = nn.mul(total_t, lam1)
    total_r = nn.mul(total_r, lam2)
    total_c = nn.mul(total_c, lam3)
    total = nn.add(nn.add(total_t, total_r), total_c)
    return total, (total_t, total_r, total_c)


def h_step_loss(m: DynamicsModel, segments, beta: float, lam1: float, lam2: float,
                lam3: float, noise_rng: np.random.Generator | None = None) -> float:
    """Rollout loss for one segment or a list of segments (no gradients)."""
    if isinstance(segments, TrajectorySegment):
        segments = [segments]
    arrays = segments_to_arrays(m.spec, segments, m.dtype)
    noise = _draw_noise(m, arrays, noise_rng) if noise_rng is not None else None
    total, _ = _loss_graph(m, arrays, beta, (lam1, lam2, lam3), noise=noise)
    total = float(np.asarray(total))
    if not np.isfinite(total):
        raise FloatingPointError("non-finite rollout loss")
    return total


def _draw_noise(m: DynamicsModel, arrays, rng: np.random.Generator):
    b, t_len = arrays[1].shape
    return {
        "transition": rng.standard_normal((b, t_len, m.state_dim)).astype(m.dtype),
        "reward": rng.standard_normal((b, t_len)).astype(m.dtype),
    }


def init_optimizer(m: DynamicsModel) -> dict[str, nn.AdamState]:
    return {name: nn.AdamState.for_params(m.nets[name]) for name in m.net_names()}


def train_batch(m: DynamicsModel, segments: list[TrajectorySegment],
                opt: dict[str, nn.AdamState], lr: float, beta: float,
                lams: tuple[float, float, float],
                noise_rng: np.random.Generator | None = None) -> dict[str, float]:
    """One gradient step on a batch of segments; updates m.nets and opt in place.

    The loss is scaled by 1/max(H, 1) before the update, mirroring the outer
    training loop's step rule.
    """
    if not segments:
        raise ValueError("empty batch")
    arrays = segments_to_arrays(m.spec, segments, m.dtype)
    h = len(segments[0]) - 1
    noise = _draw_noise(m, arrays, noise_rng) if noise_rng is not None else None
    wrapped = {name: m.nets[name].wrap() for name in m.net_names()}
    total, parts = _loss_graph(m, arrays, beta, lams, noise=noise, params=wrapped)
    scaled = nn.mul(total, 1.0 / max(h, 1))
    nn.backward(scaled)
    for name in m.net_names():
        grads = wrapped[name].grads()
        m.nets[name], opt[name] = nn.adam_step(m.nets[name], grads, opt[name], lr)
    return {
        "loss_total": float(total.value),
        "loss_T": float(np.asarray(parts[0].value if isinstance(parts[0], nn.Var) else parts[0])),
        "loss_R": float(np.asarray(parts[1].value if isinstance(parts[1], nn.Var) else parts[1])),
        "loss_c": float(np.asarray(parts[2].value if isinstance(parts[2], nn.Var) else parts[2])),
    }


# ---- checkpoints

def save_checkpoint(m: DynamicsModel, path: str) -> None:
    """Write all weights plus identity metadata; round-trips bit-exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "arch": m.arch,
        "state_dim": m.state_dim,
        "latent_dim": m.latent_dim,
        "hidden": m.hidden,
        "unify_reward": m.unify_reward,
        "num_discrete": m.spec.num_discrete,
        "param_dims": list(m.spec.param_dims),
        "dtype": np.dtype(m.dtype).name,
        "spec_hash": m.spec_hash(),
    }
    arrays = {}
    for name in m.net_names():
        for f, a in zip(nn.FIELD_ORDER, m.nets[name].arrays()):
            arrays[f"{name}:{f}"] = a
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str) -> DynamicsModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        spec = ParamActionSpec(meta["num_discrete"], tuple(meta["param_dims"]))
        m = DynamicsModel(
            spec,
            meta["state_dim"],
            meta["arch"],
            meta["unify_reward"],
            meta["latent_dim"],
            meta["hidden"],
            np.dtype(meta["dtype"]).type,
        )
        for name in m.net_names():
            m.nets[name] = nn.MlpParams(
                *[data[f"{name}:{f}"] for f in nn.FIELD_ORDER]
            )
    if m.spec_hash() != meta["spec_hash"]:
        raise ValueError("checkpoint spec hash mismatch")
    return m

"""Shared test fixtures and the finite-difference gradient-check harness."""

from __future__ import annotations

import os

# the workload is thousands of tiny matmuls; threaded BLAS only adds sync
# overhead and loosens reduction-order determinism (must precede numpy import)
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from dlpa import nn
from dlpa.actions import ParamAction, ParamActionSpec, Transition, TrajectorySegment
from dlpa.model import DynamicsModel, _loss_graph, segments_to_arrays
from dlpa.rng import substream


def zero_mlp(in_dim: int, out_dim: int, hidden: int = 4, dtype=np.float64) -> nn.MlpParams:
    return nn.MlpParams(
        np.zeros((in_dim, hidden), dtype), np.zeros(hidden, dtype),
        np.zeros((hidden, hidden), dtype), np.zeros(hidden, dtype),
        np.zeros((hidden, out_dim), dtype), np.zeros(out_dim, dtype),
        np.zeros((hidden, out_dim), dtype), np.zeros(out_dim, dtype),
    )


def zero_weight_model(spec: ParamActionSpec, state_dim: int, arch: str = "parallel",
                      hidden: int = 4, latent: int = 3) -> DynamicsModel:
    """Model whose every prediction is exactly zero (all weights zero)."""
    m = DynamicsModel.create(spec, state_dim, seed=0, arch=arch, hidden=hidden,
                             latent_dim=latent, dtype=np.float64)
    for name, p in m.nets.items():
        m.nets[name] = nn.MlpParams(*[np.zeros_like(a) for a in p.arrays()])
    return m


def random_tiny_model(seed: int, arch: str, state_dim: int = 2,
                      spec: ParamActionSpec | None = None) -> DynamicsModel:
    spec = spec or ParamActionSpec(2, (1, 2))
    m = DynamicsModel.create(spec, state_dim, seed=seed, arch=arch, hidden=4,
                             latent_dim=3, dtype=np.float64)
    # generic biases keep pre-activations away from exact relu zeros
    jitter = substream(seed, "bias_jitter")
    for p in m.nets.values():
        for b in (p.b1, p.b2, p.b_mean, p.b_std):
            b[:] = jitter.uniform(-0.3, 0.3, size=b.shape)
    return m


def random_segment(spec: ParamActionSpec, state_dim: int, h: int,
                   rng: np.random.Generator) -> TrajectorySegment:
    states = rng.uniform(-1.0, 1.0, size=(h + 2, state_dim))
    transitions = []
    for t in range(h + 1):
        k = int(rng.integers(spec.num_discrete))
        z = rng.uniform(-1.0, 1.0, size=spec.param_dims[k])
        c = 1 if t < h else int(rng.integers(2))
        transitions.append(Transition(states[t], ParamAction(k, z),
                                      float(rng.uniform(-1, 1)), states[t + 1], c))
    return TrajectorySegment(tuple(transitions), 0)


def gradcheck_max_rel_err(seed: int, h: int, arch: str, fd_step: float = 1e-5,
                          max_resamples: int = 50) -> float:
    """Analytic vs central-difference gradients of the chained rollout loss.

    Cases whose forward pass comes within 1e-3 of a relu/clip kink are
    resampled (the loss is not differentiable there). Relative error uses a
    small absolute floor in the denominator so near-zero gradient pairs
    compare absolutely.
    """
    beta, lams = 0.9, (1.0, 0.7, 0.5)
    for attempt in range(max_resamples):
        case_seed = seed + 10_000 * attempt
        rng = substream(case_seed, "gradcheck")
        m = random_tiny_model(case_seed, arch)
        segs = [random_segment(m.spec, m.state_dim, h, rng) for _ in range(2)]
        arrays = segments_to_arrays(m.spec, segs, np.float64)
        noise = {
            "transition": rng.standard_normal((2, h + 1, m.state_dim)),
            "reward": rng.standard_normal((2, h + 1)),
        }

        def loss_value() -> float:
            total, _ = _loss_graph(m, arrays, beta, lams, noise=noise)
            return float(np.asarray(total))

        with nn.kink_tracking() as margins:
            loss_value()
        if margins and min(margins) < 1e-3:
            continue

        wrapped = {name: m.nets[name].wrap() for name in m.net_names()}
        total, _ = _loss_graph(m, arrays, beta, lams, noise=noise, params=wrapped)
        nn.backward(total)

        worst = 0.0
        for name in m.net_names():
            analytic = wrapped[name].grads()
            base = m.nets[name]
            for f_idx, arr in enumerate(base.arrays()):
                flat = arr.reshape(-1)
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + fd_step
                    up = loss_value()
                    flat[j] = orig - fd_step
                    down = loss_value()
                    flat[j] = orig
                    fd = (up - down) / (2.0 * fd_step)
                    a = analytic[f_idx].reshape(-1)[j]
                    rel = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
                    worst = max(worst, rel)
        return worst
    pytest.fail("could not find a kink-free gradcheck case")


def train_linear_model(arch: str = "sequential", steps: int = 700, batch: int = 64,
                       h: int = 3, seed: int = 21):
    """Fit a model to the linear synthetic PAMDP from random-action episodes."""
    from dlpa.envs import make_env
    from dlpa.model import DynamicsModel, init_optimizer, train_batch

    env = make_env("linear")
    spec = env.spec.action_spec
    rng = substream(seed, "lin_data", arch)
    episodes = []
    for ep in range(60):
        state = env.reset(ep)
        transitions = []
        obs = state.observation
        for _ in range(12):
            k = int(rng.integers(spec.num_discrete))
            z = rng.uniform(-1, 1, spec.param_dims[k])
            a = ParamAction(k, z)
            state, r, c = env.step(a)
            transitions.append(Transition(obs, a, r, state.observation, c))
            obs = state.observation
        env._done = True
        episodes.append(transitions)

    m = DynamicsModel.create(spec, env.spec.state_dim, seed=seed + 10, arch=arch,
                             hidden=32, latent_dim=16)
    opt = init_optimizer(m)
    noise_rng = substream(seed, "lin_noise")
    losses = []
    for _ in range(steps):
        segs = []
        for _ in range(batch):
            ep = episodes[int(rng.integers(len(episodes)))]
            start = int(rng.integers(len(ep) - h))
            segs.append(TrajectorySegment(tuple(ep[start : start + h + 1]), start))
        stats = train_batch(m, segs, opt, lr=3e-3, beta=0.99, lams=(1, 0.5, 1),
                            noise_rng=noise_rng)
        losses.append(stats["loss_total"])
    return env, m, losses


@pytest.fixture
def rng():
    return substream(1234, "test_fixture")

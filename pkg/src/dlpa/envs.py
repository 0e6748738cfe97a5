"""Benchmark environments with deterministic dynamics.

Three benchmark families (platform, catch_point, hard_move) plus a linear
synthetic PAMDP used by tests and the bound diagnostics. Each environment
exposes the stateful reset/step interface and a pure, batch-vectorized
`dynamics` function that powers oracle planning and the theory suite.

All continuous action parameters arrive in [-1, 1]; environments rescale
internally. Dynamics are noise-free: randomness enters only through reset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import ParamAction, ParamActionSpec, validate_action
from .rng import substream


class UnknownEnvError(ValueError):
    pass


class EpisodeDone(RuntimeError):
    """step() called on a finished episode."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_spec: ParamActionSpec
    max_steps: int
    n_actuators: int = 0


@dataclass(eq=False)
class EnvState:
    observation: np.ndarray
    step_count: int
    done: bool


class Env:
    """Single-owner mutable episode state machine around a pure dynamics function."""

    spec: EnvSpec

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self._obs: np.ndarray | None = None
        self._steps = 0
        self._done = True
        self.episode_success = False

    # subclasses provide these
    def _initial_obs(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def dynamics(self, obs: np.ndarray, ks: np.ndarray, zs: np.ndarray):
        """Batched (obs', r, c) for obs (B, state_dim), ks (B,), zs (B, max_param_dim)."""
        raise NotImplementedError

    def _is_success(self, obs, k, z, obs_next, r, c) -> bool:
        return False

    def reset(self, seed: int) -> EnvState:
        self._obs = np.asarray(self._initial_obs(substream(seed, "env_reset")), dtype=np.float64)
        self._steps = 0
        self._done = False
        self.episode_success = False
        return EnvState(self._obs.copy(), 0, False)

    def step(self, a: ParamAction) -> tuple[EnvState, float, int]:
        if self._done or self._obs is None:
            raise EpisodeDone("reset() required before step()")
        if not validate_action(self.spec.action_spec, a):
            raise ValueError(f"invalid action for {self.spec.name}")
        maxd = self.spec.action_spec.max_param_dim
        z = np.zeros((1, maxd), dtype=np.float64)
        z[0, : a.z.shape[0]] = a.z
        obs2, r, c = self.dynamics(self._obs[None, :], np.asarray([a.k]), z)
        obs2, r, c = obs2[0], float(r[0]), int(c[0])
        if self._is_success(self._obs, a.k, a.z, obs2, r, c):
            self.episode_success = True
        self._steps += 1
        self._obs = obs2
        self._done = c == 0 or self._steps >= self.spec.max_steps
        return EnvState(obs2.copy(), self._steps, self._done), r, c


class PlatformEnv(Env):
    """Scalar track x in [0, 1] with a gap and an enemy.

    run advances up to 0.05 (best at p = 1) and leap up to 0.20 (best at
    p = 1, immune to the gap). hop is a projectile whose parameter is the
    launch angle: range 0.10 * (1 - p^2), maximal at p = 0, immune to the
    enemy. The per-action optima differ, so planners that condition the
    parameter distribution on the chosen action have something to gain.
    Landing in the gap without leap, or crossing the enemy region without
    hop, ends the episode. Per-step reward is the progress made, so the
    undiscounted return is final progress in [0, 1].
    """

    RUN, HOP, LEAP = 0, 1, 2
    GAP_LO, GAP_HI = 0.40, 0.45
    ENEMY_LO, ENEMY_HI = 0.68, 0.72

    def __init__(self):
        super().__init__(
            EnvSpec(
                name="platform",
                state_dim=1,
                action_spec=ParamActionSpec(3, (1, 1, 1)),
                max_steps=50,
            )
        )

    def _initial_obs(self, rng):
        return np.zeros(1)

    def dynamics(self, obs, ks, zs):
        x = obs[:, 0]
        p = np.clip(zs[:, 0], -1.0, 1.0)
        linear = (p + 1.0) / 2.0
        dx = np.choose(ks, [0.05 * linear, 0.10 * (1.0 - p**2), 0.20 * linear])
        x2 = np.minimum(x + dx, 1.0)
        gap_death = (x2 >= self.GAP_LO) & (x2 <= self.GAP_HI) & (ks != self.LEAP)
        # the traversed interval (x, x2] meets the open enemy region
        enemy_death = (x2 > self.ENEMY_LO) & (x < self.ENEMY_HI) & (ks != self.HOP)
        death = gap_death | enemy_death
        success = (x2 >= 1.0) & ~death
        r = x2 - x
        c = np.where(death | success, 0.0, 1.0)
        return x2[:, None], r, c

    def _is_success(self, obs, k, z, obs_next, r, c):
        return c == 0 and obs_next[0] >= 1.0


class CatchPointEnv(Env):
    """Reach and catch a target point within a limited number of catch trials.

    Observation: [agent_xy, target_xy, trials_left / 10, target distance]
    (the distance coordinate makes the success geometry position-invariant
    for the predictors). move(d) shifts the agent by 0.1 * d inside the unit
    box; its reward is the decrease in target distance minus a 0.05 step
    cost, so planning sees a gradient toward the target. catch succeeds
    within distance 0.15 (+10,
    terminal); a miss burns one of 10 trials (-1). A successful catch drives
    the trials coordinate to the sentinel -10, so terminal states sit far
    from live ones in observation space (the jump is large enough for the
    transition predictor to pick it up from rare terminal samples) and
    termination stays identifiable from the observation alone.
    """

    MOVE, CATCH = 0, 1
    CATCH_RADIUS = 0.15
    MOVE_SCALE = 0.1
    TRIALS = 10

    def __init__(self):
        super().__init__(
            EnvSpec(
                name="catch_point",
                state_dim=6,
                action_spec=ParamActionSpec(2, (2, 0)),
                max_steps=50,
            )
        )

    def _initial_obs(self, rng):
        target = rng.uniform(0.0, 1.0, size=2)
        dist = np.linalg.norm(np.array([0.5, 0.5]) - target)
        return np.concatenate([[0.5, 0.5], target, [1.0], [dist]])

    def dynamics(self, obs, ks, zs):
        agent = obs[:, 0:2]
        target = obs[:, 2:4]
        trials = np.rint(obs[:, 4] * self.TRIALS).astype(np.int64)
        move = ks == self.MOVE

        agent2 = np.where(
            move[:, None],
            np.clip(agent + self.MOVE_SCALE * np.clip(zs[:, :2], -1.0, 1.0), 0.0, 1.0),
            agent,
        )
        dist = np.linalg.norm(agent - target, axis=1)
        dist2 = np.linalg.norm(agent2 - target, axis=1)
        caught = ~move & (dist <= self.CATCH_RADIUS)
        missed = ~move & ~caught

        trials2 = np.where(caught, -self.TRIALS * self.TRIALS, np.where(missed, trials - 1, trials))
        r = np.where(move, dist - dist2 - 0.05, np.where(caught, 10.0, -1.0))
        c = np.where(caught | (missed & (trials2 <= 0)), 0.0, 1.0)
        obs2 = np.concatenate(
            [agent2, target, trials2[:, None] / self.TRIALS, dist2[:, None]], axis=1
        )
        return obs2, r, c

    def _is_success(self, obs, k, z, obs_next, r, c):
        return k == self.CATCH and r > 0.0


class HardMoveEnv(Env):
    """Drive n actuators to bring the agent within 0.1 of a goal in [-1, 1]^2.

    The discrete index is an n-bit mask of active actuators; active actuator i
    pushes by z_i along the fixed direction (cos 2*pi*i/n, sin 2*pi*i/n),
    scaled by 0.1 / sqrt(n). Reward is the decrease in goal distance minus a
    0.05 step cost, plus 10 on reaching the goal (terminal).
    """

    GOAL_RADIUS = 0.1

    def __init__(self, n_actuators: int = 4):
        if n_actuators < 1:
            raise ValueError("n_actuators must be >= 1")
        n = int(n_actuators)
        k_count = 2**n
        super().__init__(
            EnvSpec(
                name="hard_move",
                state_dim=4,
                action_spec=ParamActionSpec(k_count, (n,) * k_count),
                max_steps=25,
                n_actuators=n,
            )
        )
        self._n = n
        ks = np.arange(k_count)
        self._bitmask = ((ks[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
        angles = 2.0 * np.pi * np.arange(n) / n
        self._directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        self._scale = 0.1 / np.sqrt(n)

    def _initial_obs(self, rng):
        while True:
            goal = rng.uniform(-1.0, 1.0, size=2)
            if np.linalg.norm(goal) >= 0.5:
                return np.concatenate([[0.0, 0.0], goal])

    def dynamics(self, obs, ks, zs):
        agent = obs[:, 0:2]
        goal = obs[:, 2:4]
        active = self._bitmask[ks]
        z = np.clip(zs[:, : self._n], -1.0, 1.0)
        disp = self._scale * ((z * active) @ self._directions)
        agent2 = np.clip(agent + disp, -1.0, 1.0)
        d0 = np.linalg.norm(agent - goal, axis=1)
        d1 = np.linalg.norm(agent2 - goal, axis=1)
        reached = d1 < self.GOAL_RADIUS
        r = d0 - d1 - 0.05 + 10.0 * reached
        c = np.where(reached, 0.0, 1.0)
        obs2 = np.concatenate([agent2, goal], axis=1)
        return obs2, r, c

    def _is_success(self, obs, k, z, obs_next, r, c):
        return bool(np.linalg.norm(obs_next[0:2] - obs_next[2:4]) < self.GOAL_RADIUS)


class LinearPamdpEnv(Env):
    """Smooth synthetic PAMDP with known Lipschitz structure, for diagnostics.

    s' = A s + B_k z + d_k with contractive A (spectral norm < 1), reward
    w . s + v_k . z, and no termination. Everything is linear, so transition
    and reward Lipschitz constants are known in closed form.
    """

    def __init__(self, state_dim: int = 2, num_discrete: int = 2, z_dim: int = 1,
                 contraction: float = 0.7, weights_seed: int = 7, max_steps: int = 40):
        super().__init__(
            EnvSpec(
                name="linear",
                state_dim=state_dim,
                action_spec=ParamActionSpec(num_discrete, (z_dim,) * num_discrete),
                max_steps=max_steps,
            )
        )
        rng = substream(weights_seed, "linear_env_weights")
        theta = rng.uniform(0.0, 2.0 * np.pi)
        rot = np.eye(state_dim)
        rot[0, 0], rot[0, 1] = np.cos(theta), -np.sin(theta)
        rot[1, 0], rot[1, 1] = np.sin(theta), np.cos(theta)
        self.A = contraction * rot
        self.contraction = contraction
        self.B = rng.uniform(-0.5, 0.5, size=(num_discrete, z_dim, state_dim))
        self.d = rng.uniform(-0.3, 0.3, size=(num_discrete, state_dim))
        self.w = rng.uniform(-0.5, 0.5, size=state_dim)
        self.v = rng.uniform(-0.5, 0.5, size=(num_discrete, z_dim))

    def _initial_obs(self, rng):
        return rng.uniform(-1.0, 1.0, size=self.spec.state_dim)

    def dynamics(self, obs, ks, zs):
        z = zs[:, : self.spec.action_spec.param_dims[0]]
        bz = np.einsum("bz,bzd->bd", z, self.B[ks])
        obs2 = obs @ self.A.T + bz + self.d[ks]
        r = obs @ self.w + np.einsum("bz,bz->b", z, self.v[ks])
        c = np.ones(obs.shape[0])
        return obs2, r, c


def make_env(name: str, n_actuators: int = 4, **kwargs) -> Env:
    if name == "platform":
        return PlatformEnv()
    if name == "catch_point":
        return CatchPointEnv()
    if name == "hard_move":
        return HardMoveEnv(n_actuators)
    if name == "linear":
        return LinearPamdpEnv(**kwargs)
    raise UnknownEnvError(f"unknown environment: {name!r}")

"""Sampling-based planner for parameterized actions.

Keeps, for every plan timestep, a categorical distribution over discrete
actions and one diagonal Gaussian over continuous parameters *per* discrete
action, so the parameter distribution stays conditioned on the action that
owns it. Each iteration samples candidate action sequences, scores them with
imagined rollouts, and refits the distributions from the elite set using
exponentiated-return weights.

Two ablation modes: "shared_gaussian" keeps a single parameter Gaussian per
timestep for all discrete actions, and "random_shooting" samples once from
the initial distribution and executes the best sequence's first action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import ParamAction, ParamActionSpec
from .model import reward_mask
from .rng import substream

MODES = ("mppi", "shared_gaussian", "random_shooting")


class PlanningError(RuntimeError):
    pass


@dataclass
class PlannerConfig:
    population: int = 1000
    elites: int = 400
    iterations: int = 6
    horizon: int = 5
    temperature: float = 0.5
    momentum: float = 0.1
    discount: float = 0.99
    mode: str = "mppi"
    sigma_init: float = 0.5
    sigma_floor: float = 1e-3
    literal_eq6: bool = False
    literal_eq4: bool = False
    warm_start: bool = False

    def __post_init__(self):
        if not 1 <= self.elites <= self.population:
            raise ValueError("need 1 <= elites <= population")
        if self.iterations < 1 or self.horizon < 0:
            raise ValueError("iterations >= 1 and horizon >= 0 required")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown planner mode {self.mode!r}")


@dataclass(eq=False)
class PlanDistribution:
    """Per-timestep categorical weights plus per-action diagonal Gaussians."""

    theta: np.ndarray        # (T, K)
    mu: np.ndarray           # (T, K, maxd)
    sigma: np.ndarray        # (T, K, maxd)
    dims_mask: np.ndarray    # (K, maxd) valid parameter columns per action

    def copy(self) -> "PlanDistribution":
        return PlanDistribution(
            self.theta.copy(), self.mu.copy(), self.sigma.copy(), self.dims_mask
        )

    def entropy_mean(self) -> float:
        p = np.clip(self.theta, 1e-300, None)
        ent = -np.sum(self.theta * np.log(p), axis=1)
        return float(np.mean(ent))

    def sigma_mean(self, shared: bool = False) -> float:
        if self.dims_mask.size == 0:
            return 0.0
        if shared:
            return float(np.mean(self.sigma[:, 0, :]))
        valid = np.broadcast_to(self.dims_mask[None, :, :], self.sigma.shape)
        if not valid.any():
            return 0.0
        return float(np.mean(self.sigma[valid]))


def init_distribution(spec: ParamActionSpec, horizon: int,
                      sigma_init: float = 0.5) -> PlanDistribution:
    """Uniform categorical, zero-centered Gaussians with a wide initial spread."""
    t_len = horizon + 1
    k = spec.num_discrete
    maxd = spec.max_param_dim
    dims = spec.dims_array()
    dims_mask = np.arange(maxd)[None, :] < dims[:, None]
    return PlanDistribution(
        theta=np.full((t_len, k), 1.0 / k),
        mu=np.zeros((t_len, k, maxd)),
        sigma=np.full((t_len, k, maxd), float(sigma_init)),
        dims_mask=dims_mask,
    )


def shift_distribution(spec: ParamActionSpec, c: PlanDistribution,
                       sigma_init: float) -> PlanDistribution:
    """Warm start: drop the executed step, append a fresh final step."""
    fresh = init_distribution(spec, c.theta.shape[0] - 1, sigma_init)
    out = c.copy()
    out.theta[:-1] = c.theta[1:]
    out.mu[:-1] = c.mu[1:]
    out.sigma[:-1] = c.sigma[1:]
    out.theta[-1] = fresh.theta[-1]
    out.mu[-1] = fresh.mu[-1]
    out.sigma[-1] = fresh.sigma[-1]
    return out


def sample_sequences(c: PlanDistribution, n_seq: int, rng: np.random.Generator,
                     shared: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Draw n_seq action sequences: ks (N, T) and zs (N, T, maxd).

    All randomness for a call is drawn as one block with a fixed layout in
    which row i belongs to sequence i, so the sample set is identical however
    scoring work is later distributed.
    """
    t_len, k = c.theta.shape
    maxd = c.mu.shape[2]
    u = rng.random((n_seq, t_len))
    eps = rng.standard_normal((n_seq, t_len, maxd)) if maxd > 0 else np.zeros((n_seq, t_len, 0))
    ks = np.empty((n_seq, t_len), dtype=np.int64)
    for t in range(t_len):
        cum = np.cumsum(c.theta[t])
        cum[-1] = 1.0
        ks[:, t] = np.searchsorted(cum, u[:, t], side="right")
    np.clip(ks, 0, k - 1, out=ks)
    if maxd == 0:
        return ks, np.zeros((n_seq, t_len, 0))
    t_idx = np.broadcast_to(np.arange(t_len)[None, :], (n_seq, t_len))
    if shared:
        mu = c.mu[t_idx, 0]
        sigma = c.sigma[t_idx, 0]
    else:
        mu = c.mu[t_idx, ks]
        sigma = c.sigma[t_idx, ks]
    zs = np.clip(mu + sigma * eps, -1.0, 1.0)
    zs *= c.dims_mask[ks]
    return ks, zs


def score_trajectories(model, s_t: np.ndarray, ks: np.ndarray, zs: np.ndarray,
                       discount: float, literal_eq4: bool = False) -> np.ndarray:
    """Discounted imagined return per sequence; non-finite scores become -inf.

    Rollouts are deterministic mean rollouts of the model (one per sequence);
    rewards after a predicted termination are masked out.
    """
    n_seq, t_len = ks.shape
    s = np.repeat(np.asarray(s_t, dtype=model.dtype).reshape(1, -1), n_seq, axis=0)
    rewards = np.zeros((n_seq, t_len))
    flags = np.zeros((n_seq, t_len))
    for t in range(t_len):
        s, r, flag, _ = model.step_batch(s, ks[:, t], zs[:, t])
        rewards[:, t] = r
        flags[:, t] = flag
        bad = ~np.all(np.isfinite(s), axis=1)
        if bad.any():
            s = np.where(bad[:, None], 0.0, s)
            rewards[bad, t] = np.nan
    mask = reward_mask(flags, literal_eq4)
    weights = discount ** np.arange(t_len)
    returns = np.sum(rewards * mask * weights[None, :], axis=1)
    return np.where(np.isfinite(returns), returns, -np.inf)


def select_elites(returns: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n largest returns; ties resolved toward the lower index."""
    if n > returns.shape[0]:
        raise ValueError("elite count exceeds population")
    order = np.lexsort((np.arange(returns.shape[0]), -returns))
    return order[:n]


def _elite_weights(elite_returns: np.ndarray, xi: float) -> np.ndarray:
    finite = np.isfinite(elite_returns)
    if not finite.any():
        raise PlanningError("all candidate trajectories scored non-finite")
    shifted = np.where(finite, elite_returns - elite_returns[finite].max(), -np.inf)
    w = np.exp(xi * shifted, where=np.isfinite(shifted), out=np.zeros_like(shifted))
    return w / w.sum()


def update_distribution(c: PlanDistribution, elite_ks: np.ndarray, elite_zs: np.ndarray,
                        elite_returns: np.ndarray, xi: float, alpha: float,
                        literal_eq6: bool = False, sigma_floor: float = 1e-3,
                        shared: bool = False) -> PlanDistribution:
    """Refit the sampling distributions from the elite set.

    Categorical weights move toward the return-weighted elite action counts.
    Each discrete action's Gaussian is refit only from the elites that chose
    it; actions with no elite support at a timestep keep their parameters
    bit-identical. By default the Gaussian statistics renormalize the weights
    over the matching elites (a proper conditional weighted mean);
    literal_eq6 keeps the all-elite denominator exactly as the update rule is
    written, which shrinks means toward zero when few elites match.
    """
    if elite_ks.shape[0] == 0:
        raise PlanningError("empty elite set")
    t_len, k = c.theta.shape
    maxd = c.mu.shape[2]
    n = elite_ks.shape[0]
    w = _elite_weights(np.asarray(elite_returns, dtype=np.float64), xi)

    t_idx = np.broadcast_to(np.arange(t_len)[None, :], (n, t_len))
    w_rep = np.broadcast_to(w[:, None], (n, t_len))

    counts = np.zeros((t_len, k))
    np.add.at(counts, (t_idx.ravel(), elite_ks.ravel()), w_rep.ravel())
    theta_new = (1.0 - alpha) * counts + alpha * c.theta

    out = c.copy()
    out.theta = theta_new
    if maxd == 0:
        return out

    if shared:
        # shared slot 0 pools every elite regardless of its discrete action
        mu_stat = np.einsum("n,ntd->td", w, elite_zs)
        mu_new = (1.0 - alpha) * mu_stat + alpha * c.mu[:, 0]
        dev = elite_zs - mu_new[None, :, :]
        var_stat = np.einsum("n,ntd->td", w, dev * dev)
        sigma_stat = np.sqrt(var_stat)
        sigma_new = np.maximum((1.0 - alpha) * sigma_stat + alpha * c.sigma[:, 0], sigma_floor)
        out.mu[:, 0] = mu_new
        out.sigma[:, 0] = sigma_new
        return out

    w_sum = np.zeros((t_len, k))
    np.add.at(w_sum, (t_idx.ravel(), elite_ks.ravel()), w_rep.ravel())
    wz = np.zeros((t_len, k, maxd))
    np.add.at(wz, (t_idx.ravel(), elite_ks.ravel()),
              (w_rep[:, :, None] * elite_zs).reshape(-1, maxd))
    matched = w_sum > 0.0

    safe = np.where(matched, w_sum, 1.0)
    if literal_eq6:
        mu_blend = np.where(matched, alpha, 1.0)[:, :, None]
        mu_new = (1.0 - alpha) * wz + mu_blend * c.mu
    else:
        mu_stat = wz / safe[:, :, None]
        mu_new = np.where(matched[:, :, None],
                          (1.0 - alpha) * mu_stat + alpha * c.mu, c.mu)

    dev = elite_zs - mu_new[t_idx, elite_ks]
    wdev2 = np.zeros((t_len, k, maxd))
    np.add.at(wdev2, (t_idx.ravel(), elite_ks.ravel()),
              (w_rep[:, :, None] * dev * dev).reshape(-1, maxd))
    if literal_eq6:
        sigma_stat = np.sqrt(wdev2)
        sig_blend = np.where(matched, alpha, 1.0)[:, :, None]
        sigma_new = (1.0 - alpha) * sigma_stat + sig_blend * c.sigma
        sigma_new = np.where(matched[:, :, None],
                             np.maximum(sigma_new, sigma_floor), sigma_new)
    else:
        sigma_stat = np.sqrt(wdev2 / safe[:, :, None])
        sigma_new = np.where(
            matched[:, :, None],
            np.maximum((1.0 - alpha) * sigma_stat + alpha * c.sigma, sigma_floor),
            c.sigma,
        )
    out.mu = mu_new
    out.sigma = sigma_new
    return out


@dataclass(eq=False)
class PlanDiagnostics:
    """Per-iteration concentration record for one planning call."""

    rows: list = field(default_factory=list)  # (iteration, best_j, mean_j, entropy, sigma_mean)

    def add(self, iteration: int, returns: np.ndarray, c: PlanDistribution, shared: bool):
        finite = returns[np.isfinite(returns)]
        best = float(finite.max()) if finite.size else float("-inf")
        mean = float(finite.mean()) if finite.size else float("-inf")
        self.rows.append((iteration, best, mean, c.entropy_mean(), c.sigma_mean(shared)))


def plan(model, s_t: np.ndarray, cfg: PlannerConfig, c_init: PlanDistribution | None = None,
         seed: int = 0, greedy: bool = False) -> tuple[ParamAction, PlanDistribution, PlanDiagnostics]:
    """Iteratively refit the plan distribution, then pick the first action.

    The default final action is sampled from the final distribution; greedy
    takes the categorical mode and its Gaussian mean (used for evaluation).
    Never mutates the model.
    """
    spec: ParamActionSpec = model.spec
    if cfg.mode == "random_shooting":
        action = random_shooting_plan(model, s_t, cfg, seed)
        return action, init_distribution(spec, cfg.horizon, cfg.sigma_init), PlanDiagnostics()
    shared = cfg.mode == "shared_gaussian"
    c = c_init.copy() if c_init is not None else init_distribution(spec, cfg.horizon, cfg.sigma_init)
    diag = PlanDiagnostics()
    for j in range(1, cfg.iterations + 1):
        rng = substream(seed, "plan_iter", j)
        ks, zs = sample_sequences(c, cfg.population, rng, shared)
        returns = score_trajectories(model, s_t, ks, zs, cfg.discount, cfg.literal_eq4)
        elite_idx = select_elites(returns, cfg.elites)
        c = update_distribution(
            c, ks[elite_idx], zs[elite_idx], returns[elite_idx],
            cfg.temperature, cfg.momentum, cfg.literal_eq6, cfg.sigma_floor, shared,
        )
        diag.add(j, returns, c, shared)

    dims = spec.dims_array()
    if greedy:
        k_star = int(np.argmax(c.theta[0]))
        mu0 = c.mu[0, 0] if shared else c.mu[0, k_star]
        z = np.clip(mu0[: dims[k_star]], -1.0, 1.0)
    else:
        rng = substream(seed, "plan_final")
        ks, zs = sample_sequences(c, 1, rng, shared)
        k_star = int(ks[0, 0])
        z = zs[0, 0, : dims[k_star]]
    return ParamAction.clamped(k_star, z), c, diag


def random_shooting_plan(model, s_t: np.ndarray, cfg: PlannerConfig, seed: int = 0) -> ParamAction:
    """One-shot baseline: sample from the fixed initial distribution, take the best."""
    spec: ParamActionSpec = model.spec
    c = init_distribution(spec, cfg.horizon, cfg.sigma_init)
    rng = substream(seed, "plan_iter", 1)
    ks, zs = sample_sequences(c, cfg.population, rng)
    returns = score_trajectories(model, s_t, ks, zs, cfg.discount, cfg.literal_eq4)
    best = int(select_elites(returns, 1)[0])
    dims = spec.dims_array()
    return ParamAction.clamped(int(ks[best, 0]), zs[best, 0, : dims[ks[best, 0]]])

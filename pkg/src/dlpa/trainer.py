"""Outer training loop: plan, act, store, update, evaluate.

Every environment step runs one planning call (after a short random warmup),
executes the first planned action, stores the transition, then performs the
configured number of model updates on sampled trajectory segments. Metrics
stream to CSV as they are produced so an aborted run still leaves a partial
record on disk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .actions import ParamAction, Transition
from .envs import Env, make_env
from .model import DynamicsModel, init_optimizer, save_checkpoint, train_batch
from .planner import PlannerConfig, plan, random_shooting_plan, shift_distribution
from .replay import ReplayBuffer
from .rng import child_seed, substream

TRAIN_CSV_HEADER = (
    "step,episode,episode_return,loss_total,loss_T,loss_R,loss_c,"
    "plan_entropy,plan_sigma_mean,wall_ms"
)
EVAL_CSV_HEADER = "step,mean_return,std_return,success_rate"
CONCENTRATION_CSV_HEADER = (
    "step,entropy_first_iter,entropy_last_iter,sigma_first_iter,sigma_last_iter"
)


@dataclass
class TrainConfig:
    env_name: str = "hard_move"
    n_actuators: int = 4
    seed: int = 0
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    arch: str = "sequential"
    latent_dim: int = 64
    hidden: int = 64
    unify_reward: bool = False
    loss_horizon: int | None = None  # None -> planner horizon
    beta: float = 0.99
    lam1: float = 1.0
    lam2: float = 0.5
    lam3: float = 1.0
    lr: float = 3e-4
    batch_size: int = 128
    steps_per_update: int = 1
    total_steps: int = 10_000
    eval_interval: int = 500
    eval_episodes: int = 10
    warmup_steps: int = 200
    # probability of executing a uniform random action after warmup; keeps
    # rare event data (e.g. successful catches) flowing once planning engages
    explore_eps: float = 0.05
    buffer_capacity: int = 1_000_000
    save_checkpoints: bool = False
    # optional convergence short-circuit: stop once the smoothed eval return
    # (mean of the last early_stop_window evals) exceeds the threshold
    early_stop_return: float | None = None
    early_stop_window: int = 3

    def make_env(self) -> Env:
        return make_env(self.env_name, self.n_actuators)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


class Metrics:
    """Append-only per-step and per-eval records with incremental CSV flush."""

    def __init__(self, out_dir: str | None = None):
        self.rows: list[tuple] = []
        self.eval_rows: list[tuple] = []
        self.concentration: list[tuple] = []
        self.wall_seconds: dict[str, float] = {"plan": 0.0, "train": 0.0, "eval": 0.0}
        self._files = {}
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            self._files["train"] = open(out / "train.csv", "w")
            self._files["eval"] = open(out / "eval.csv", "w")
            self._files["conc"] = open(out / "concentration.csv", "w")
            self._write("train", TRAIN_CSV_HEADER)
            self._write("eval", EVAL_CSV_HEADER)
            self._write("conc", CONCENTRATION_CSV_HEADER)

    def _write(self, name: str, line: str) -> None:
        if name in self._files:
            self._files[name].write(line + "\n")
            self._files[name].flush()

    def add_step(self, row: tuple) -> None:
        self.rows.append(row)
        self._write("train", ",".join(_fmt(v) for v in row))

    def add_eval(self, row: tuple) -> None:
        self.eval_rows.append(row)
        self._write("eval", ",".join(_fmt(v) for v in row))

    def add_concentration(self, row: tuple) -> None:
        self.concentration.append(row)
        self._write("conc", ",".join(_fmt(v) for v in row))

    def close(self) -> None:
        for f in self._files.values():
            f.close()
        self._files = {}

    def train_csv_text(self, include_wall: bool = False) -> str:
        """CSV text for the per-step records; wall_ms dropped unless asked for."""
        keep = slice(None) if include_wall else slice(0, 9)
        header = TRAIN_CSV_HEADER.split(",")[keep]
        lines = [",".join(header)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row[keep]))
        return "\n".join(lines) + "\n"

    def eval_csv_text(self) -> str:
        lines = [EVAL_CSV_HEADER]
        for row in self.eval_rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def evaluate(model, env: Env, pcfg: PlannerConfig, episodes: int, seed: int) -> dict:
    """Greedy-planning evaluation; never touches replay or the model."""
    returns = []
    successes = 0
    for e in range(episodes):
        state = env.reset(child_seed(seed, "eval_episode", e))
        total = 0.0
        step = 0
        while not state.done:
            if pcfg.mode == "random_shooting":
                a = random_shooting_plan(model, state.observation, pcfg,
                                         seed=child_seed(seed, "eval_plan", e, step))
            else:
                a, _, _ = plan(model, state.observation, pcfg,
                               seed=child_seed(seed, "eval_plan", e, step), greedy=True)
            state, r, _ = env.step(a)
            total += r
            step += 1
        returns.append(total)
        successes += int(env.episode_success)
    returns = np.asarray(returns)
    return {
        "episodes": episodes,
        "mean_return": float(returns.mean()) if episodes else 0.0,
        "std_return": float(returns.std()) if episodes else 0.0,
        "success_rate": successes / episodes if episodes else 0.0,
    }


def _random_action(spec, rng: np.random.Generator) -> ParamAction:
    k = int(rng.integers(spec.num_discrete))
    z = rng.uniform(-1.0, 1.0, size=spec.param_dims[k])
    return ParamAction.clamped(k, z)


def run_training(cfg: TrainConfig, out_dir: str | None = None) -> tuple[DynamicsModel, Metrics]:
    env = cfg.make_env()
    eval_env = cfg.make_env()
    spec = env.spec.action_spec
    seed = cfg.seed
    model = DynamicsModel.create(
        spec, env.spec.state_dim, child_seed(seed, "model_init"),
        arch=cfg.arch, unify_reward=cfg.unify_reward,
        latent_dim=cfg.latent_dim, hidden=cfg.hidden,
    )
    opt = init_optimizer(model)
    buf = ReplayBuffer(cfg.buffer_capacity)
    metrics = Metrics(out_dir)
    loss_h = cfg.loss_horizon if cfg.loss_horizon is not None else cfg.planner.horizon
    eval_pcfg = replace(cfg.planner, warm_start=False)

    warmup_rng = substream(seed, "warmup_actions")
    explore_rng = substream(seed, "explore_actions")
    batch_rng = substream(seed, "batch_sampling")
    noise_rng = substream(seed, "train_noise")

    episode = 0
    ep_return = 0.0
    state = env.reset(child_seed(seed, "episode", episode))
    prev_c = None
    try:
        for step in range(1, cfg.total_steps + 1):
            t_start = time.perf_counter()
            plan_entropy = plan_sigma = None
            if step <= cfg.warmup_steps:
                action = _random_action(spec, warmup_rng)
                prev_c = None
            elif explore_rng.random() < cfg.explore_eps:
                action = _random_action(spec, explore_rng)
            else:
                c_init = None
                if cfg.planner.warm_start and prev_c is not None:
                    c_init = shift_distribution(spec, prev_c, cfg.planner.sigma_init)
                t0 = time.perf_counter()
                action, prev_c, diag = plan(
                    model, state.observation, cfg.planner, c_init,
                    seed=child_seed(seed, "plan", step),
                )
                metrics.wall_seconds["plan"] += time.perf_counter() - t0
                if diag.rows:
                    first, last = diag.rows[0], diag.rows[-1]
                    plan_entropy, plan_sigma = last[3], last[4]
                    metrics.add_concentration((step, first[3], last[3], first[4], last[4]))

            obs_before = state.observation
            state, r, c = env.step(action)
            buf.add(Transition(obs_before, action, r, state.observation, c))
            ep_return += r

            losses = None
            if step > cfg.warmup_steps and buf.has_window():
                t0 = time.perf_counter()
                for _ in range(cfg.steps_per_update):
                    segs = buf.sample_segments(cfg.batch_size, loss_h, batch_rng)
                    losses = train_batch(
                        model, segs, opt, cfg.lr, cfg.beta,
                        (cfg.lam1, cfg.lam2, cfg.lam3), noise_rng,
                    )
                metrics.wall_seconds["train"] += time.perf_counter() - t0

            episode_return_out = None
            row_episode = episode
            if state.done:
                buf.end_episode()
                episode_return_out = ep_return
                episode += 1
                ep_return = 0.0
                state = env.reset(child_seed(seed, "episode", episode))
                prev_c = None

            wall_ms = (time.perf_counter() - t_start) * 1e3
            metrics.add_step((
                step, row_episode, episode_return_out,
                None if losses is None else losses["loss_total"],
                None if losses is None else losses["loss_T"],
                None if losses is None else losses["loss_R"],
                None if losses is None else losses["loss_c"],
                plan_entropy, plan_sigma, wall_ms,
            ))

            if cfg.eval_interval and step % cfg.eval_interval == 0:
                t0 = time.perf_counter()
                stats = evaluate(model, eval_env, eval_pcfg, cfg.eval_episodes,
                                 child_seed(seed, "eval", step))
                metrics.wall_seconds["eval"] += time.perf_counter() - t0
                metrics.add_eval((step, stats["mean_return"], stats["std_return"],
                                  stats["success_rate"]))
                if cfg.save_checkpoints and out_dir is not None:
                    save_checkpoint(model, str(Path(out_dir) / f"ckpt_{step:07d}.npz"))
                if cfg.early_stop_return is not None:
                    recent = [row[1] for row in metrics.eval_rows[-cfg.early_stop_window:]]
                    if len(recent) >= 1 and float(np.mean(recent)) > cfg.early_stop_return:
                        break
    finally:
        metrics.close()
    return model, metrics

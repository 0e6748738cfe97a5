"""Flat key=value run configuration with schema validation.

The on-disk format is plain text: one `key = value` per line, `#` comments,
and optional `[section]` headers that are purely organizational. Unknown
keys are rejected; omitted keys take defaults (a few defaults depend on the
environment). Inline overrides win over file values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .planner import MODES, PlannerConfig
from .theory import DiagnosticsConfig
from .trainer import TrainConfig

ENV_NAMES = ("platform", "catch_point", "hard_move", "linear")

# planning horizon defaults per environment
HORIZON_DEFAULTS = {"platform": 10, "catch_point": 5, "hard_move": 5, "linear": 5}

PER_ENV = object()  # sentinel: default resolved from the env name


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "1", "yes", "on"):
        return True
    if s in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_opt_float(s: str):
    s = s.strip()
    return None if s == "" or s.lower() == "none" else float(s)


def _parse_opt_int(s: str):
    s = s.strip()
    return None if s == "" or s.lower() == "none" else int(s)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class _Field:
    parse: object
    default: object
    choices: tuple = ()


SCHEMA: dict[str, _Field] = {
    # environment
    "env": _Field(str, "hard_move", ENV_NAMES),
    "n_actuators": _Field(int, 4, (4, 6, 8, 10)),
    "seed": _Field(int, 0),
    # model
    "arch": _Field(str, "sequential", ("parallel", "masking", "sequential")),
    "latent_dim": _Field(int, 64),
    "hidden": _Field(int, 64),
    "unify_reward": _Field(_parse_bool, False),
    # loss
    "beta": _Field(float, 0.99),
    "lam1": _Field(float, 1.0),
    "lam2": _Field(float, 0.5),
    "lam3": _Field(float, 1.0),
    "lr": _Field(float, 3e-4),
    "loss_horizon": _Field(_parse_opt_int, None),
    # planner
    "population": _Field(int, 1000),
    "elites": _Field(int, 400),
    "iterations": _Field(int, 6),
    "horizon": _Field(int, PER_ENV),
    "temperature": _Field(float, 0.5),
    "momentum": _Field(float, 0.1),
    "gamma": _Field(float, 0.99),
    "mode": _Field(str, "mppi", MODES),
    "sigma_init": _Field(float, 0.5),
    "sigma_floor": _Field(float, 1e-3),
    "literal_eq6": _Field(_parse_bool, False),
    "literal_eq4": _Field(_parse_bool, False),
    "warm_start": _Field(_parse_bool, False),
    # trainer
    "total_steps": _Field(int, 10_000),
    "batch_size": _Field(int, 128),
    "steps_per_update": _Field(int, 1),
    "eval_interval": _Field(int, 500),
    "eval_episodes": _Field(int, 10),
    "warmup_steps": _Field(int, 200),
    "explore_eps": _Field(float, 0.05),
    "buffer_capacity": _Field(int, 1_000_000),
    "save_checkpoints": _Field(_parse_bool, True),
    "early_stop_return": _Field(_parse_opt_float, None),
    "early_stop_window": _Field(int, 3),
    # eval / plan / diagnose inputs
    "checkpoint": _Field(str, "oracle"),
    "episodes": _Field(int, 20),
    "ablate_seeds": _Field(int, 2),
    # diagnostics
    "diag_rollouts": _Field(int, 256),
    "diag_lipschitz_samples": _Field(int, 1024),
    "diag_error_samples": _Field(int, 2048),
    "diag_pool_states": _Field(int, 1024),
    "diag_coupling_samples": _Field(int, 128),
    "diag_regret_rollouts": _Field(int, 256),
    "diag_delta": _Field(float, 0.05),
}


def _parse_kv_text(text: str, source: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass(eq=False)
class RunConfig:
    """Resolved, validated flat configuration."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def echo_text(self) -> str:
        lines = [f"{k} = {self._fmt(self.values[k])}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def _fmt(v) -> str:
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)

    def planner_config(self) -> PlannerConfig:
        v = self.values
        try:
            return PlannerConfig(
                population=v["population"],
                elites=v["elites"],
                iterations=v["iterations"],
                horizon=v["horizon"],
                temperature=v["temperature"],
                momentum=v["momentum"],
                discount=v["gamma"],
                mode=v["mode"],
                sigma_init=v["sigma_init"],
                sigma_floor=v["sigma_floor"],
                literal_eq6=v["literal_eq6"],
                literal_eq4=v["literal_eq4"],
                warm_start=v["warm_start"],
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            env_name=v["env"],
            n_actuators=v["n_actuators"],
            seed=v["seed"],
            planner=self.planner_config(),
            arch=v["arch"],
            latent_dim=v["latent_dim"],
            hidden=v["hidden"],
            unify_reward=v["unify_reward"],
            loss_horizon=v["loss_horizon"],
            beta=v["beta"],
            lam1=v["lam1"],
            lam2=v["lam2"],
            lam3=v["lam3"],
            lr=v["lr"],
            batch_size=v["batch_size"],
            steps_per_update=v["steps_per_update"],
            total_steps=v["total_steps"],
            eval_interval=v["eval_interval"],
            eval_episodes=v["eval_episodes"],
            warmup_steps=v["warmup_steps"],
            explore_eps=v["explore_eps"],
            buffer_capacity=v["buffer_capacity"],
            save_checkpoints=v["save_checkpoints"],
            early_stop_return=v["early_stop_return"],
            early_stop_window=v["early_stop_window"],
        )

    def diagnostics_config(self) -> DiagnosticsConfig:
        v = self.values
        pcfg = self.planner_config()
        return DiagnosticsConfig(
            seed=v["seed"],
            horizon=v["horizon"],
            rollouts=v["diag_rollouts"],
            lipschitz_samples=v["diag_lipschitz_samples"],
            coupling_samples=v["diag_coupling_samples"],
            error_samples=v["diag_error_samples"],
            pool_states=v["diag_pool_states"],
            regret_rollouts=v["diag_regret_rollouts"],
            delta=v["diag_delta"],
            planner=PlannerConfig(
                population=min(pcfg.population, 256),
                elites=min(pcfg.elites, 64),
                iterations=pcfg.iterations,
                horizon=v["horizon"],
                temperature=pcfg.temperature,
                momentum=pcfg.momentum,
                discount=1.0,
                sigma_init=pcfg.sigma_init,
                sigma_floor=pcfg.sigma_floor,
            ),
        )


def parse_config(path: str | None = None, overrides: list[str] = (),
                 seed: int | None = None) -> RunConfig:
    """Resolve file values, overrides, and defaults into a validated RunConfig."""
    raw: dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        raw.update(_parse_kv_text(p.read_text(), str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if seed is not None:
        raw["seed"] = str(seed)

    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key!r}")

    values: dict = {}
    for key, fspec in SCHEMA.items():
        if key in raw:
            try:
                values[key] = fspec.parse(raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({e})") from e
        else:
            values[key] = fspec.default

    for key, fspec in SCHEMA.items():
        if fspec.choices and values[key] is not PER_ENV and values[key] not in fspec.choices:
            raise ConfigError(
                f"{key!r} must be one of {fspec.choices}, got {values[key]!r}"
            )

    if values["horizon"] is PER_ENV:
        values["horizon"] = HORIZON_DEFAULTS[values["env"]]

    cfg = RunConfig(values)
    cfg.planner_config()  # constraint validation (e.g. elites <= population)
    if values["loss_horizon"] is not None and values["loss_horizon"] < 0:
        raise ConfigError("loss_horizon must be >= 0")
    for key in ("total_steps", "batch_size", "steps_per_update", "eval_episodes",
                "early_stop_window", "buffer_capacity"):
        if values[key] < (0 if key == "total_steps" else 1):
            raise ConfigError(f"{key} must be positive")
    return cfg

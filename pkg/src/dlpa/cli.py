"""Command-line front end.

Subcommands: train, eval, plan, diagnose, ablate. Every command takes
--config PATH, repeatable --set key=value overrides, --seed, and --out DIR;
the resolved configuration is echoed into the output directory for
provenance. All emitted CSV files have fixed, documented headers.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .envs import make_env
from .model import OracleModel, load_checkpoint, save_checkpoint
from .planner import plan
from .rng import child_seed
from .theory import run_bound_suite
from .trainer import evaluate, run_training

PLAN_CSV_HEADER = "iteration,best_return,mean_return,entropy,sigma_mean"
ABLATE_CSV_HEADER = "axis,variant,seed,step,mean_return,std_return,success_rate"

ABLATION_AXES = {
    "h_step": [("h_step", {}), ("one_step", {"loss_horizon": 0})],
    "mppi_variant": [("conditional_gaussian", {"mode": "mppi"}),
                     ("shared_gaussian", {"mode": "shared_gaussian"})],
    "architecture": [("parallel", {"arch": "parallel"}),
                     ("masking", {"arch": "masking"}),
                     ("sequential", {"arch": "sequential"})],
    "reward_heads": [("two_predictors", {"unify_reward": "false"}),
                     ("unified", {"unify_reward": "true"})],
    "shooting": [("mppi", {"mode": "mppi"}),
                 ("random_shooting", {"mode": "random_shooting"})],
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="root seed override")
    p.add_argument("--out", default="dlpa_out", help="output directory")


def _prepare(args) -> tuple[RunConfig, Path]:
    cfg = parse_config(args.config, args.overrides, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_resolved.cfg").write_text(cfg.echo_text())
    return cfg, out


def _load_model(cfg: RunConfig, env):
    source = cfg["checkpoint"]
    if source == "oracle":
        return OracleModel(env)
    model = load_checkpoint(source)
    if model.spec.key() != env.spec.action_spec.key() or model.state_dim != env.spec.state_dim:
        raise ConfigError(f"checkpoint {source!r} does not match environment {cfg['env']!r}")
    return model


def cmd_train(args) -> int:
    cfg, out = _prepare(args)
    tc = cfg.train_config()
    model, metrics = run_training(tc, out_dir=str(out))
    save_checkpoint(model, str(out / "model_final.npz"))
    last_eval = metrics.eval_rows[-1] if metrics.eval_rows else None
    print(f"train: {len(metrics.rows)} env steps, {len(metrics.eval_rows)} evals, "
          f"artifacts in {out}")
    if last_eval is not None:
        print(f"last eval: step={last_eval[0]} mean_return={last_eval[1]:.4g} "
              f"success_rate={last_eval[3]:.3g}")
    return 0


def cmd_eval(args) -> int:
    cfg, out = _prepare(args)
    env = make_env(cfg["env"], cfg["n_actuators"])
    model = _load_model(cfg, env)
    stats = evaluate(model, env, cfg.planner_config(), cfg["episodes"], cfg["seed"])
    (out / "eval_summary.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_plan(args) -> int:
    cfg, out = _prepare(args)
    env = make_env(cfg["env"], cfg["n_actuators"])
    model = _load_model(cfg, env)
    state = env.reset(child_seed(cfg["seed"], "plan_state"))
    action, _, diag = plan(model, state.observation, cfg.planner_config(),
                           seed=child_seed(cfg["seed"], "cli_plan"))
    lines = [PLAN_CSV_HEADER]
    for it, best, mean, ent, sig in diag.rows:
        lines.append(f"{it},{best:.10g},{mean:.10g},{ent:.10g},{sig:.10g}")
    (out / "plan_iterations.csv").write_text("\n".join(lines) + "\n")
    print(f"plan: k={action.k} z={action.z.tolist()} ({len(diag.rows)} iterations)")
    return 0


def cmd_diagnose(args) -> int:
    cfg, out = _prepare(args)
    env = make_env(cfg["env"], cfg["n_actuators"])
    model = _load_model(cfg, env)
    report = run_bound_suite(env, model, cfg.diagnostics_config())
    (out / "bound_report.txt").write_text(report.to_text())
    (out / "bound_report.csv").write_text("\n".join(report.csv_rows()) + "\n")
    print(report.to_text())
    return 0


def cmd_ablate(args) -> int:
    cfg, out = _prepare(args)
    if args.axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {args.axis!r} "
                          f"(choose from {sorted(ABLATION_AXES)})")
    rows = [ABLATE_CSV_HEADER]
    for variant, over in ABLATION_AXES[args.axis]:
        over_items = [f"{k}={v}" for k, v in over.items()]
        vcfg = parse_config(args.config, list(args.overrides) + over_items, args.seed)
        base_seed = vcfg["seed"]
        for i in range(vcfg["ablate_seeds"]):
            tc = replace(vcfg.train_config(), seed=base_seed + i, save_checkpoints=False)
            run_dir = out / f"{args.axis}_{variant}_seed{base_seed + i}"
            _, metrics = run_training(tc, out_dir=str(run_dir))
            for step, mean_r, std_r, succ in metrics.eval_rows:
                rows.append(f"{args.axis},{variant},{base_seed + i},{step},"
                            f"{mean_r:.10g},{std_r:.10g},{succ:.10g}")
            print(f"ablate: finished {variant} seed {base_seed + i}")
    (out / f"ablate_{args.axis}.csv").write_text("\n".join(rows) + "\n")
    print(f"ablate: wrote {out / f'ablate_{args.axis}.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlpa",
        description="Model-based RL for parameterized action spaces: "
                    "train, evaluate, plan, diagnose bounds, run ablations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extra in (
        ("train", cmd_train, None),
        ("eval", cmd_eval, None),
        ("plan", cmd_plan, None),
        ("diagnose", cmd_diagnose, None),
        ("ablate", cmd_ablate, "axis"),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        if extra == "axis":
            p.add_argument("axis", help=f"one of {sorted(ABLATION_AXES)}")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

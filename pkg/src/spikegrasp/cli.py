"""Command-line entry point: ``python3 -m spikegrasp {train,eval,energy,compare}``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as config_mod
from .config import ConfigError, ExperimentConfig
from .encoding import minmax_normalize
from .energy import (
    TABLE_ONE_ANN,
    TABLE_ONE_SNN,
    EnergyConfig,
    energy_report,
    measure_ann_rates,
    measure_snn_rates,
)
from .policy import CheckpointError, load_checkpoint
from .ppo import ActorCritic
from .tasks import EvalGraspTask
from .train import keep_heap_allocations, run_evaluation, substream, train

log = logging.getLogger("spikegrasp")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

ARMS = (("snn", "crl"), ("snn", "vanilla"), ("ann", "crl"), ("ann", "vanilla"))
CURVE_METRICS = ("success_rate", "reach_rate", "mean_reward", "eval_return")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _load_config(args) -> ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "out_dir", None) is not None:
        cfg = cfg.replace(out_dir=args.out_dir)
    return cfg


# -- train ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train: --config is required")
    cfg = _load_config(args)
    out = Path(cfg.out_dir)

    def progress(row):
        log.info("update %d  reward %.4f  success %s", row["update"], row["mean_reward"], row["success_rate"])

    train(cfg, out, progress=progress if args.verbose else None)
    print(f"metrics: {out / 'metrics.csv'}")
    print(f"checkpoints: {out / 'actor.ckpt'} {out / 'critic.ckpt'}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------


def _config_for_checkpoint(args, ckpt: Path) -> ExperimentConfig:
    if args.config:
        return _load_config(args)
    beside = ckpt.parent / "config.yaml"
    cfg = config_mod.load(beside) if beside.is_file() else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _read_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _agent_from_checkpoint(path: Path) -> ActorCritic:
    params, spec, kind = _read_checkpoint(path)
    if params.log_std is None:
        raise CheckpointError(f"{path}: not an actor checkpoint (no log_std)")
    agent = ActorCritic(spec, kind, 0)
    agent.actor = params
    return agent


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise UsageError("eval: --checkpoint is required")
    if args.episodes < 1:
        raise UsageError("eval: --episodes must be >= 1")
    ckpt = Path(args.checkpoint)
    cfg = _config_for_checkpoint(args, ckpt)
    cfg = cfg.replace(eval=replace(cfg.eval, episodes=args.episodes))
    agent = _agent_from_checkpoint(ckpt)
    rows: list = []
    result = run_evaluation(agent, cfg, rows)
    out = Path(args.out_dir) if args.out_dir else ckpt.parent
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "episodes.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["episode", "return", "success", "reached", "length"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"episodes: {args.episodes}")
    print(f"success rate: {result['success_rate']:.4f}")
    print(f"reach rate: {result['reach_rate']:.4f}")
    print(f"mean episodic reward: {result['mean_return']:.4f}")
    print(f"per-episode log: {csv_path}")
    return EXIT_OK


# -- energy --------------------------------------------------------------------------


def _eval_observations(agent: ActorCritic, cfg: ExperimentConfig) -> np.ndarray:
    """Normalized observations visited by ``agent`` during one deterministic evaluation batch."""
    env_cfg = replace(cfg.env, num_envs=cfg.eval.episodes)
    task = EvalGraspTask(env_cfg, cfg.curriculum.stage_two.to_weights(), cfg.scales, substream(cfg.seed, "eval"))
    obs = task.reset()
    alive = np.ones(task.num_envs, dtype=bool)
    seen = []
    for _ in range(cfg.env.episode_length):
        x = minmax_normalize(obs, task.bounds)
        seen.append(x[alive])
        mean, _, _ = agent.policy(x)
        obs, _, done, _ = task.step(np.where(alive[:, None], mean, 0.0))
        alive &= ~done
        if not alive.any():
            break
    return np.concatenate(seen)


def cmd_energy(args) -> int:
    explicit = [args.r, args.r_mem, args.r_in, args.r_out]
    have_explicit = all(v is not None for v in explicit)
    have_ckpt = bool(args.checkpoint and args.ann_checkpoint)
    if args.table_one:
        snn_cfg, ann_cfg = TABLE_ONE_SNN, TABLE_ONE_ANN
    elif have_explicit == have_ckpt:
        raise UsageError(
            "energy: give either --r --r-mem --r-in --r-out, or --checkpoint (SNN) and --ann-checkpoint, or --table-one"
        )
    else:
        if have_ckpt:
            snn_params, snn_spec, snn_kind = _read_checkpoint(args.checkpoint)
            ann_params, ann_spec, ann_kind = _read_checkpoint(args.ann_checkpoint)
            if snn_kind != "snn" or ann_kind != "ann":
                raise CheckpointError("energy: --checkpoint must hold an SNN and --ann-checkpoint an ANN")
            cfg = _config_for_checkpoint(args, Path(args.checkpoint))
            agent = ActorCritic(snn_spec, "snn", 0)
            agent.actor = snn_params
            obs = _eval_observations(agent, cfg)
            r, r_mem = measure_snn_rates(snn_params, snn_spec, obs)
            r_in, r_out = measure_ann_rates(ann_params, obs)
            dims = (snn_spec.n0, snn_spec.n1, snn_spec.n2)
            if dims != (ann_spec.n0, ann_spec.n1, ann_spec.n2):
                raise CheckpointError(f"energy: layer sizes differ: SNN {dims}, ANN {(ann_spec.n0, ann_spec.n1, ann_spec.n2)}")
            print(f"rates measured on {obs.shape[0]} evaluation observations")
        else:
            r, r_mem, r_in, r_out = explicit
            dims = (TABLE_ONE_SNN.N0, TABLE_ONE_SNN.N1, TABLE_ONE_SNN.N2)
        n0 = args.n0 or dims[0]
        n1 = args.n1 or dims[1]
        n2 = args.n2 or dims[2]
        snn_cfg = EnergyConfig(args.batch, args.steps, n0, n1, n2, r=r, r_mem=r_mem)
        ann_cfg = EnergyConfig(args.batch, args.steps, n0, n1, n2, r_in=r_in, r_out=r_out)
    report = energy_report(snn_cfg, ann_cfg)
    print(report.table())
    out = Path(args.out_dir) if args.out_dir else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "energy.csv")
    print(f"csv: {out / 'energy.csv'}")
    return EXIT_OK


# -- compare -------------------------------------------------------------------------


def _final(values, frac: float = 0.05) -> float:
    """Mean over the last ``frac`` of a per-update column (at least one entry)."""
    vals = np.asarray(values, dtype=float)
    k = max(1, int(round(len(vals) * frac)))
    return _nanstat(np.nanmean, vals[-k:])


def _nanstat(fn, values):
    vals = np.asarray(values, dtype=float)
    return float(fn(vals[np.isfinite(vals)])) if np.isfinite(vals).any() else float("nan")


def read_metrics(path) -> list:
    """Rows of a metrics CSV with numeric fields parsed (empty cells become NaN)."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append({k: (float(v) if v != "" else float("nan")) for k, v in raw.items()})
    return rows


def run_compare(base: ExperimentConfig, out: Path, n_seeds: int, arms=ARMS) -> dict:
    """Train every arm on ``n_seeds`` shared seeds, then summarize from the written metrics."""
    out.mkdir(parents=True, exist_ok=True)
    config_mod.snapshot(base, out / "base_config.yaml")
    seeds = [base.seed + k for k in range(n_seeds)]
    status = {}
    for model, training in arms:
        arm = f"{model}-{training}"
        for seed in seeds:
            cfg = base.replace(model=model, training=training, seed=seed, out_dir=str(out / arm / f"seed{seed}"))
            log.info("compare: %s seed %d", arm, seed)
            try:
                train(cfg, cfg.out_dir)
                status[arm, seed] = "ok"
            except Exception as exc:  # record and keep going with the other arms
                log.error("compare: %s seed %d failed: %s", arm, seed, exc)
                status[arm, seed] = f"failed: {type(exc).__name__}: {exc}"
    return summarize_compare(out, seeds, arms, status)


def summarize_compare(out: Path, seeds, arms=ARMS, status: Optional[dict] = None) -> dict:
    """Write runs.csv, curves.csv and summary.csv from ``out/<arm>/seed<k>/metrics.csv``.

    Final values average the last 5% of updates; the eval columns carry the
    most recent evaluation forward, so this spans the last few evaluations.
    """
    out = Path(out)
    status = status or {}
    runs = []
    for model, training in arms:
        arm = f"{model}-{training}"
        for seed in seeds:
            path = out / arm / f"seed{seed}" / "metrics.csv"
            st = status.get((arm, seed), "ok" if path.is_file() else "failed: missing metrics")
            rows = read_metrics(path) if st == "ok" else []
            run = {"arm": arm, "model": model, "training": training, "seed": seed, "status": st, "rows": rows}
            if rows:
                col = lambda k: [r[k] for r in rows]  # noqa: E731
                run["final_mean_reward"] = _final(col("mean_reward"))
                run["final_eval_return"] = _final(col("eval_return"))
                run["final_success_rate"] = _final(col("success_rate"))
                run["final_reach_rate"] = _final(col("reach_rate"))
                run["peak_success_rate"] = _nanstat(np.nanmax, col("success_rate"))
                run["peak_reach_rate"] = _nanstat(np.nanmax, col("reach_rate"))
            runs.append(run)

    run_fields = ["arm", "seed", "status", "final_mean_reward", "final_eval_return", "final_success_rate",
                  "final_reach_rate", "peak_success_rate", "peak_reach_rate"]
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(run_fields)
        for run in runs:
            w.writerow([_fmt_cell(run.get(k, "")) for k in run_fields])

    curve_fields = ["arm", "update", "global_env_steps", "runs"]
    for m in CURVE_METRICS:
        curve_fields += [f"{m}_mean", f"{m}_std"]
    summary = []
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(curve_fields)
        for model, training in arms:
            arm = f"{model}-{training}"
            arm_runs = [r for r in runs if r["arm"] == arm]
            done = [r for r in arm_runs if r["rows"]]
            peak = peak_reach = float("nan")
            if done:
                n_up = min(len(r["rows"]) for r in done)
                for u in range(n_up):
                    first = done[0]["rows"][u]
                    line = [arm, int(first["update"]), int(first["global_env_steps"]), len(done)]
                    for m in CURVE_METRICS:
                        vals = [r["rows"][u][m] for r in done]
                        line += [_fmt_cell(_nanstat(np.nanmean, vals)), _fmt_cell(_nanstat(np.nanstd, vals))]
                    w.writerow(line)
                mean_curve = lambda m: [_nanstat(np.nanmean, [r["rows"][u][m] for r in done]) for u in range(n_up)]  # noqa: E731
                peak = _nanstat(np.nanmax, mean_curve("success_rate"))
                peak_reach = _nanstat(np.nanmax, mean_curve("reach_rate"))
            summary.append(_summary_row(arm, model, training, arm_runs, peak, peak_reach))

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        w.writerows({k: _fmt_cell(v) for k, v in row.items()} for row in summary)
    return {"runs": runs, "summary": summary}


def _fmt_cell(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v


def _summary_row(arm, model, training, arm_runs, peak, peak_reach) -> dict:
    ok = [r for r in arm_runs if r["rows"]]

    def stat(key, fn):
        return _nanstat(fn, [r[key] for r in ok]) if ok else float("nan")

    return {
        "arm": arm,
        "model": model,
        "training": training,
        "runs": len(ok),
        "failed": len(arm_runs) - len(ok),
        "final_mean_reward_mean": stat("final_mean_reward", np.nanmean),
        "final_mean_reward_std": stat("final_mean_reward", np.nanstd),
        "final_eval_return_mean": stat("final_eval_return", np.nanmean),
        "final_eval_return_std": stat("final_eval_return", np.nanstd),
        "final_success_rate_mean": stat("final_success_rate", np.nanmean),
        "final_reach_rate_mean": stat("final_reach_rate", np.nanmean),
        "peak_success_rate": peak,
        "peak_reach_rate": peak_reach,
    }


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    if args.seeds < 1:
        raise UsageError("compare: --seeds must be >= 1")
    result = run_compare(cfg, Path(cfg.out_dir), args.seeds)
    for row in result["summary"]:
        print(
            f"{row['arm']:<12} runs={row['runs']} failed={row['failed']} "
            f"final_reward={row['final_mean_reward_mean']:.4f} peak_success={row['peak_success_rate']:.3f}"
        )
    print(f"curves: {Path(cfg.out_dir) / 'curves.csv'}")
    failed = sum(row["failed"] for row in result["summary"])
    return EXIT_RUNTIME if failed == sum(row["runs"] + row["failed"] for row in result["summary"]) else EXIT_OK


# -- wiring --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spikegrasp", description="Spiking actor-critic reach-and-grasp experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train one arm from a config file")
    t.add_argument("--config", help="experiment YAML file")
    t.add_argument("--seed", type=int)
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="deterministic evaluation of an actor checkpoint")
    e.add_argument("--checkpoint", help="actor checkpoint file")
    e.add_argument("--config", help="config for the environment (default: config.yaml beside the checkpoint)")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int)
    e.add_argument("--out-dir", help="where episodes.csv goes (default: checkpoint directory)")
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("energy", help="analytical SNN vs ANN inference energy")
    n.add_argument("--checkpoint", help="SNN actor checkpoint (rates measured live)")
    n.add_argument("--ann-checkpoint", help="ANN actor checkpoint (rates measured live)")
    n.add_argument("--config", help="config for the measurement environment")
    n.add_argument("--seed", type=int)
    n.add_argument("--table-one", action="store_true", help="use the reference rates and dimensions")
    n.add_argument("--r", type=float, help="SNN hidden spike rate")
    n.add_argument("--r-mem", type=float, help="SNN membrane activation rate")
    n.add_argument("--r-in", type=float, help="ANN input activation rate")
    n.add_argument("--r-out", type=float, help="ANN hidden activation rate")
    n.add_argument("--batch", type=int, default=TABLE_ONE_SNN.B)
    n.add_argument("--steps", type=int, default=TABLE_ONE_SNN.T)
    n.add_argument("--n0", type=int)
    n.add_argument("--n1", type=int)
    n.add_argument("--n2", type=int)
    n.add_argument("--out-dir")
    n.set_defaults(func=cmd_energy)

    c = sub.add_parser("compare", help="train {snn, ann} x {vanilla, crl} over shared seeds")
    c.add_argument("--config", help="base experiment YAML file")
    c.add_argument("--seed", type=int, help="first shared seed")
    c.add_argument("--seeds", type=int, default=5, help="number of shared seeds")
    c.add_argument("--out-dir")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        keep_heap_allocations()
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Experiment orchestration: training runs, evaluation, sweeps, artifacts.

Every run is a pure function of (config, seed): the metrics CSV, the JSON
summary and the checkpoint are byte-reproducible.  Wall-clock timings go to
a separate sidecar file that is explicitly outside the reproducibility
contract.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from ..dlpc import DoubleLayerTrainer
from ..env import CellFreeEnv
from ..marl.trainer import Trainer
from ..se import PowerAllocation
from ..seeding import stream
from .config import ConfigError, ExperimentConfig, config_hash, dump_config

__all__ = [
    "fractional_baseline",
    "fractional_allocations",
    "detect_convergence",
    "build_trainer",
    "evaluate_greedy",
    "run_experiment",
    "sweep",
    "SWEEP_AXES",
]

CSV_COLUMNS_FIXED = [
    "sum_se",
    "critic_loss_global",
    "critic_loss_local_mean",
    "layer2_critic_loss_global",
    "layer2_critic_loss_local_mean",
    "pr_min",
    "pr_mean",
    "pr_max",
    "converged",
]

SWEEP_AXES = {
    "n_h_s": int,
    "n_h_r": int,
    "spacing_s": float,
    "spacing_r": float,
    "k_ue": int,
    "m_bs": int,
    "seed": int,
}


def fractional_baseline(betas, exponent: float = 0.5, p_max: float = 0.2) -> np.ndarray:
    """Per-user budgets inversely weighted by aggregate fading.

    The weakest user transmits at ``p_max``; a user with aggregate fading
    beta gets p_max * beta^-v / max_j beta_j^-v.
    """
    betas = np.asarray(betas, dtype=float)
    if np.any(betas <= 0):
        raise ValueError("betas must be positive")
    weights = betas ** (-exponent)
    return p_max * weights / weights.max()


def fractional_allocations(betas, exponent: float, p_max: float, n_s: int):
    """Fractional budgets with the uniform per-antenna split."""
    budgets = fractional_baseline(betas, exponent, p_max)
    return [
        PowerAllocation(np.full(n_s, np.sqrt(b / n_s)), float(b)) for b in budgets
    ]


def detect_convergence(series, n_conv: int, delta_conv: float):
    """Earliest index whose next ``n_conv`` values all sit within the band.

    The band is ``+-delta_conv`` (relative) around the final training value.
    Returns None when the series is shorter than the window.
    """
    if n_conv < 1:
        raise ValueError("n_conv must be at least 1")
    series = np.asarray(series, dtype=float)
    if len(series) < n_conv:
        return None
    final = series[-1]
    band = delta_conv * abs(final)
    within = np.abs(series - final) <= band
    for t in range(0, len(series) - n_conv + 1):
        if np.all(within[t : t + n_conv]):
            return t
    return None


def build_trainer(cfg: ExperimentConfig, env: CellFreeEnv | None = None):
    """Environment plus the trainer matching the configured architecture."""
    if env is None:
        env = CellFreeEnv(cfg.env_params(), stream(cfg.seed, "env"))
    settings = cfg.trainer_settings()
    if cfg.architecture == "double":
        trainer = DoubleLayerTrainer(
            env,
            settings,
            cfg.variant,
            master_seed=cfg.seed,
            scenario=cfg.scenario,
            layer2_mode="learned",
            weight_sharing=cfg.weight_sharing,
        )
    else:
        trainer = Trainer(env, settings, cfg.variant, master_seed=cfg.seed,
                          scenario=cfg.scenario)
    return env, trainer


def evaluate_greedy(trainer, cfg: ExperimentConfig, round_key: int) -> dict:
    """Greedy policy on fresh placements drawn from a dedicated stream.

    With a fixed placement the evaluation env replays the training layout.
    """
    if cfg.fixed_placement:
        env_eval = CellFreeEnv(cfg.env_params(), stream(cfg.seed, "env"))
    else:
        env_eval = CellFreeEnv(cfg.env_params(), stream(cfg.seed, "eval", round_key))
    finals = []
    per_ue = []
    for _ in range(cfg.eval_draws):
        trace = trainer.greedy_episode(env_eval)
        finals.append(trace["sum_se"][-1])
        per_ue.append(trace["rewards"][-1])
    finals = np.asarray(finals)
    return {
        "mean": float(finals.mean()),
        "std": float(finals.std()),
        "per_ue_mean": [float(x) for x in np.mean(per_ue, axis=0)],
    }


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_experiment(cfg: ExperimentConfig, out_dir, log_trajectories: bool = False) -> dict:
    """Train, evaluate periodically, and write the documented artifacts.

    Writes metrics.csv, summary.json, checkpoint.json, config.json and
    (optionally) trajectory.jsonl deterministically, plus the
    non-deterministic timing.json sidecar.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env, trainer = build_trainer(cfg)

    step_rows = []
    episode_mean_sum_se = []
    eval_rounds = []
    episode_seconds = []
    traj_lines = []
    for episode in range(cfg.episodes):
        t0 = time.perf_counter()
        metrics = trainer.train_episode()
        episode_seconds.append(time.perf_counter() - t0)
        sums = np.asarray(metrics["sum_se"], dtype=float)
        episode_mean_sum_se.append(float(sums.mean()))
        for step in range(cfg.steps):
            losses = metrics["losses"][step]
            prs = metrics["priority_stats"][step]
            row = {
                "episode": episode,
                "step": step,
                "rewards": metrics["rewards"][step],
                "sum_se": metrics["sum_se"][step],
                "critic_loss_global": losses.get("critic_loss_global", ""),
                "critic_loss_local_mean": losses.get("critic_loss_local_mean", ""),
                "layer2_critic_loss_global": losses.get("layer2_critic_loss_global", ""),
                "layer2_critic_loss_local_mean": losses.get("layer2_critic_loss_local_mean", ""),
                "pr_min": prs[0],
                "pr_mean": prs[1],
                "pr_max": prs[2],
            }
            step_rows.append(row)
            if log_trajectories:
                traj_lines.append(
                    json.dumps(
                        {
                            "episode": episode,
                            "t": step,
                            "positions": np.asarray(metrics["positions"][step]).tolist(),
                            "actions": np.asarray(metrics["actions"][step]).tolist(),
                            "rewards": np.asarray(metrics["rewards"][step]).tolist(),
                            "power_trace": list(metrics["power_trace"][step]),
                            "budgets": list(metrics["budgets"][step]),
                        },
                        sort_keys=True,
                    )
                )
        if (episode + 1) % cfg.eval_every == 0 or episode == cfg.episodes - 1:
            result = evaluate_greedy(trainer, cfg, round_key=episode)
            eval_rounds.append({"episode": episode, **result})

    convergence = detect_convergence(episode_mean_sum_se, cfg.n_conv, cfg.delta_conv)
    final_eval = eval_rounds[-1]

    # metrics.csv
    k = cfg.k_ue
    header = ["episode", "step"] + [f"se_ue{i}" for i in range(k)] + CSV_COLUMNS_FIXED
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in step_rows:
            converged = (
                "" if convergence is None else int(row["episode"] >= convergence)
            )
            writer.writerow(
                [row["episode"], row["step"]]
                + [_fmt(float(x)) for x in row["rewards"]]
                + [
                    _fmt(row["sum_se"]),
                    _fmt(row["critic_loss_global"]),
                    _fmt(row["critic_loss_local_mean"]),
                    _fmt(row["layer2_critic_loss_global"]),
                    _fmt(row["layer2_critic_loss_local_mean"]),
                    _fmt(row["pr_min"]),
                    _fmt(row["pr_mean"]),
                    _fmt(row["pr_max"]),
                    converged,
                ]
            )

    summary = {
        "version": 1,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "steps": cfg.steps,
        "scenario": cfg.scenario,
        "architecture": cfg.architecture,
        "variant": cfg.variant,
        "convergence_episode": convergence,
        "final_sum_se_mean": final_eval["mean"],
        "final_sum_se_std": final_eval["std"],
        "per_ue_final_mean": final_eval["per_ue_mean"],
        "throughput_mbps_mean": final_eval["mean"] * cfg.bandwidth_mhz,
        "episode_mean_sum_se": episode_mean_sum_se,
        "eval": eval_rounds,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out / "config.json").write_text(dump_config(cfg), encoding="utf-8")
    (out / "checkpoint.json").write_text(
        json.dumps(trainer.state_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )
    if log_trajectories:
        (out / "trajectory.jsonl").write_text(
            "\n".join(traj_lines) + "\n", encoding="utf-8"
        )
    # timings are hardware-dependent and live outside the deterministic set
    (out / "timing.json").write_text(
        json.dumps(
            {
                "wall_clock_s_per_episode": float(np.mean(episode_seconds)),
                "total_s": float(np.sum(episode_seconds)),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return summary


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir,
          log_trajectories: bool = False) -> list[dict]:
    """One run per axis value; merged results in sweep.csv."""
    axis = "seed" if axis == "seeds" else axis
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: expected one of {sorted(SWEEP_AXES)}, got {axis!r}")
    cast = SWEEP_AXES[axis]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, value in enumerate(values):
        sub_cfg = dataclasses.replace(cfg, **{axis: cast(value)})
        summary = run_experiment(sub_cfg, out / f"point_{i:03d}",
                                 log_trajectories=log_trajectories)
        rows.append(
            {
                "axis": axis,
                "value": cast(value),
                "seed": sub_cfg.seed,
                "config_hash": summary["config_hash"],
                "convergence_episode": summary["convergence_episode"],
                "final_sum_se_mean": summary["final_sum_se_mean"],
                "final_sum_se_std": summary["final_sum_se_std"],
            }
        )
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["axis", "value", "seed", "config_hash", "convergence_episode",
             "final_sum_se_mean", "final_sum_se_std"]
        )
        for r in rows:
            writer.writerow(
                [
                    r["axis"],
                    _fmt(r["value"]) if isinstance(r["value"], float) else r["value"],
                    r["seed"],
                    r["config_hash"],
                    "" if r["convergence_episode"] is None else r["convergence_episode"],
                    _fmt(r["final_sum_se_mean"]),
                    _fmt(r["final_sum_se_std"]),
                ]
            )
    return rows

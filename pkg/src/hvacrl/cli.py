"""Command-line entry point: train, evaluate, baseline, compare, generators.

Every run writes into a fresh timestamped directory under the output root
(--out, else $HVACRL_OUT_DIR, else ./runs): a manifest with the resolved
config snapshot, per-episode CSV summaries, per-step JSONL traces and
network checkpoints.  Re-running never mutates earlier run directories.

Exit codes: 0 success, 2 configuration/input errors, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .agents import QLearner
from .neural import QNetwork
from .occupancy import generate_schedule, save_schedule
from .reward import RewardConfig
from .thermal import generate_weather, save_weather
from .training import (
    ControlTeam,
    DivergenceError,
    EVAL_WEEK_HOURS,
    EpisodeMetrics,
    TrainingConfig,
    TrainingSink,
    TrainResult,
    build_world,
    evaluate,
    evaluation_team,
    train,
)

EXIT_CONFIG_ERROR = 2
EXIT_DIVERGENCE = 3

EPISODE_CSV_HEADER = ["episode", "E_total", "M_total", "mean_reward", "epsilon", "lr", "seconds"]

# Desk preset: the published protocol shrunk 25x for commodity hardware.
# Structure is unchanged (three phases, sharing, schedules); the learning
# rate runs far below the published 0.8 -> 0.01 endpoints, which blow up
# Adam at this scale (kept verbatim in the "paper" preset).
PRESETS: Dict[str, dict] = {
    "paper": {},
    "desk": {
        "hidden_dims": [32, 32],
        "batch_size": 24,
        "pretraining_episodes": 500,
        "main_episodes": 500,
        "individual_episodes": 50,
        "lr_milestones": [[0.0, 0.003], [0.25, 0.0015], [0.5, 0.0008], [0.75, 0.0004]],
    },
}


class ConfigError(ValueError):
    pass


def resolve_config(path: Optional[str], overrides: Optional[dict] = None) -> Tuple[TrainingConfig, str]:
    """Build a TrainingConfig from preset + config file + CLI overrides.

    Returns the config and a human-readable setting label used to group
    runs of the same setting across seeds.
    """
    raw: dict = {}
    label_parts: List[str] = []
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        label_parts.append(p.stem)
    preset_name = raw.pop("preset", "desk" if path is None else None)
    merged: dict = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset_name])
        label_parts.insert(0, preset_name)
    merged.update(raw)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})

    scale = merged.pop("episodes_scale", None)
    if scale is not None:
        episode_defaults = {
            "pretraining_episodes": 12500,
            "main_episodes": 12500,
            "individual_episodes": 250,
        }
        for key, default in episode_defaults.items():
            merged[key] = max(1, int(round(merged.get(key, default) * float(scale))))

    reward_raw = merged.pop("reward", {})
    try:
        reward = RewardConfig(**reward_raw)
    except TypeError as exc:
        raise ConfigError(f"bad reward config: {exc}") from exc

    for key in ("hidden_dims", "controlled_zones"):
        if key in merged and merged[key] is not None:
            merged[key] = tuple(merged[key])
    if "lr_milestones" in merged:
        merged["lr_milestones"] = tuple((float(f), float(v)) for f, v in merged["lr_milestones"])
    try:
        config = TrainingConfig(reward=reward, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training config: {exc}") from exc

    # verify referenced files up front so failures name the path
    for file_key in ("weather_path", "schedule_path", "building_path"):
        value = getattr(config, file_key)
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{file_key.replace('_', ' ')} does not exist: {value}")

    label_parts.append(config.pretraining_mode)
    label_parts.append(f"R{config.reward.ratio:g}")
    if config.controlled_zones is not None:
        label_parts.append("zones" + "-".join(str(z) for z in config.controlled_zones))
    return config, "|".join(label_parts)


def out_root(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get("HVACRL_OUT_DIR") or "runs")


def make_run_dir(root: Path, kind: str, seed: Optional[int] = None) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    suffix = f"-s{seed}" if seed is not None else ""
    base = f"{kind}-{stamp}{suffix}"
    path = root / base
    counter = 1
    while path.exists():
        path = root / f"{base}-{counter}"
        counter += 1
    path.mkdir(parents=True)
    return path


def _config_snapshot(config: TrainingConfig) -> dict:
    doc = asdict(config)
    doc["reward"] = asdict(config.reward)
    return doc


def write_manifest(run_dir: Path, doc: dict) -> None:
    (run_dir / "manifest.json").write_text(json.dumps(doc, indent=2, default=list))


def _round(value: float, digits: int) -> float:
    return float(round(value, digits))


class FileSink(TrainingSink):
    """Streams per-episode CSV rows, per-step JSONL and phase checkpoints."""

    def __init__(self, run_dir: Path):
        self.run_dir = run_dir
        self.checkpoint_dir = run_dir / "checkpoints"
        self.checkpoint_dir.mkdir(exist_ok=True)
        self._episodes = open(run_dir / "episodes.csv", "w", newline="")
        self._episodes_writer = csv.writer(self._episodes)
        self._episodes_writer.writerow(EPISODE_CSV_HEADER)
        self._steps = open(run_dir / "steps.jsonl", "w")

    def on_episode(self, row: dict, metrics: EpisodeMetrics) -> None:
        self._episodes_writer.writerow(
            [
                row["episode"],
                repr(_round(row["E_total"], 6)),
                repr(_round(row["M_total"], 6)),
                repr(_round(row["mean_reward"], 9)),
                repr(_round(row["epsilon"], 9)),
                repr(row["lr"]),
                f"{row['seconds']:.3f}",
            ]
        )
        for t in range(metrics.steps):
            self._steps.write(
                json.dumps(
                    {
                        "episode": row["episode"],
                        "t": t,
                        "e_all": _round(metrics.e_all[t], 4),
                        "e_flat": _round(metrics.e_flat[t], 4),
                        "complaints": [_round(c, 4) for c in metrics.complaints[t]],
                        "reward": _round(metrics.rewards[t], 6),
                        "setpoints": metrics.setpoints[t],
                        "zone_temps": [_round(x, 3) for x in metrics.zone_temps[t]],
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )

    def on_phase_end(self, phase: str, learners) -> None:
        if phase == "pretrain":
            learners[0].online.save(self.checkpoint_dir / "pretrained.json")
        elif phase == "shared":
            learners[0].online.save(self.checkpoint_dir / "shared.json")
        elif phase in ("individual", "main"):
            manifest = {}
            for zone, learner in enumerate(learners):
                if learner is None:
                    continue
                name = f"agent{zone}.json"
                learner.online.save(self.checkpoint_dir / name)
                manifest[name] = zone
            (self.checkpoint_dir / "agents.json").write_text(json.dumps(manifest, indent=2))

    def on_phase_start(self, phase: str, team) -> None:
        if phase == "individual":
            for slot in team.slots:
                slot.learner.online.save(
                    self.checkpoint_dir / f"individual_start_agent{slot.obs_zone}.json"
                )

    def close(self) -> None:
        self._episodes.close()
        self._steps.close()


def _write_eval(run_dir: Path, name: str, result, n_zones: int) -> List[str]:
    """Write an evaluation summary CSV and its per-step trace."""
    csv_path = run_dir / f"{name}.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["E_total", "M_total"]
        header += [f"zone{z}_E" for z in range(n_zones)]
        header += [f"zone{z}_M" for z in range(n_zones)]
        writer.writerow(header)
        row = [repr(_round(result.e_total, 6)), repr(_round(result.m_total, 6))]
        row += [repr(_round(result.metrics.zone_e_total(z), 6)) for z in range(n_zones)]
        row += [repr(_round(result.metrics.zone_m_total(z), 6)) for z in range(n_zones)]
        writer.writerow(row)
    trace_path = run_dir / f"{name}_steps.jsonl"
    with open(trace_path, "w") as f:
        m = result.metrics
        for t in range(m.steps):
            f.write(
                json.dumps(
                    {
                        "t": t,
                        "e_all": _round(m.e_all[t], 4),
                        "complaints": [_round(c, 4) for c in m.complaints[t]],
                        "setpoints": m.setpoints[t],
                        "zone_temps": [_round(x, 3) for x in m.zone_temps[t]],
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    return [csv_path.name, trace_path.name]


def _read_eval_csv(path: Path) -> dict:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        row = next(reader)
    return {k: float(v) for k, v in row.items()}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    overrides = {"seed": args.seed, "episodes_scale": args.episodes_scale}
    if args.pretraining is not None:
        mode = {"partial": "partial_rule_based"}.get(args.pretraining, args.pretraining)
        overrides["pretraining_mode"] = mode
    try:
        config, label = resolve_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    run_dir = make_run_dir(out_root(args.out), "train", config.seed)
    manifest = {
        "kind": "train",
        "setting": label,
        "seed": config.seed,
        "version": __version__,
        "config": _config_snapshot(config),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    write_manifest(run_dir, manifest)
    sink = FileSink(run_dir)
    try:
        result = train(config, sink)
    except DivergenceError as exc:
        sink.close()
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    sink.close()
    world = build_world(config)
    eval_result = evaluate(world, evaluation_team(result, world.n_zones), EVAL_WEEK_HOURS)
    outputs = ["manifest.json", "episodes.csv", "steps.jsonl"]
    outputs += _write_eval(run_dir, "eval", eval_result, world.n_zones)
    outputs += sorted(p.relative_to(run_dir).as_posix() for p in (run_dir / "checkpoints").iterdir())
    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    manifest["outputs"] = outputs
    write_manifest(run_dir, manifest)
    print(f"run dir: {run_dir}")
    print(
        f"eval week: E_total={eval_result.e_total:.1f} kWh, M_total={eval_result.m_total:.2f} K"
    )
    return 0


def cmd_baseline(args) -> int:
    try:
        config, label = resolve_config(args.config, {"seed": args.seed})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    run_dir = make_run_dir(out_root(args.out), "baseline")
    world = build_world(config)
    result = evaluate(world, ControlTeam.all_rule_based(world.n_zones), EVAL_WEEK_HOURS)
    manifest = {
        "kind": "baseline",
        "setting": label,
        "version": __version__,
        "config": _config_snapshot(config),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    outputs = ["manifest.json"]
    outputs += _write_eval(run_dir, "baseline", result, world.n_zones)
    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    manifest["outputs"] = outputs
    write_manifest(run_dir, manifest)
    print(f"run dir: {run_dir}")
    print(f"baseline week: E_total={result.e_total:.1f} kWh, M_total={result.m_total:.2f} K")
    return 0


def _load_learners(run_dir: Path, config: TrainingConfig) -> List[Optional[QLearner]]:
    ck = run_dir / "checkpoints"
    mapping_path = ck / "agents.json"
    if not mapping_path.exists():
        raise ConfigError(f"{run_dir} has no agent checkpoints (agents.json missing)")
    mapping = json.loads(mapping_path.read_text())
    learners: List[Optional[QLearner]] = [None] * (max(mapping.values()) + 1)
    for name, zone in mapping.items():
        net = QNetwork.load(ck / name)
        learner = QLearner(net.layer_sizes, variant=config.variant)
        learner.online.copy_params_from(net)
        learner.target.copy_params_from(net)
        learners[zone] = learner
    return learners


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        print(f"error: no manifest in {run_dir}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    manifest = json.loads(manifest_path.read_text())
    try:
        config = _config_from_snapshot(manifest["config"])
        learners = _load_learners(run_dir, config)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    world = build_world(config)
    if config.controlled_zones is not None:
        team = ControlTeam.custom(
            world.n_zones, [(z, learners[z]) for z in config.controlled_zones]
        )
    else:
        team = ControlTeam.individual(world.n_zones, learners)
    result = evaluate(world, team, EVAL_WEEK_HOURS)
    out_dir = make_run_dir(out_root(args.out), "eval")
    outputs = ["manifest.json"]
    outputs += _write_eval(out_dir, "eval", result, world.n_zones)
    write_manifest(
        out_dir,
        {
            "kind": "eval",
            "source_run": str(run_dir),
            "setting": manifest.get("setting", ""),
            "version": __version__,
            "config": manifest["config"],
            "outputs": outputs,
        },
    )
    print(f"run dir: {out_dir}")
    print(f"eval week: E_total={result.e_total:.1f} kWh, M_total={result.m_total:.2f} K")
    return 0


def _config_from_snapshot(snapshot: dict) -> TrainingConfig:
    doc = dict(snapshot)
    reward = RewardConfig(**doc.pop("reward"))
    for key in ("hidden_dims", "controlled_zones"):
        if doc.get(key) is not None:
            doc[key] = tuple(doc[key])
    doc["lr_milestones"] = tuple((float(f), float(v)) for f, v in doc["lr_milestones"])
    return TrainingConfig(reward=reward, **doc)


def cmd_compare(args) -> int:
    baseline_row = None
    agent_runs: List[dict] = []
    for d in args.runs:
        run_dir = Path(d)
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.exists():
            print(f"error: no manifest in {run_dir}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        manifest = json.loads(manifest_path.read_text())
        ratio = manifest["config"]["reward"]["lambda_m"] / manifest["config"]["reward"]["lambda_e"]
        if manifest["kind"] == "baseline":
            baseline_row = {
                "eval": _read_eval_csv(run_dir / "baseline.csv"),
                "setting": manifest.get("setting", "baseline"),
                "ratio": ratio,
            }
        else:
            agent_runs.append(
                {
                    "eval": _read_eval_csv(run_dir / "eval.csv"),
                    "setting": manifest.get("setting", run_dir.name),
                    "ratio": ratio,
                }
            )
    if baseline_row is None:
        print(
            "error: no baseline run among the inputs; run `hvacrl baseline` first "
            "and pass its run directory",
            file=sys.stderr,
        )
        return EXIT_CONFIG_ERROR
    e_base = baseline_row["eval"]["E_total"]
    m_base = baseline_row["eval"]["M_total"]
    groups: Dict[str, List[dict]] = {}
    for run in agent_runs:
        groups.setdefault(run["setting"], []).append(run)
    rows = [
        {
            "run": baseline_row["setting"],
            "ratio_lambda": baseline_row["ratio"],
            "energy_savings_pct": 0.0,
            "complaints_ratio": 1.0,
        }
    ]
    for setting, runs in sorted(groups.items()):
        savings = [100.0 * (e_base - r["eval"]["E_total"]) / e_base for r in runs]
        ratios = [r["eval"]["M_total"] / m_base for r in runs]
        rows.append(
            {
                "run": setting,
                "ratio_lambda": runs[0]["ratio"],
                "energy_savings_pct": float(np.mean(savings)),
                "complaints_ratio": float(np.mean(ratios)),
            }
        )
    out_path = Path(args.out_file) if args.out_file else Path("compare.csv")
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["run", "ratio_lambda", "energy_savings_pct", "complaints_ratio"])
        for row in rows:
            writer.writerow(
                [
                    row["run"],
                    repr(_round(row["ratio_lambda"], 6)),
                    repr(_round(row["energy_savings_pct"], 4)),
                    repr(_round(row["complaints_ratio"], 4)),
                ]
            )
    for row in rows:
        print(
            f"{row['run']}: R={row['ratio_lambda']:g} "
            f"savings={row['energy_savings_pct']:.2f}% "
            f"complaints-ratio={row['complaints_ratio']:.3f}"
        )
    print(f"wrote {out_path}")
    return 0


def cmd_gen_schedule(args) -> int:
    save_schedule(generate_schedule(args.seed), args.out_file)
    print(f"wrote {args.out_file}")
    return 0


def cmd_gen_weather(args) -> int:
    save_weather(generate_weather(args.seed, days=args.days), args.out_file)
    print(f"wrote {args.out_file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvacrl",
        description="Multi-agent RL heating-setpoint control on a five-zone thermal model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the full training protocol")
    p_train.add_argument("--config", help="JSON config file (preset + overrides)")
    p_train.add_argument("--seed", type=int, help="training seed override")
    p_train.add_argument(
        "--pretraining", choices=["none", "broadcast", "partial"], help="pretraining mode override"
    )
    p_train.add_argument("--episodes-scale", type=float, dest="episodes_scale",
                         help="scale factor applied to all episode counts")
    p_train.add_argument("--out", help="output root (default $HVACRL_OUT_DIR or ./runs)")
    p_train.set_defaults(func=cmd_train)

    p_base = sub.add_parser("baseline", help="evaluate the rule-based baseline")
    p_base.add_argument("--config", help="JSON config file")
    p_base.add_argument("--seed", type=int, help="config seed override")
    p_base.add_argument("--out", help="output root")
    p_base.set_defaults(func=cmd_baseline)

    p_eval = sub.add_parser("evaluate", help="evaluate a trained run on the reference week")
    p_eval.add_argument("--run", required=True, help="training run directory")
    p_eval.add_argument("--out", help="output root")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="aggregate runs into a savings/complaints CSV")
    p_cmp.add_argument("runs", nargs="+", help="run directories (include one baseline run)")
    p_cmp.add_argument("--out", dest="out_file", help="output CSV path (default compare.csv)")
    p_cmp.set_defaults(func=cmd_compare)

    p_gs = sub.add_parser("gen-schedule", help="write a seeded occupancy schedule CSV")
    p_gs.add_argument("--seed", type=int, default=7)
    p_gs.add_argument("--out", dest="out_file", required=True)
    p_gs.set_defaults(func=cmd_gen_schedule)

    p_gw = sub.add_parser("gen-weather", help="write a seeded synthetic weather CSV")
    p_gw.add_argument("--seed", type=int, default=11)
    p_gw.add_argument("--days", type=int, default=31)
    p_gw.add_argument("--out", dest="out_file", required=True)
    p_gw.set_defaults(func=cmd_gen_weather)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

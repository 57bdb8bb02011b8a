"""Command line entry point: ``tpmab {run,bounds,ingest,scenarios}``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import BOUND_COLUMNS, BoundInputs, TiedOptimumWarning, bound_table, log_grid
from .config import ConfigError, ExperimentConfig, load_config
from .core import TPMABError
from .engine import replicate
from .environments import scenario_library, scenario_names
from .ingest import BadRow, build_pool, dumps_pool, parse_sessions, pool_stats

logger = logging.getLogger("tpmab")


def _g(x: float) -> str:
    return "%.17g" % x


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label).strip("_")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    for name in ("seed", "runs", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = Path(args.out or cfg.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    env = cfg.environment
    results = replicate(
        env, cfg.policies, cfg.horizon, cfg.runs,
        base_seed=cfg.seed, workers=cfg.workers,
        shared_randomness=cfg.shared_randomness, checkpoints=cfg.checkpoints,
    )

    files = {}
    summary = []
    for label, res in results.items():
        name = f"trajectory_{_slug(label)}.csv"
        lines = ["checkpoint_round,mean_regret,ci_half_width,runs"]
        for r, m, h in zip(res.rounds, res.mean, res.half_width):
            lines.append(f"{int(r)},{_g(m)},{_g(h)},{res.runs}")
        text = "\n".join(lines) + "\n"
        _write_text(out / name, text)
        files[name] = hashlib.sha256(text.encode()).hexdigest()
        summary.append({
            "policy": label,
            "final_regret": res.final_mean,
            "ci_half_width": None if np.isnan(res.final_half_width) else res.final_half_width,
            "regret_percent": res.regret_percent,
            "regret_percent_ci_half_width": res.regret_percent_half_width,
            "mean_pulls": [float(x) for x in res.pull_counts.mean(axis=0)],
            "trajectory": name,
        })
    summary_text = json.dumps({
        "environment": env.name,
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "reference": "Delayed-UCB1" if cfg.has_reference else None,
        "policies": summary,
    }, indent=2) + "\n"
    _write_text(out / "summary.json", summary_text)
    files["summary.json"] = hashlib.sha256(summary_text.encode()).hexdigest()

    manifest = {
        "tpmab_version": __version__,
        "numpy_version": np.__version__,
        "config": str(args.config),
        "config_sha256": cfg.source_sha256,
        "overrides": {k: getattr(args, k) for k in ("seed", "runs", "workers") if getattr(args, k) is not None},
        "seeds": {"base": cfg.seed, "runs": cfg.runs, "rule": "seed of run r = base + r"},
        "shared_randomness": cfg.shared_randomness,
        "outputs": files,
    }
    _write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    for row in summary:
        pct = "" if row["regret_percent"] is None else f"  R%={row['regret_percent']:.2f}"
        print(f"{row['policy']:<20} regret={row['final_regret']:.1f}{pct}")
    print(f"wrote {len(files) + 1} files to {out}")
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, require_policies=False)
    b = cfg.bounds
    if "horizons" in b:
        horizons = np.asarray(b["horizons"], dtype=float)
    else:
        horizons = log_grid(int(b.get("t_min", 10)), int(b.get("t_max", cfg.horizon)), int(b.get("per_decade", 10)))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TiedOptimumWarning)
        inputs = BoundInputs.from_env(cfg.environment)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    table = bound_table(inputs, horizons)
    lines = [",".join(BOUND_COLUMNS)]
    for n in range(len(horizons)):
        lines.append(",".join(_g(table[c][n]) if c != "T" else str(int(table[c][n])) for c in BOUND_COLUMNS))
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        if out.suffix != ".csv":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "bounds.csv"
        _write_text(out, text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        with open(args.csv, encoding="utf-8", newline="") as fh:
            records = parse_sessions(fh)
    except BadRow as exc:
        for err in exc.all_errors:
            print(f"{args.csv}: {err}", file=sys.stderr)
        return 1
    pool = build_pool(records, n_songs=args.songs, top=args.top)
    spec = pool.spec
    print(f"spec: K={spec.num_arms} tau_max={spec.tau_max} alpha={spec.alpha} phi={spec.phi} R={spec.max_reward[0]:g}")
    print(f"dropped: {pool.dropped_incomplete} incomplete sessions, {pool.dropped_switch} playlist switches")
    mu, sd = pool_stats(pool)
    print("arm,playlist,sessions,mean,std")
    for i, pid in enumerate(pool.playlist_ids):
        print(f"{i},{pid},{len(pool.vectors[i])},{mu[i]:.2f},{sd[i]:.2f}")
    out = Path(args.out or Path(args.csv).with_suffix(".pool"))
    if out.is_dir():
        out = out / "pool.txt"
    _write_text(out, dumps_pool(pool))
    print(f"wrote {out}")
    return 0


def cmd_scenarios(args: argparse.Namespace) -> int:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["name", "K", "tau_max", "alpha", "best_mean"])
    for name in scenario_names():
        env = scenario_library(name)
        s = env.spec
        writer.writerow([name, s.num_arms, s.tau_max, s.alpha, _g(env.true_means().max())])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpmab", description="Bandits with temporally partitioned rewards.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="replicate policies on an environment and write regret tables")
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--out", help="output directory (default: experiment.out or ./results)")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--runs", type=int, help="override the number of runs")
    p.add_argument("--workers", type=int, help="override the worker process count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="evaluate the theoretical regret curves for an environment")
    p.add_argument("--config", required=True, help="TOML file with an environment and optional [bounds]")
    p.add_argument("--out", help="CSV file or directory (default: stdout)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("ingest", help="turn a listening-session CSV into a replay pool")
    p.add_argument("csv", help="CSV with header session_id,playlist_id,position,skip_level")
    p.add_argument("--out", help="pool file to write (default: <csv>.pool)")
    p.add_argument("--top", type=int, default=6, help="number of playlists to keep (default 6)")
    p.add_argument("--songs", type=int, default=20, help="songs per session (default 20)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("scenarios", help="list the built-in scenario library")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TPMABError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

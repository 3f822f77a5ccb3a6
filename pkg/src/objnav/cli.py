"""Command-line front end.

Subcommands::

    objnav run     --config arc.cfg --seeds 1..10 [--out DIR] [--set section.key=value ...]
    objnav sweep   --config hover.cfg [--seeds 0] [--out DIR]
    objnav replay  --streams run_seed1.npz [--out DIR]
    objnav metrics --trajectory run_seed1.csv [--json OUT]

The output directory defaults to ``$OBJNAV_OUTPUT_DIR`` or ``./objnav_out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .harness import compute_metrics, run_closed_loop, run_offline
from .io import (
    aggregate,
    load_streams,
    metrics_from_csv,
    metrics_record,
    save_streams,
    write_json,
    write_trajectory_csv,
)

OUTPUT_ENV = "OBJNAV_OUTPUT_DIR"
SWEEP_DISTANCES = (3.0, 3.3, 3.6)
SWEEP_ANGLES = (0.0, 25.0, 50.0)


class UsageError(ValueError):
    pass


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1,4,7"`` or an inclusive range ``"1..10"`` (may be combined with commas)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed specification {part!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def parse_overrides(items: list[str] | None) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"override {item!r} must be section.key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _output_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUTPUT_ENV) or "objnav_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_seed(cfg: ScenarioConfig, seed: int, out: Path, stem: str) -> dict:
    cfg = cfg.replace({"run.seed": str(seed)})
    log = run_closed_loop(cfg)
    write_trajectory_csv(log, out / f"{stem}_seed{seed}.csv")
    save_streams(log, cfg, out / f"{stem}_seed{seed}.npz")
    rec = metrics_record(compute_metrics(log), seed)
    rec["completed"] = log.completed
    rec["diverged"] = log.diverged
    write_json(rec, out / f"{stem}_seed{seed}_metrics.json")
    return rec


def _map(fn, args: list[tuple], jobs: int) -> list:
    if jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*args)))


def cmd_run(ns: argparse.Namespace) -> int:
    cfg = load_config(ns.config, parse_overrides(ns.set))
    seeds = parse_seeds(ns.seeds)
    out = _output_dir(ns.out)
    stem = Path(ns.config).stem
    records = _map(_run_seed, [(cfg, s, out, stem) for s in seeds], ns.jobs)
    summary = aggregate([{k: r[k] for k in r if k not in ("completed", "diverged")} for r in records])
    summary["completed"] = [r["completed"] for r in records]
    write_json(summary, out / f"{stem}_metrics.json")
    _print_table(records, summary)
    return 0 if all(r["completed"] and not r["diverged"] for r in records) else 2


def _print_table(records: list[dict], summary: dict) -> None:
    print(f"{'seed':>6} {'RMSE [m]':>10} {'RMSE [deg]':>11} {'Max PE [m]':>11}")
    for r in records:
        print(f"{r['seed']:>6} {r['rmse_pos_m']:10.3f} {r['rmse_rot_deg']:11.2f} {r['max_pe_m']:11.3f}")
    if "mean" in summary:
        m, s = summary["mean"], summary["std"]
        print(f"{'mean':>6} {m['rmse_pos_m']:10.3f} {m['rmse_rot_deg']:11.2f} {m['max_pe_m']:11.3f}")
        print(f"{'std':>6} {s['rmse_pos_m']:10.3f} {s['rmse_rot_deg']:11.2f} {s['max_pe_m']:11.3f}")


def _sweep_cell(cfg: ScenarioConfig, d: float, angle: float, seed: int) -> dict:
    cfg = cfg.replace({"plan.d": repr(d), "run.start_angle_deg": repr(angle), "run.seed": str(seed)})
    m = compute_metrics(run_closed_loop(cfg))
    return {
        "distance_m": d,
        "angle_deg": angle,
        "seed": seed,
        "pos_err_mean_m": m.mean_pe,
        "rot_err_mean_deg": m.mean_re,
        "rmse_pos_m": m.rmse_pos,
        "rmse_rot_deg": m.rmse_rot,
    }


def cmd_sweep(ns: argparse.Namespace) -> int:
    cfg = load_config(ns.config, parse_overrides(ns.set))
    seeds = parse_seeds(ns.seeds)
    out = _output_dir(ns.out)
    cells = [(cfg, d, a, s) for d in SWEEP_DISTANCES for a in SWEEP_ANGLES for s in seeds]
    rows = _map(_sweep_cell, cells, ns.jobs)
    table = []
    for d in SWEEP_DISTANCES:
        for a in SWEEP_ANGLES:
            sel = [r for r in rows if r["distance_m"] == d and r["angle_deg"] == a]
            table.append({
                "distance_m": d,
                "angle_deg": a,
                "pos_err_mean_m": float(np.mean([r["pos_err_mean_m"] for r in sel])),
                "rot_err_mean_deg": float(np.mean([r["rot_err_mean_deg"] for r in sel])),
            })
    stem = Path(ns.config).stem
    write_json({"seeds": seeds, "cells": table, "runs": rows}, out / f"{stem}_sweep.json")
    header = "distance [m] | " + " | ".join(f"{a:>14.0f} deg" for a in SWEEP_ANGLES)
    print(header)
    for d in SWEEP_DISTANCES:
        cells_d = [c for c in table if c["distance_m"] == d]
        print(f"{d:12.1f} | " + " | ".join(
            f"{c['pos_err_mean_m']:.3f} m / {c['rot_err_mean_deg']:.2f}" for c in cells_d
        ))
    return 0


def cmd_replay(ns: argparse.Namespace) -> int:
    path = Path(ns.streams)
    if not path.is_file():
        raise UsageError(f"stream archive not found: {path}")
    cfg, recorded = load_streams(path)
    if ns.set:
        cfg = cfg.replace(parse_overrides(ns.set))
    log = run_offline(
        cfg,
        recorded,
        drop_landmarks_after=ns.drop_landmarks_after,
        landmark_noise_scale=ns.noise_scale,
    )
    out = _output_dir(ns.out)
    stem = path.stem + "_replay"
    write_trajectory_csv(log, out / f"{stem}.csv")
    try:
        rec = metrics_record(compute_metrics(log), log.seed)
    except ValueError:
        rec = None
    if rec is not None:
        write_json(rec, out / f"{stem}_metrics.json")
        print(json.dumps(rec, indent=2))
    return 0


def cmd_metrics(ns: argparse.Namespace) -> int:
    path = Path(ns.trajectory)
    if not path.is_file():
        raise UsageError(f"trajectory file not found: {path}")
    rec = metrics_record(metrics_from_csv(path), ns.seed if ns.seed is not None else _seed_from_name(path))
    text = json.dumps(rec, indent=2)
    if ns.json:
        Path(ns.json).write_text(text + "\n")
    print(text)
    return 0


def _seed_from_name(path: Path) -> int:
    stem = path.stem
    if "_seed" in stem:
        tail = stem.rsplit("_seed", 1)[1].split("_")[0]
        if tail.lstrip("-").isdigit():
            return int(tail)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objnav", description="Object-relative navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds_default=None):
        p.add_argument("--config", required=True, help="scenario config (INI)")
        p.add_argument("--seeds", default=seeds_default, required=seeds_default is None,
                       help="seed list, e.g. 1..10 or 1,3,5")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./objnav_out)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    common(sub.add_parser("run", help="closed-loop runs, one per seed"))
    common(sub.add_parser("sweep", help="hover grid over distance and angle"), seeds_default="0")

    p = sub.add_parser("replay", help="re-run the estimator on recorded streams")
    p.add_argument("--streams", required=True, help=".npz archive written by 'run'")
    p.add_argument("--out")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--drop-landmarks-after", type=float, default=None, metavar="T",
                   help="discard camera measurements after T seconds")
    p.add_argument("--noise-scale", type=float, default=1.0, help="scale the filter's landmark noise")

    p = sub.add_parser("metrics", help="recompute metrics from a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", help="also write the metrics to this file")
    return parser


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "replay": cmd_replay, "metrics": cmd_metrics}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return _COMMANDS[ns.command](ns)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"objnav {ns.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

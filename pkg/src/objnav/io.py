"""Plot-ready trajectory CSVs, metrics JSON and replayable stream archives."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, parse_config
from .estimator import ImuSample
from .harness import FlightLog, Metrics, metrics_from_arrays
from .landmarks import MeasurementBatch, MeasurementNoise, RelPoseMeasurement
from .mission import GlobalPoseMeasurement

TRAJECTORY_COLUMNS = (
    ["t", "px", "py", "pz", "qx", "qy", "qz", "qw"]
    + ["est_px", "est_py", "est_pz", "est_qx", "est_qy", "est_qz", "est_qw"]
    + ["var_px", "var_py", "var_pz", "var_thx", "var_thy", "var_thz"]
    + ["phase"]
)
TRAJECTORY_UNITS = (
    "# units: t [s]; px..pz, est_px..est_pz [m]; q*, est_q* [unit quaternion x,y,z,w]; "
    "var_p* [m^2]; var_th* [rad^2]; phase [mission phase name]"
)
METRIC_KEYS = ["rmse_pos_m", "rmse_pos_std", "rmse_rot_deg", "rmse_rot_std", "max_pe_m"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_csv(log: FlightLog) -> str:
    a = log.arrays()
    buf = io.StringIO()
    buf.write(TRAJECTORY_UNITS + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for i in range(len(a["t"])):
        row = [a["t"][i], *a["truth_p"][i], *a["truth_q"][i], *a["est_p"][i], *a["est_q"][i], *a["cov"][i]]
        w.writerow([_fmt(v) for v in row] + [a["phase"][i]])
    return buf.getvalue()


def write_trajectory_csv(log: FlightLog, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(log))
    return path


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Arrays ``t, truth_p, truth_q, est_p, est_q, cov, phase`` from a trajectory CSV."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0] != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: not a trajectory CSV (unexpected header)")
    body = rows[1:]
    num = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(-1, len(TRAJECTORY_COLUMNS) - 1)
    return {
        "t": num[:, 0],
        "truth_p": num[:, 1:4],
        "truth_q": num[:, 4:8],
        "est_p": num[:, 8:11],
        "est_q": num[:, 11:15],
        "cov": num[:, 15:21],
        "phase": np.array([r[-1] for r in body]),
    }


def metrics_from_csv(path: str | Path) -> Metrics:
    a = read_trajectory_csv(path)
    return metrics_from_arrays(a["truth_p"], a["truth_q"], a["est_p"], a["est_q"], a["phase"])


def metrics_record(m: Metrics, seed: int) -> dict:
    d = m.as_dict(seed)
    return {k: d[k] for k in METRIC_KEYS + ["seed"]}


def aggregate(records: list[dict]) -> dict:
    """Per-run rows plus mean/std rows over the runs."""
    out = {"runs": records}
    if records:
        out["mean"] = {k: float(np.mean([r[k] for r in records])) for k in METRIC_KEYS}
        out["std"] = {k: float(np.std([r[k] for r in records])) for k in METRIC_KEYS}
    return out


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path


# stream archives

def save_streams(log: FlightLog, cfg: ScenarioConfig, path: str | Path) -> Path:
    """Store the recorded sensor streams (and truth) needed by ``run_offline``."""
    a = log.arrays()
    imu = np.array([[s.t, *s.accel, *s.gyro] for s in log.imu]).reshape(-1, 7)
    meas = [
        [tick, b.t, m.object_id if m.object_id is not None else -1, *m.p, *m.q]
        for tick, b in log.batches
        for m in b.measurements
    ]
    batch_index = np.array([[tick, b.t] for tick, b in log.batches]).reshape(-1, 2)
    glob = np.array([[tick, m.t, *m.p, *m.q] for tick, m in log.global_meas]).reshape(-1, 9)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            config=np.array(cfg.to_ini()),
            seed=np.array(log.seed),
            imu=imu,
            batch_index=batch_index,
            measurements=np.array(meas, dtype=float).reshape(-1, 10),
            global_meas=glob,
            return_tick=np.array(-1 if log.return_tick is None else log.return_tick),
            completed=np.array(log.completed),
            truth_p=a["truth_p"],
            truth_q=a["truth_q"],
        )
    return path


def load_streams(path: str | Path) -> tuple[ScenarioConfig, FlightLog]:
    with np.load(path, allow_pickle=False) as z:
        cfg = parse_config(str(z["config"]))
        log = FlightLog(seed=int(z["seed"]))
        log.imu = [ImuSample(r[0], r[1:4].copy(), r[4:7].copy()) for r in z["imu"]]
        by_tick: dict[int, list[RelPoseMeasurement]] = {}
        for r in z["measurements"]:
            oid = int(r[2])
            m = RelPoseMeasurement(r[1], r[3:6].copy(), r[6:10].copy(), None if oid < 0 else oid)
            # keep the recorded bits: re-normalizing a unit quaternion may perturb the last ulp
            m.q = r[6:10].copy()
            by_tick.setdefault(int(r[0]), []).append(m)
        log.batches = [(int(k), MeasurementBatch(t, by_tick.get(int(k), []))) for k, t in z["batch_index"]]
        noise: MeasurementNoise = cfg.global_noise()
        log.global_meas = [
            (int(r[0]), GlobalPoseMeasurement(r[1], r[2:5].copy(), r[5:9].copy(), noise)) for r in z["global_meas"]
        ]
        rt = int(z["return_tick"])
        log.return_tick = None if rt < 0 else rt
        log.completed = bool(z["completed"])
        log.truth_p = list(z["truth_p"])
        log.truth_q = list(z["truth_q"])
    return cfg, log

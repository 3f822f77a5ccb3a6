"""Deterministic closed-loop simulation, offline replay and evaluation metrics.

The truth vehicle is a kinematic point with yaw: the controller commands a
world acceleration and a yaw rate, held constant over each IMU period, so the
truth trajectory is exactly consistent with the synthesized IMU stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .config import ScenarioConfig
from .estimator import (
    P_WI,
    TH_WI,
    FilterState,
    ImuSample,
    NoiseParams,
    init_filter,
    propagate,
)
from .geometry import (
    Pose,
    quat_angle,
    quat_multiply,
    quat_to_rotmat,
    small_angle_quat,
    wrap_angle,
    yaw_of,
    yaw_quat,
)
from .landmarks import MeasurementBatch, landmark_world_position, process_batch
from .mission import (
    GlobalPoseMeasurement,
    Mission,
    MissionPhase,
    Waypoint,
    generate_arc_waypoints,
    yaw_facing,
)
from .poet_sim import simulate_batch, true_relative_pose


class DivergenceError(RuntimeError):
    pass


@dataclass
class UavTruthState:
    t: float
    p: NDArray
    v: NDArray
    q: NDArray
    a_world: NDArray = field(default_factory=lambda: np.zeros(3))
    omega_body: NDArray = field(default_factory=lambda: np.zeros(3))

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.q)

    def advance(self, dt: float) -> UavTruthState:
        """Exact integration under the held acceleration and body rate."""
        return UavTruthState(
            t=self.t + dt,
            p=self.p + self.v * dt + 0.5 * self.a_world * dt * dt,
            v=self.v + self.a_world * dt,
            q=quat_multiply(self.q, small_angle_quat(self.omega_body * dt)),
            a_world=self.a_world.copy(),
            omega_body=self.omega_body.copy(),
        )


def synthesize_imu(
    truth: UavTruthState,
    b_a: NDArray,
    b_w: NDArray,
    noise: NoiseParams,
    rng: np.random.Generator | None = None,
    dt: float = 0.005,
) -> ImuSample:
    """IMU reading for ``truth``; white noise is added only when ``rng`` is given."""
    R = quat_to_rotmat(truth.q)
    accel = R.T @ (truth.a_world - np.asarray(noise.gravity)) + b_a
    gyro = truth.omega_body + b_w
    if rng is not None:
        accel = accel + rng.standard_normal(3) * (noise.accel_noise / math.sqrt(dt))
        gyro = gyro + rng.standard_normal(3) * (noise.gyro_noise / math.sqrt(dt))
    return ImuSample(truth.t, accel, gyro)


@dataclass(frozen=True)
class ArcTrajectory:
    """Analytic constant-speed horizontal circle, yawed to face its center."""

    center: NDArray
    radius: float
    height: float
    rate: float  # bearing rate [rad/s]
    bearing0: float = 0.0

    def state(self, t: float) -> UavTruthState:
        b = self.bearing0 + self.rate * t
        c, s = math.cos(b), math.sin(b)
        r, w = self.radius, self.rate
        p = np.array([self.center[0] + r * c, self.center[1] + r * s, self.height])
        v = np.array([-r * w * s, r * w * c, 0.0])
        a = np.array([-r * w * w * c, -r * w * w * s, 0.0])
        return UavTruthState(t, p, v, yaw_quat(b + math.pi), a, np.array([0.0, 0.0, w]))


@dataclass
class FlightLog:
    """Time-indexed truth, estimate and sensor record of one run."""

    seed: int = 0
    t: list[float] = field(default_factory=list)
    truth_p: list[NDArray] = field(default_factory=list)
    truth_q: list[NDArray] = field(default_factory=list)
    est_p: list[NDArray] = field(default_factory=list)
    est_q: list[NDArray] = field(default_factory=list)
    cov: list[NDArray] = field(default_factory=list)
    phase: list[str] = field(default_factory=list)
    imu: list[ImuSample] = field(default_factory=list)
    batches: list[tuple[int, MeasurementBatch]] = field(default_factory=list)
    global_meas: list[tuple[int, GlobalPoseMeasurement]] = field(default_factory=list)
    return_tick: int | None = None
    events: list[tuple[float, str]] = field(default_factory=list)
    gates: list[tuple[float, int, bool, float]] = field(default_factory=list)
    assignments: list[tuple[float, list, list, list]] = field(default_factory=list)
    waypoints: list[Waypoint] = field(default_factory=list)
    waypoints_reached: int = 0
    # (t, object id, translation error [m], rotation error [deg]) of raw measurements
    meas_errors: list[tuple[float, int, float, float]] = field(default_factory=list)
    completed: bool = False
    diverged: bool = False

    def append(self, t: float, truth: Pose, state: FilterState, phase: MissionPhase) -> None:
        self.t.append(t)
        self.truth_p.append(truth.p.copy())
        self.truth_q.append(truth.q.copy())
        self.est_p.append(state.core.p.copy())
        self.est_q.append(state.core.q.copy())
        P = state.P
        self.cov.append(np.concatenate([np.diag(P)[P_WI], np.diag(P)[TH_WI]]))
        self.phase.append(phase.value)

    def arrays(self) -> dict[str, NDArray]:
        return {
            "t": np.asarray(self.t),
            "truth_p": np.asarray(self.truth_p).reshape(-1, 3),
            "truth_q": np.asarray(self.truth_q).reshape(-1, 4),
            "est_p": np.asarray(self.est_p).reshape(-1, 3),
            "est_q": np.asarray(self.est_q).reshape(-1, 4),
            "cov": np.asarray(self.cov).reshape(-1, 6),
            "phase": np.asarray(self.phase),
        }


class NavigationPipeline:
    """Routes sensor data through the mission phase machine into the filter.

    Shared by closed-loop simulation and offline replay so both take the same
    decisions in the same order.
    """

    def __init__(self, cfg: ScenarioConfig, state: FilterState, log: FlightLog | None = None) -> None:
        self.cfg = cfg
        self.state = state
        self.noise = cfg.imu_noise()
        self.global_noise = cfg.global_noise()
        self.mission = Mission(
            verify_batches=cfg.filter.verify_batches,
            anchor=cfg.anchor_rule(),
            use_anchor=cfg.filter.use_anchor,
            landmark_noise=cfg.landmark_noise(),
            alpha=cfg.filter.alpha,
            new_landmark_cost=cfg.filter.new_landmark_cost,
        )
        self.log = log if log is not None else FlightLog()
        self.return_requested = False
        self.t_switch: float | None = None
        self.t_return: float | None = None

    @property
    def phase(self) -> MissionPhase:
        return self.mission.phase

    def on_imu(self, sample: ImuSample, dt: float) -> None:
        self.state = propagate(self.state, sample, dt, self.noise)

    def on_camera(self, batch: MeasurementBatch) -> None:
        phase = self.mission.phase
        if phase is MissionPhase.HOVER_VERIFY:
            self.state, switched = self.mission.try_switch_to_object_relative(self.state, batch)
            if switched:
                self.t_switch = batch.t
                self.log.events.append((batch.t, "switch_to_object_relative"))
        elif phase is MissionPhase.OBJECT_RELATIVE:
            if not self.cfg.filter.gating:
                self.state, report = process_batch(
                    self.state, batch, self.mission.landmark_noise, self.mission.alpha,
                    self.mission.new_landmark_cost, gate=False,
                )
            else:
                self.state, report = self.mission.landmark_update(self.state, batch)
            for k, g in report.update.gates.items():
                self.log.gates.append((batch.t, k, g.accepted, g.distance))
            a = report.assignment
            self.log.assignments.append((batch.t, a.matched, a.new, a.discarded))

    def on_global(self, m: GlobalPoseMeasurement) -> None:
        phase = self.mission.phase
        if phase is MissionPhase.OBJECT_RELATIVE:
            if self.return_requested:
                self.state = self.mission.switch_to_global(self.state, m)
                self.t_return = m.t
                self.log.events.append((m.t, "switch_to_global"))
            return
        if self.mission.global_active:
            self.state, gate = self.mission.global_pose_update(self.state, m)

    def request_return(self) -> None:
        self.return_requested = True

    def tick(self, t: float) -> None:
        """Time-driven phase transitions."""
        phase = self.mission.phase
        if phase is MissionPhase.GLOBAL_TAKEOFF and t >= self.cfg.plan.hover_duration - 1e-9:
            self.mission.begin_verification()
            self.log.events.append((t, "begin_verification"))
        elif (
            phase is MissionPhase.RETURN_TO_GLOBAL
            and self.t_return is not None
            and t >= self.t_return + self.cfg.run.return_duration - 1e-9
        ):
            self.mission.finish()
            self.log.events.append((t, "done"))


def _anchor_center(cfg: ScenarioConfig) -> NDArray:
    """True position of the arc center: the highest object (top insulator)."""
    objs = cfg.scene_config().objects
    return max(objs, key=lambda o: o.p[2]).p.copy()


def start_pose(cfg: ScenarioConfig) -> Pose:
    center = _anchor_center(cfg)
    bearing = math.pi + math.radians(cfg.run.start_angle_deg)
    p = np.array([center[0] + cfg.plan.d * math.cos(bearing), center[1] + cfg.plan.d * math.sin(bearing), cfg.plan.h])
    return Pose(p, yaw_quat(yaw_facing(p, center)))


def initial_filter_state(cfg: ScenarioConfig, truth: Pose, rng: np.random.Generator) -> FilterState:
    std = cfg.initial_std()
    pose = truth.copy()
    if cfg.run.initial_error:
        pose = Pose(
            pose.p + rng.standard_normal(3) * std.p,
            quat_multiply(pose.q, small_angle_quat(rng.standard_normal(3) * std.theta)),
        )
    n = len(cfg.scene_config().objects)
    return init_filter(pose, std, cfg.extrinsics(), n, t=0.0)


class _Controller:
    """Bounded-velocity waypoint tracker acting on the state *estimate*."""

    def __init__(self, cfg: ScenarioConfig) -> None:
        r = cfg.run
        self.v_max = r.v_max
        self.yaw_rate_max = r.yaw_rate_max
        self.a_max = r.accel_max
        self.k_p = 1.0
        self.k_v = 2.0
        self.k_yaw = 1.5

    def command(self, state: FilterState, target: NDArray, yaw_target: float) -> tuple[NDArray, NDArray]:
        e = target - state.core.p
        v_cmd = self.k_p * e
        n = np.linalg.norm(v_cmd)
        if n > self.v_max:
            v_cmd *= self.v_max / n
        a = self.k_v * (v_cmd - state.core.v)
        n = np.linalg.norm(a)
        if n > self.a_max:
            a *= self.a_max / n
        yaw_err = wrap_angle(yaw_target - yaw_of(state.core.q))
        rate = float(np.clip(self.k_yaw * yaw_err, -self.yaw_rate_max, self.yaw_rate_max))
        return a, np.array([0.0, 0.0, rate])


def arc_route(waypoints: list[Waypoint]) -> list[Waypoint]:
    """Fly from the center bearing down to -sweep, then across to +sweep."""
    n = len(waypoints) // 2
    return waypoints[n - 1 :: -1] + waypoints[1:] if n else list(waypoints)


def _retreat(wp: Waypoint, center: NDArray, distance: float) -> Waypoint:
    d = wp.p[:2] - center[:2]
    d = d / np.linalg.norm(d)
    p = wp.p.copy()
    p[:2] += distance * d
    return Waypoint(p, wp.yaw)


def _due(tick: int, rate: float, imu_rate: float) -> bool:
    """Sensor sample due at ``tick`` for a sensor at ``rate`` on the IMU clock."""
    k_now = math.floor(tick * rate / imu_rate + 1e-9)
    k_prev = math.floor((tick - 1) * rate / imu_rate + 1e-9)
    return k_now > k_prev


def run_closed_loop(
    cfg: ScenarioConfig,
    callback: Callable[[NavigationPipeline, UavTruthState], None] | None = None,
) -> FlightLog:
    seed = cfg.run.seed
    dt = 1.0 / cfg.imu.rate
    noise = cfg.imu_noise()
    rng_imu = np.random.default_rng([seed, 1])
    rng_global = np.random.default_rng([seed, 2])
    rng_bias = np.random.default_rng([seed, 4])
    scene = cfg.scene_config()
    extr = cfg.extrinsics()
    poet = cfg.poet_model()
    plan = cfg.inspection_plan()
    global_noise = cfg.global_noise()

    pose0 = start_pose(cfg)
    truth = UavTruthState(0.0, pose0.p.copy(), np.zeros(3), pose0.q.copy())
    b_a = np.array([float(v) for v in cfg.imu.accel_bias.split()])
    b_w = np.array([float(v) for v in cfg.imu.gyro_bias.split()])

    log = FlightLog(seed=seed)
    pipe = NavigationPipeline(cfg, initial_filter_state(cfg, pose0, np.random.default_rng([seed, 3])), log)
    ctrl = _Controller(cfg)
    log.append(0.0, truth.pose, pipe.state, pipe.phase)

    hold = Waypoint(pose0.p.copy(), yaw_of(pose0.q))
    route: list[Waypoint] = []
    wp_index = 0
    facing: NDArray | None = None
    t_or_start: float | None = None
    n_steps = int(round(cfg.run.duration * cfg.imu.rate))

    for k in range(n_steps):
        # guidance
        phase = pipe.phase
        if phase is MissionPhase.OBJECT_RELATIVE and not route:
            anchor_idx = pipe.state.anchor.index if pipe.state.anchor else _highest(pipe.state)
            anchor_obj = pipe.state.objects[anchor_idx]
            facing = landmark_world_position(pipe.state, anchor_idx)
            t_or_start = truth.t
            if cfg.run.mode == "arc":
                wps = generate_arc_waypoints(anchor_obj.world_pose, plan, pipe.state.core.pose)
                log.waypoints = wps
                route = arc_route(wps) + [_retreat(wps[-1], facing, cfg.run.retreat_distance)]
            else:
                route = [Waypoint(pipe.state.core.p.copy(), yaw_facing(pipe.state.core.p, facing))]
            wp_index = 0

        if phase is MissionPhase.OBJECT_RELATIVE and route:
            target = route[min(wp_index, len(route) - 1)]
            yaw_t = yaw_facing(pipe.state.core.p, facing)
            if cfg.run.mode == "arc" and wp_index < len(route):
                if np.linalg.norm(target.p - pipe.state.core.p) < cfg.run.waypoint_tolerance:
                    wp_index += 1
                    log.waypoints_reached = wp_index
                    if wp_index == len(route):
                        pipe.request_return()
            elif cfg.run.mode == "hover" and not pipe.return_requested:
                if truth.t >= t_or_start + cfg.run.object_relative_duration - 1e-9:
                    pipe.request_return()
        else:
            if phase is MissionPhase.RETURN_TO_GLOBAL and route:
                # hold the last commanded point under global navigation
                hold = Waypoint(route[-1].p.copy(), yaw_of(pipe.state.core.q))
                route = []
            target, yaw_t = hold, hold.yaw

        a_cmd, w_cmd = ctrl.command(pipe.state, target.p, yaw_t)
        truth.a_world = a_cmd
        truth.omega_body = w_cmd

        imu = synthesize_imu(truth, b_a, b_w, noise, rng_imu if cfg.imu.noise_enabled else None, dt)
        log.imu.append(imu)
        pipe.on_imu(imu, dt)
        truth = truth.advance(dt)
        if cfg.imu.noise_enabled:
            b_a = b_a + rng_bias.standard_normal(3) * noise.accel_bias_walk * math.sqrt(dt)
            b_w = b_w + rng_bias.standard_normal(3) * noise.gyro_bias_walk * math.sqrt(dt)
        tick = k + 1
        t = tick * dt
        truth.t = t

        if _due(tick, cfg.camera.rate, cfg.imu.rate):
            batch = simulate_batch(truth.pose, extr, scene, poet, t)
            log.batches.append((tick, batch))
            _record_measurement_errors(log, batch, truth.pose, extr, scene)
            pipe.on_camera(batch)
        if _due(tick, cfg.global_.rate, cfg.imu.rate):
            m = _global_measurement(truth, t, global_noise, rng_global if cfg.global_.noise_enabled else None)
            log.global_meas.append((tick, m))
            if pipe.return_requested and log.return_tick is None and pipe.phase is MissionPhase.OBJECT_RELATIVE:
                log.return_tick = tick
            pipe.on_global(m)
        pipe.tick(t)
        log.append(t, truth.pose, pipe.state, pipe.phase)
        if callback is not None:
            callback(pipe, truth)

        if np.linalg.norm(pipe.state.core.p - truth.p) > cfg.run.divergence_limit:
            log.diverged = True
            log.events.append((t, "diverged"))
            break
        if pipe.phase is MissionPhase.DONE:
            log.completed = True
            break
    return log


def _record_measurement_errors(log: FlightLog, batch: MeasurementBatch, robot: Pose, extr, scene) -> None:
    for m in batch.measurements:
        true = true_relative_pose(robot, extr, scene.objects[m.object_id])
        te = float(np.linalg.norm(m.p - true.p))
        re = math.degrees(quat_angle(m.q, true.q))
        log.meas_errors.append((batch.t, m.object_id, te, re))


def _highest(state: FilterState) -> int:
    init = [k for k, o in enumerate(state.objects) if o.initialized]
    return max(init, key=lambda k: landmark_world_position(state, k)[2])


def _global_measurement(
    truth: UavTruthState, t: float, noise, rng: np.random.Generator | None
) -> GlobalPoseMeasurement:
    p = truth.p.copy()
    q = truth.q.copy()
    if rng is not None:
        p = p + rng.standard_normal(3) * np.asarray(noise.sigma_p)
        q = quat_multiply(q, small_angle_quat(rng.standard_normal(3) * np.asarray(noise.sigma_theta)))
    return GlobalPoseMeasurement(t, p, q, noise)


def run_offline(
    cfg: ScenarioConfig,
    log: FlightLog,
    drop_landmarks_after: float | None = None,
    landmark_noise_scale: float = 1.0,
) -> FlightLog:
    """Replay recorded IMU/camera/global streams through the estimator.

    ``drop_landmarks_after`` removes camera measurements after that time;
    ``landmark_noise_scale`` rescales the filter's landmark noise.
    """
    ticks = [s.t for s in log.imu]
    if any(b <= a for a, b in zip(ticks, ticks[1:])):
        raise ValueError("IMU stream is not strictly increasing")
    for stream in (log.batches, log.global_meas):
        idx = [i for i, _ in stream]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("measurement stream is not time ordered")

    dt = 1.0 / cfg.imu.rate
    out = FlightLog(seed=log.seed)
    first_truth = Pose(log.truth_p[0], log.truth_q[0])
    pipe = NavigationPipeline(
        cfg, initial_filter_state(cfg, first_truth, np.random.default_rng([cfg.run.seed, 3])), out
    )
    if landmark_noise_scale != 1.0:
        pipe.mission.landmark_noise = pipe.mission.landmark_noise.scaled(landmark_noise_scale)
    out.append(0.0, first_truth, pipe.state, pipe.phase)
    batches = dict(log.batches)
    globals_ = dict(log.global_meas)
    for k, imu in enumerate(log.imu):
        pipe.on_imu(imu, dt)
        tick = k + 1
        t = tick * dt
        if tick in batches:
            batch = batches[tick]
            if drop_landmarks_after is not None and batch.t > drop_landmarks_after:
                batch = MeasurementBatch(batch.t, [])
            out.batches.append((tick, batch))
            pipe.on_camera(batch)
        if tick in globals_:
            if log.return_tick is not None and tick >= log.return_tick:
                pipe.request_return()
            pipe.on_global(globals_[tick])
        pipe.tick(t)
        out.append(t, Pose(log.truth_p[tick], log.truth_q[tick]), pipe.state, pipe.phase)
    out.imu = list(log.imu)
    out.global_meas = list(log.global_meas)
    out.return_tick = log.return_tick
    out.completed = log.completed
    return out


@dataclass
class Metrics:
    rmse_pos: float
    rmse_pos_std: float
    rmse_rot: float
    rmse_rot_std: float
    max_pe: float
    mean_pe: float
    mean_re: float
    n: int
    # raw per-sample error series of the segment
    pos_errors: NDArray = field(repr=False, default_factory=lambda: np.zeros(0))
    rot_errors: NDArray = field(repr=False, default_factory=lambda: np.zeros(0))
    # raw measurement errors per object id: (TE [m], RE [deg]) series
    landmark_te: dict[int, NDArray] = field(repr=False, default_factory=dict)
    landmark_re: dict[int, NDArray] = field(repr=False, default_factory=dict)

    def as_dict(self, seed: int | None = None) -> dict:
        d = {
            "rmse_pos_m": self.rmse_pos,
            "rmse_pos_std": self.rmse_pos_std,
            "rmse_rot_deg": self.rmse_rot,
            "rmse_rot_std": self.rmse_rot_std,
            "max_pe_m": self.max_pe,
            "mean_pe_m": self.mean_pe,
            "mean_re_deg": self.mean_re,
            "n_samples": self.n,
        }
        if seed is not None:
            d["seed"] = seed
        return d


def error_series(truth_p, truth_q, est_p, est_q) -> tuple[NDArray, NDArray]:
    """Position error norms [m] and geodesic rotation errors [deg]."""
    pe = np.linalg.norm(np.asarray(est_p) - np.asarray(truth_p), axis=1)
    re = np.array([math.degrees(quat_angle(a, b)) for a, b in zip(truth_q, est_q)])
    return pe, re


def metrics_from_arrays(truth_p, truth_q, est_p, est_q, phase, segment: str = "ObjectRelative") -> Metrics:
    mask = np.asarray(phase) == segment
    if not mask.any():
        raise ValueError(f"log has no {segment} segment")
    pe, re = error_series(
        np.asarray(truth_p)[mask], np.asarray(truth_q)[mask], np.asarray(est_p)[mask], np.asarray(est_q)[mask]
    )
    return Metrics(
        rmse_pos=float(np.sqrt(np.mean(pe**2))),
        rmse_pos_std=float(np.std(pe)),
        rmse_rot=float(np.sqrt(np.mean(re**2))),
        rmse_rot_std=float(np.std(re)),
        max_pe=float(np.max(pe)),
        mean_pe=float(np.mean(pe)),
        mean_re=float(np.mean(re)),
        n=int(mask.sum()),
        pos_errors=pe,
        rot_errors=re,
    )


def compute_metrics(log: FlightLog, segment: str = "ObjectRelative") -> Metrics:
    """RMSE / std / max errors over the samples of one mission phase."""
    a = log.arrays()
    m = metrics_from_arrays(a["truth_p"], a["truth_q"], a["est_p"], a["est_q"], a["phase"], segment)
    t = a["t"][a["phase"] == segment]
    lo, hi = t[0], t[-1]
    for t_m, k, te, re in log.meas_errors:
        if lo <= t_m <= hi:
            m.landmark_te.setdefault(k, []).append(te)
            m.landmark_re.setdefault(k, []).append(re)
    m.landmark_te = {k: np.asarray(v) for k, v in sorted(m.landmark_te.items())}
    m.landmark_re = {k: np.asarray(v) for k, v in sorted(m.landmark_re.items())}
    return m

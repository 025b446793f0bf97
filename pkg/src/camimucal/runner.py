"""Event-ordered execution of the calibration filter over measurement streams.

Records arrive in host order; each sensor may have a one-way time
translation filter that maps its timestamps into the host clock before the
record enters a small reorder buffer.  Buffered records are released in
nondecreasing translated-time order (ties: IMU first, then sensor id) once
the arrival watermark has moved past them; records older than the already
executed frontier are dropped and counted.

The filter itself initializes from the first camera measurement, propagates
with the latest IMU sample held constant, and applies gated Kalman updates
per camera measurement.
"""

import heapq
import warnings
from dataclasses import dataclass, field

import numpy as np

from .measurement import CameraPoseMeasurement, compute_H, compute_residual, predict_measurement
from .propagation import ImuSample, propagate
from .state import (
    CameraExtrinsicState,
    FilterState,
    ImuNoiseParams,
    WorldModel,
    cam_att_slice,
    initial_covariance,
    initialization_jacobians,
    initialize_imu_pose,
)
from .timesync import init_time_filter, translate, update_time_filter
from .update import GateConfig, kalman_update


@dataclass
class SensorSpec:
    """Registry entry for one stream in a log."""

    sensor_id: str
    kind: str                 # 'imu' or 'camera'
    rate_hz: float = 0.0
    time_filter: bool = False
    cam_index: int = None


@dataclass
class FilterConfig:
    """Filter-side configuration: initial extrinsic guesses, world model,
    noise, gating, initial covariance scales, and runner policies."""

    extrinsic_guesses: list
    world: WorldModel
    noise: ImuNoiseParams = field(default_factory=ImuNoiseParams)
    gate_confidence: float = 0.95
    p0: dict = field(default_factory=dict)
    initial_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_bias_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_bias_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r_meas_override: np.ndarray = None
    reorder_window: float = 0.005
    divergence_limit: int = 20
    camera_restrict: int = None
    time_filter_params: dict = field(default_factory=dict)
    store_imu_covariance: bool = False

    def __post_init__(self):
        self.initial_velocity = np.asarray(self.initial_velocity, dtype=float)
        self.initial_bias_g = np.asarray(self.initial_bias_g, dtype=float)
        self.initial_bias_a = np.asarray(self.initial_bias_a, dtype=float)


@dataclass
class UpdateEvent:
    """One camera update: translated time, camera, gate outcome, and a
    snapshot of the posterior."""

    t: float
    cam_index: int
    chi2: float
    accepted: bool
    state: FilterState
    sigma: np.ndarray
    P_imu: np.ndarray = None


@dataclass
class RunResult:
    state: FilterState
    covariance: np.ndarray
    columns: list
    rows: np.ndarray
    row_sensor: list
    row_kind: list
    updates: list
    gate_stats: dict
    dropped_late: int
    skipped_restricted: int
    pre_init_imu: int
    diverged: bool
    max_consecutive_rejections: int
    time_filters: dict
    n_cameras: int


def state_vector(x):
    """Flat state estimate: IMU blocks then each camera's quaternion and
    position, matching state_vector_names."""
    parts = [x.imu.q_IG, x.imu.b_g, x.imu.v_GI, x.imu.b_a, x.imu.p_GI]
    for c in x.cameras:
        parts.extend([c.q_IC, c.p_IC])
    return np.concatenate(parts)


def state_vector_names(n_cameras):
    names = (["q_IG_w", "q_IG_x", "q_IG_y", "q_IG_z"]
             + [f"b_g_{a}" for a in "xyz"] + [f"v_{a}" for a in "xyz"]
             + [f"b_a_{a}" for a in "xyz"] + [f"p_{a}" for a in "xyz"])
    for i in range(n_cameras):
        names += [f"cam{i}_q_{a}" for a in "wxyz"] + [f"cam{i}_p_{a}" for a in "xyz"]
    return names


def error_sigma_names(n_cameras):
    names = ([f"sig_att_{a}" for a in "xyz"] + [f"sig_b_g_{a}" for a in "xyz"]
             + [f"sig_v_{a}" for a in "xyz"] + [f"sig_b_a_{a}" for a in "xyz"]
             + [f"sig_p_{a}" for a in "xyz"])
    for i in range(n_cameras):
        names += ([f"sig_cam{i}_att_{a}" for a in "xyz"]
                  + [f"sig_cam{i}_p_{a}" for a in "xyz"])
    return names


def trace_columns(n_cameras):
    return ["t", "chi2", "accepted"] + state_vector_names(n_cameras) + error_sigma_names(n_cameras)


class CalibrationRunner:
    """Stateful executor; use run_filter for the one-shot interface."""

    def __init__(self, sensors, config):
        self.config = config
        self.sensors = {s.sensor_id: s for s in sensors}
        if config.camera_restrict is not None:
            self.n_cameras = 1
            self._cam_map = {config.camera_restrict: 0}
            guesses = [config.extrinsic_guesses[config.camera_restrict]]
        else:
            cam_specs = [s for s in sensors if s.kind == "camera"]
            indices = sorted(s.cam_index for s in cam_specs)
            self.n_cameras = len(indices)
            self._cam_map = {orig: k for k, orig in enumerate(indices)}
            guesses = [config.extrinsic_guesses[i] for i in indices]
        if self.n_cameras < 1:
            raise ValueError("log registers no camera stream")
        self.guesses = [CameraExtrinsicState(g.q_IC.copy(), g.p_IC.copy()) for g in guesses]

        self.x = None
        self.P = None
        self.t_filter = None
        self.last_imu = None
        self.gate = GateConfig(confidence=config.gate_confidence)
        self.time_filters = {}
        self.rows = []
        self.row_sensor = []
        self.row_kind = []
        self.updates = []
        self.gate_stats = {i: [0, 0] for i in range(self.n_cameras)}
        self.dropped_late = 0
        self.skipped_restricted = 0
        self.pre_init_imu = 0
        self.consecutive_rejections = 0
        self.max_consecutive_rejections = 0
        self.diverged = False
        # reorder buffer
        self._heap = []
        self._seq = 0
        self._watermark = -np.inf
        self._frontier = -np.inf

    # ------------------------------------------------------------------ ingest

    def push(self, t_arrival, sensor_id, payload):
        """Ingest one record in arrival order; returns records executed now."""
        spec = self.sensors.get(sensor_id)
        if spec is None:
            raise KeyError(f"record from unregistered sensor {sensor_id!r}")
        t_event = self._translated_time(spec, payload, t_arrival)
        prio = 0 if spec.kind == "imu" else 1
        heapq.heappush(self._heap, (t_event, prio, sensor_id, self._seq, payload))
        self._seq += 1
        self._watermark = max(self._watermark, t_event)
        self._release(self._watermark - self.config.reorder_window)

    def finish(self):
        self._release(np.inf)

    def _translated_time(self, spec, payload, t_arrival):
        t_s = payload.t_s
        if not spec.time_filter:
            return t_s
        tf = self.time_filters.get(spec.sensor_id)
        if tf is None:
            params = self.config.time_filter_params.get(spec.sensor_id, {})
            tf = init_time_filter(t_s, t_arrival, **params)
            self.time_filters[spec.sensor_id] = tf
        else:
            update_time_filter(tf, t_s, t_arrival)
        return translate(tf, t_s)

    def _release(self, up_to):
        while self._heap and self._heap[0][0] <= up_to:
            t_event, _, sensor_id, _, payload = heapq.heappop(self._heap)
            if t_event < self._frontier:
                self.dropped_late += 1
                continue
            self._frontier = t_event
            self._process(t_event, sensor_id, payload)

    # ----------------------------------------------------------------- process

    def _process(self, t_event, sensor_id, payload):
        if isinstance(payload, ImuSample):
            self._process_imu(t_event, sensor_id, payload)
        elif isinstance(payload, CameraPoseMeasurement):
            self._process_camera(t_event, sensor_id, payload)
        else:
            raise TypeError(f"unsupported payload {type(payload).__name__}")

    def _propagate_to(self, t_event):
        if self.x is None or self.last_imu is None:
            self.t_filter = t_event
            return
        dt = t_event - self.t_filter
        if dt > 1e-12:
            self.x, self.P = propagate(self.x, self.P, self.last_imu, dt,
                                       self.config.noise, self.config.world.gravity)
        self.t_filter = t_event

    def _process_imu(self, t_event, sensor_id, sample):
        if self.x is None:
            self.pre_init_imu += 1
            self.last_imu = sample
            return
        self._propagate_to(t_event)
        self.last_imu = sample
        self._record(t_event, sensor_id, "imu", np.nan, np.nan)

    def _process_camera(self, t_event, sensor_id, meas):
        cam = self._cam_map.get(meas.cam_index)
        if cam is None:
            self.skipped_restricted += 1
            return
        cfg = self.config
        if self.x is None:
            imu = initialize_imu_pose(self.guesses[cam], cfg.world, meas)
            imu.v_GI = cfg.initial_velocity.copy()
            imu.b_g = cfg.initial_bias_g.copy()
            imu.b_a = cfg.initial_bias_a.copy()
            self.x = FilterState(imu, self.guesses)
            self.P = initial_covariance(self.n_cameras, **cfg.p0)
            self._seed_pose_covariance(cam, meas)
            self.t_filter = t_event
            self._record(t_event, sensor_id, "camera", np.nan, np.nan)
            return
        self._propagate_to(t_event)
        zhat = predict_measurement(self.x, cam, cfg.world)
        y = compute_residual(meas, zhat)
        H = compute_H(self.x, cam, cfg.world)
        R = cfg.r_meas_override if cfg.r_meas_override is not None else meas.R_meas
        res = kalman_update(self.x, self.P, y, H, R, gate=self.gate,
                            context=f"camera {meas.cam_index} at t={t_event:.4f}")
        self.x, self.P = res.state, res.covariance
        self.gate_stats[cam][0 if res.accepted else 1] += 1
        if res.accepted:
            self.consecutive_rejections = 0
        else:
            self.consecutive_rejections += 1
            self.max_consecutive_rejections = max(self.max_consecutive_rejections,
                                                  self.consecutive_rejections)
            if self.consecutive_rejections > cfg.divergence_limit and not self.diverged:
                self.diverged = True
                warnings.warn(
                    f"{self.consecutive_rejections} consecutive rejected updates; "
                    "filter may have diverged", RuntimeWarning)
        sigma = np.sqrt(np.clip(np.diag(self.P), 0.0, None))
        self.updates.append(UpdateEvent(
            t=t_event, cam_index=cam, chi2=res.chi2, accepted=res.accepted,
            state=self.x.copy(), sigma=sigma,
            P_imu=self.P[:15, :15].copy() if cfg.store_imu_covariance else None))
        self._record(t_event, sensor_id, "camera", res.chi2, float(res.accepted))

    def _seed_pose_covariance(self, cam, meas):
        """Replace the initialized pose blocks of P with the covariance the
        initialization map implies: the pose error is a function of the
        extrinsic guess error and the measurement noise, and is therefore
        correlated with the initializing camera's extrinsic block."""
        R = (self.config.r_meas_override if self.config.r_meas_override is not None
             else meas.R_meas)
        J_g, J_z = initialization_jacobians(self.guesses[cam], self.config.world, meas)
        pose_idx = np.r_[0:3, 12:15]
        cam_idx = np.arange(cam_att_slice(cam).start, cam_att_slice(cam).start + 6)
        P_cam = self.P[np.ix_(cam_idx, cam_idx)]
        P_pose = J_g @ P_cam @ J_g.T + J_z @ R @ J_z.T
        cross = J_g @ P_cam
        self.P[np.ix_(pose_idx, pose_idx)] = 0.5 * (P_pose + P_pose.T)
        self.P[np.ix_(pose_idx, cam_idx)] = cross
        self.P[np.ix_(cam_idx, pose_idx)] = cross.T

    def _record(self, t_event, sensor_id, kind, chi2, accepted):
        sigma = np.sqrt(np.clip(np.diag(self.P), 0.0, None))
        self.rows.append(np.concatenate([[t_event, chi2, accepted],
                                         state_vector(self.x), sigma]))
        self.row_sensor.append(sensor_id)
        self.row_kind.append(kind)

    def result(self):
        rows = np.vstack(self.rows) if self.rows else np.empty((0, len(trace_columns(self.n_cameras))))
        return RunResult(
            state=self.x, covariance=self.P,
            columns=trace_columns(self.n_cameras), rows=rows,
            row_sensor=self.row_sensor, row_kind=self.row_kind,
            updates=self.updates, gate_stats=self.gate_stats,
            dropped_late=self.dropped_late,
            skipped_restricted=self.skipped_restricted,
            pre_init_imu=self.pre_init_imu,
            diverged=self.diverged,
            max_consecutive_rejections=self.max_consecutive_rejections,
            time_filters=self.time_filters, n_cameras=self.n_cameras)


def run_filter(records, sensors, config):
    """Execute the filter over records given in arrival order.

    records: iterable of (t_arrival, sensor_id, payload) with payload an
    ImuSample or CameraPoseMeasurement.
    """
    runner = CalibrationRunner(sensors, config)
    for t_arrival, sensor_id, payload in records:
        runner.push(t_arrival, sensor_id, payload)
    runner.finish()
    return runner.result()

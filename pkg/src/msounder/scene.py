"""Geometry and kinematics of sounding nodes and radar targets.

All positions live in a local East-North-Up frame (meters). The campaign
areas this targets are ~100x100 m, so no geodetic conversion is done.
Every function here is pure and accepts either a single point (shape (3,))
or a batch of points (shape (..., 3)); time arguments may be scalars or
arrays and broadcast in the usual numpy way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s, exact


class GeometryError(ValueError):
    """Degenerate geometry: coincident points, zero direction vectors, ..."""


class TrajectoryRangeError(ValueError):
    """Query time outside the span covered by a trajectory."""


def as_vec3(v) -> np.ndarray:
    """Coerce to a float (..., 3) array and require finite components."""
    a = np.asarray(v, dtype=float)
    if a.shape[-1] != 3:
        raise ValueError(f"expected 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector components: {a!r}")
    return a


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear position track with per-segment constant velocity.

    ``times`` is strictly increasing, ``positions`` is (n, 3) and
    ``velocities`` holds the constant velocity of the segment starting at
    each sample (the last entry repeats the final segment). A single-sample
    trajectory is a stationary point, valid at all query times.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = as_vec3(self.positions).reshape(-1, 3)
        v = as_vec3(self.velocities).reshape(-1, 3)
        if t.ndim != 1 or len(t) != len(p) or len(t) != len(v):
            raise ValueError("times, positions, velocities must have equal length")
        if len(t) == 0:
            raise ValueError("empty trajectory")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError(f"trajectory '{self.name}': times must be strictly increasing")
            seg_v = (p[1:] - p[:-1]) / dt[:, None]
            scale = np.maximum(np.abs(seg_v), np.abs(v[:-1]))
            err = np.abs(seg_v - v[:-1])
            if np.any(err > 1e-9 * np.maximum(scale, 1.0)):
                bad = int(np.argwhere(np.any(err > 1e-9 * np.maximum(scale, 1.0), axis=1))[0, 0])
                raise ValueError(
                    f"trajectory '{self.name}': stored velocity of segment {bad} "
                    f"disagrees with position differences"
                )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)

    @classmethod
    def stationary(cls, pos, name: str = "") -> "Trajectory":
        p = as_vec3(pos).reshape(1, 3)
        return cls(np.array([0.0]), p, np.zeros((1, 3)), name=name)

    @classmethod
    def from_waypoints(cls, times, positions, name: str = "") -> "Trajectory":
        """Build a trajectory from waypoints, deriving segment velocities."""
        t = np.asarray(times, dtype=float)
        p = as_vec3(positions).reshape(-1, 3)
        if len(t) == 1:
            return cls(t, p, np.zeros((1, 3)), name=name)
        v = np.empty_like(p)
        v[:-1] = (p[1:] - p[:-1]) / np.diff(t)[:, None]
        v[-1] = v[-2]
        return cls(t, p, v, name=name)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def is_stationary(self) -> bool:
        return len(self.times) == 1 or bool(np.all(self.velocities == 0.0))


def _check_time_range(traj: Trajectory, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if len(traj.times) == 1:
        return t
    if np.any(t < traj.times[0]) or np.any(t > traj.times[-1]):
        bad = t[(t < traj.times[0]) | (t > traj.times[-1])]
        raise TrajectoryRangeError(
            f"t={np.atleast_1d(bad)[0]:g} s outside trajectory '{traj.name}' "
            f"span [{traj.times[0]:g}, {traj.times[-1]:g}] s"
        )
    return t


def position_at(traj: Trajectory, t) -> np.ndarray:
    """Piecewise-linear interpolated position; exact at sample points."""
    t = _check_time_range(traj, t)
    if len(traj.times) == 1:
        return np.broadcast_to(traj.positions[0], t.shape + (3,)).copy()
    out = np.empty(t.shape + (3,))
    for i in range(3):
        out[..., i] = np.interp(t, traj.times, traj.positions[:, i])
    return out


def velocity_at(traj: Trajectory, t) -> np.ndarray:
    """Per-segment constant velocity at time t (right-continuous)."""
    t = _check_time_range(traj, t)
    if len(traj.times) == 1:
        return np.broadcast_to(traj.velocities[0], t.shape + (3,)).copy()
    seg = np.clip(np.searchsorted(traj.times, t, side="right") - 1, 0, len(traj.times) - 2)
    return traj.velocities[seg]


# ---------------------------------------------------------------------------
# Antennas, nodes, targets, clutter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AntennaPattern:
    """Omni (0 dB everywhere) or a Gaussian-in-angle directional pattern.

    The directional gain is 0 dB on boresight and -10 dB at half the
    declared 10 dB beamwidth off boresight, floored at -30 dB.
    """

    kind: str = "omni"  # "omni" | "directional"
    boresight: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    beamwidth_10db_deg: float = 40.0
    floor_db: float = -30.0

    def __post_init__(self):
        if self.kind not in ("omni", "directional"):
            raise ValueError(f"unknown antenna kind {self.kind!r}")
        b = as_vec3(self.boresight)
        n = np.linalg.norm(b)
        if self.kind == "directional":
            if n == 0:
                raise ValueError("directional antenna needs a nonzero boresight")
            if self.beamwidth_10db_deg <= 0:
                raise ValueError("beamwidth must be positive")
            object.__setattr__(self, "boresight", b / n)


def antenna_gain(pattern: AntennaPattern, direction) -> np.ndarray | float:
    """Gain in dB toward ``direction`` (need not be normalized)."""
    d = as_vec3(direction)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0):
        raise GeometryError("zero direction vector has no antenna gain")
    if pattern.kind == "omni":
        out = np.zeros(np.shape(norm))
        return float(out) if out.ndim == 0 else out
    cosang = np.clip(np.sum(d * pattern.boresight, axis=-1) / norm, -1.0, 1.0)
    theta_deg = np.degrees(np.arccos(cosang))
    g = -10.0 * (theta_deg / (pattern.beamwidth_10db_deg / 2.0)) ** 2
    g = np.maximum(g, pattern.floor_db)
    return float(g) if g.ndim == 0 else g


@dataclass
class Node:
    """One Tx or Rx chain. A physical transceiver is two Node records
    sharing a clock."""

    id: str
    role: str  # "tx" | "rx"
    trajectory: Trajectory
    antenna: AntennaPattern = field(default_factory=AntennaPattern)
    clock: object = None  # ClockModel; kept loose to avoid a module cycle
    eirp_dbm: float | None = None  # tx only
    noise_floor_dbm_hz: float | None = None  # rx only
    los_attenuation_db: float = 0.0  # e.g. absorbers at a stationary rx
    cable_attenuation_db: float = 30.0  # back-to-back calibration cable

    def __post_init__(self):
        if self.role not in ("tx", "rx"):
            raise ValueError(f"node {self.id!r}: role must be 'tx' or 'rx', got {self.role!r}")
        if self.role == "tx" and self.eirp_dbm is None:
            raise ValueError(f"tx node {self.id!r} needs eirp_dbm")
        if self.role == "rx" and self.noise_floor_dbm_hz is None:
            raise ValueError(f"rx node {self.id!r} needs noise_floor_dbm_hz")


@dataclass
class Target:
    id: str
    trajectory: Trajectory
    rcs_dbsm: float = -3.0  # VTOL-sized default; angle-independent

    def __post_init__(self):
        if not np.isfinite(self.rcs_dbsm):
            raise ValueError(f"target {self.id!r}: rcs_dbsm must be finite")


@dataclass(frozen=True)
class ClutterTap:
    """Static echo declared per receiver, gain relative to the LoS path."""

    rx_id: str
    delay_s: float
    gain_db: float
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("clutter delay must be non-negative")


# ---------------------------------------------------------------------------
# Delay / Doppler ground truth
# ---------------------------------------------------------------------------

def _ranges(a, b) -> np.ndarray:
    return np.linalg.norm(as_vec3(a) - as_vec3(b), axis=-1)


def los_delay(p_tx, p_rx):
    """Line-of-sight propagation delay |p_tx - p_rx| / c in seconds."""
    r = _ranges(p_tx, p_rx)
    if np.any(r == 0):
        raise GeometryError("tx and rx positions coincide; LoS delay undefined")
    out = r / SPEED_OF_LIGHT
    return float(out) if out.ndim == 0 else out


def bistatic_delay(p_tx, p_tgt, p_rx):
    """Tx->target->rx propagation delay in seconds."""
    r1 = _ranges(p_tx, p_tgt)
    r2 = _ranges(p_tgt, p_rx)
    if np.any(r1 == 0) or np.any(r2 == 0):
        raise GeometryError("target coincides with an endpoint; bistatic delay undefined")
    out = (r1 + r2) / SPEED_OF_LIGHT
    return float(out) if out.ndim == 0 else out


def bistatic_doppler(p_tx, p_tgt, v_tgt, p_rx, f_c, v_tx=None, v_rx=None):
    """Doppler shift of the tx->target->rx echo at carrier f_c.

    Positive when the bistatic range sum shrinks (closing target). Endpoint
    motion is included through the optional v_tx / v_rx arguments.
    """
    if f_c <= 0:
        raise ValueError("carrier frequency must be positive")
    p_tx, p_tgt, p_rx = as_vec3(p_tx), as_vec3(p_tgt), as_vec3(p_rx)
    v_tgt = as_vec3(v_tgt)
    v_tx = np.zeros(3) if v_tx is None else as_vec3(v_tx)
    v_rx = np.zeros(3) if v_rx is None else as_vec3(v_rx)
    d1 = p_tgt - p_tx
    d2 = p_tgt - p_rx
    r1 = np.linalg.norm(d1, axis=-1)
    r2 = np.linalg.norm(d2, axis=-1)
    if np.any(r1 == 0) or np.any(r2 == 0):
        raise GeometryError("target coincides with an endpoint; Doppler undefined")
    # d|p_tgt - p_end|/dt = (v_tgt - v_end) . u, u the unit vector end->target
    rate = (np.sum((v_tgt - v_tx) * d1, axis=-1) / r1
            + np.sum((v_tgt - v_rx) * d2, axis=-1) / r2)
    out = -(f_c / SPEED_OF_LIGHT) * rate
    return float(out) if out.ndim == 0 else out

"""Per-receiver Kalman tracking of (bistatic delay, Doppler) measurements.

State x = [tau, f_D] with the physical coupling d(tau)/dt = -f_D/f_c, so a
coasting track keeps moving through delay the way the echo actually does;
that is what carries tracks through short observation losses. Association
is global-nearest-neighbor under a chi-square gate, confirmation is
M-of-N, and a confirmed track survives up to max_coast consecutive misses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detect import Detection


@dataclass
class TrackerConfig:
    f_c_hz: float
    delay_bin_s: float
    doppler_bin_hz: float
    q_doppler: float = 50.0  # Hz^2/s white Doppler-rate density
    gate_chi2: float = 11.83  # 2-dof gate
    confirm_m: int = 3
    confirm_n: int = 4
    max_coast: int = 5
    snr_sigma_scale: float = 1.6  # sigma = bin / (scale * sqrt(snr))
    init_cov_factor: float = 25.0

    def __post_init__(self):
        if self.gate_chi2 < 4:
            raise ValueError("gate_chi2 must be >= 4")
        if min(self.q_doppler, self.delay_bin_s, self.doppler_bin_hz) <= 0:
            raise ValueError("tracker scales must be positive")
        if not 1 <= self.confirm_m <= self.confirm_n:
            raise ValueError("confirmation rule must satisfy 1 <= M <= N")

    def measurement_noise(self, snr_db: float) -> np.ndarray:
        """Diagonal R from detection SNR (CRLB-order bin/sqrt(SNR) scaling)."""
        root = self.snr_sigma_scale * np.sqrt(10.0 ** (snr_db / 10.0))
        s_tau = self.delay_bin_s / root
        s_dop = self.doppler_bin_hz / root
        return np.diag([s_tau ** 2, s_dop ** 2])


@dataclass
class TrackPoint:
    cpi_index: int
    time_s: float
    delay_s: float
    doppler_hz: float
    cov: np.ndarray
    status: str
    associated: bool


@dataclass
class TrackState:
    track_id: int
    x: np.ndarray  # [delay_s, doppler_hz]
    cov: np.ndarray  # 2x2
    status: str = "tentative"  # tentative | confirmed | coasting | dead
    hits: int = 0
    misses: int = 0  # consecutive
    time_s: float = 0.0
    recent: list = field(default_factory=list)  # last confirm_n hit flags
    history: list = field(default_factory=list)  # TrackPoint per CPI
    nis: list = field(default_factory=list)  # normalized innovation squared

    @property
    def delay_s(self) -> float:
        return float(self.x[0])

    @property
    def doppler_hz(self) -> float:
        return float(self.x[1])


def transition(T_s: float, f_c: float) -> np.ndarray:
    return np.array([[1.0, -T_s / f_c], [0.0, 1.0]])


def process_noise(T_s: float, f_c: float, q_doppler: float) -> np.ndarray:
    """White Doppler-rate noise mapped through the delay coupling."""
    return q_doppler * np.array(
        [[T_s ** 3 / 3.0 / f_c ** 2, -T_s ** 2 / 2.0 / f_c],
         [-T_s ** 2 / 2.0 / f_c, T_s]])


def predict(state: TrackState, T_s: float, f_c: float,
            q_doppler: float = 50.0) -> TrackState:
    """Propagate a track by T seconds; pure function, returns a new state."""
    if T_s <= 0:
        raise ValueError("prediction interval must be positive")
    f = transition(T_s, f_c)
    x = f @ state.x
    cov = f @ state.cov @ f.T + process_noise(T_s, f_c, q_doppler)
    out = TrackState(track_id=state.track_id, x=x, cov=cov, status=state.status,
                     hits=state.hits, misses=state.misses,
                     time_s=state.time_s + T_s, recent=state.recent,
                     history=state.history, nis=state.nis)
    return out


def _kalman_update(state: TrackState, z: np.ndarray, r: np.ndarray) -> float:
    s = state.cov + r
    k = state.cov @ np.linalg.inv(s)
    innov = z - state.x
    nis = float(innov @ np.linalg.solve(s, innov))
    state.x = state.x + k @ innov
    state.cov = (np.eye(2) - k) @ state.cov
    state.cov = 0.5 * (state.cov + state.cov.T)  # keep symmetric
    state.nis.append(nis)
    return nis


def associate_and_update(tracks: list[TrackState], detections: list[Detection],
                         cfg: TrackerConfig) -> tuple[list[TrackState], list[Detection]]:
    """GNN assignment within the gate, Kalman updates, lifecycle bookkeeping.

    Tracks must already be predicted to the detection epoch. Unassigned
    detections spawn tentative tracks; unassigned tracks take a miss and
    die once they can no longer confirm (tentative) or after max_coast
    consecutive misses (confirmed/coasting). Returns (tracks including new
    spawns, detections that started new tracks).
    """
    live = [t for t in tracks if t.status != "dead"]
    n_t, n_d = len(live), len(detections)
    assigned_t, assigned_d = set(), set()
    if n_t and n_d:
        cost = np.full((n_t, n_d), 1e9)
        for i, trk in enumerate(live):
            for j, det in enumerate(detections):
                z = np.array([det.delay_s, det.doppler_hz])
                s = trk.cov + cfg.measurement_noise(det.snr_db)
                innov = z - trk.x
                d2 = float(innov @ np.linalg.solve(s, innov))
                if d2 <= cfg.gate_chi2:
                    cost[i, j] = d2
        rows, cols = linear_sum_assignment(cost)
        for i, j in zip(rows, cols):
            if cost[i, j] < 1e9:
                assigned_t.add(i)
                assigned_d.add(j)
                det = detections[j]
                _kalman_update(live[i], np.array([det.delay_s, det.doppler_hz]),
                               cfg.measurement_noise(det.snr_db))
    for i, trk in enumerate(live):
        hit = i in assigned_t
        trk.recent = (trk.recent + [hit])[-cfg.confirm_n:]
        if hit:
            trk.hits += 1
            trk.misses = 0
            if trk.status == "coasting":
                trk.status = "confirmed"
            elif trk.status == "tentative" and sum(trk.recent) >= cfg.confirm_m:
                trk.status = "confirmed"
        else:
            trk.misses += 1
            if trk.status == "tentative":
                # dead once M-of-N is out of reach
                room = cfg.confirm_n - len(trk.recent) + sum(trk.recent)
                if room < cfg.confirm_m:
                    trk.status = "dead"
            else:
                trk.status = "coasting" if trk.misses <= cfg.max_coast else "dead"
    unused = [d for j, d in enumerate(detections) if j not in assigned_d]
    return live, unused


def spawn_track(det: Detection, cfg: TrackerConfig, track_id: int,
                time_s: float) -> TrackState:
    r = cfg.measurement_noise(det.snr_db)
    return TrackState(track_id=track_id,
                      x=np.array([det.delay_s, det.doppler_hz]),
                      cov=cfg.init_cov_factor * r, time_s=time_s, recent=[True],
                      hits=1)


def run_tracker(cpi_stream, cfg: TrackerConfig) -> list[TrackState]:
    """Track a per-receiver detection stream.

    cpi_stream yields (cpi_index, time_s, detections) in CPI order; the
    prediction interval is taken from the timestamps, so schedule gaps are
    coasted over with the physical delay/Doppler coupling. Returns every
    track ever spawned, each with its per-CPI filtered history.
    """
    tracks: list[TrackState] = []
    finished: list[TrackState] = []
    next_id = 0
    last = None
    for cpi_index, time_s, detections in cpi_stream:
        if last is not None and (cpi_index <= last[0] or time_s <= last[1]):
            raise ValueError(f"CPI stream out of order at index {cpi_index}")
        live = []
        for trk in tracks:
            if trk.status == "dead":
                finished.append(trk)
                continue
            live.append(predict(trk, time_s - trk.time_s, cfg.f_c_hz, cfg.q_doppler)
                        if last is not None else trk)
        tracks, unused = associate_and_update(live, list(detections), cfg)
        for det in unused:
            tracks.append(spawn_track(det, cfg, next_id, time_s))
            next_id += 1
        for trk in tracks:
            if trk.status == "dead":
                continue
            trk.time_s = time_s
            trk.history.append(TrackPoint(
                cpi_index=cpi_index, time_s=time_s, delay_s=trk.delay_s,
                doppler_hz=trk.doppler_hz, cov=trk.cov.copy(),
                status=trk.status, associated=bool(trk.recent and trk.recent[-1])))
        last = (cpi_index, time_s)
    return finished + tracks

"""Declarative scenario files: nodes, targets, clutter, signal, schedule.

A scenario is a YAML document fully describing one simulated campaign.
Validation reports every problem with the path of the offending field
(e.g. ``nodes[2].antenna.kind``) so config errors stay debuggable; all
cross references (clock ids, node ids) are resolved here, never later.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .clock import ClockModel
from .scene import AntennaPattern, ClutterTap, Node, Target, Trajectory
from .waveform import SignalConfig


class ScenarioError(ValueError):
    """Invalid scenario document; `path` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class Window:
    tx_id: str
    start_s: float
    n_cpi: int

    def duration_s(self, cfg: SignalConfig) -> float:
        return self.n_cpi * cfg.cpi_duration_s

    def n_symbols(self, cfg: SignalConfig) -> int:
        return self.n_cpi * cfg.n_symbols_per_cpi


@dataclass
class ProcessingParams:
    background_alpha: float = 0.9
    cfar_guard: tuple = (2, 2)
    cfar_train: tuple = (8, 4)
    cfar_pfa: float = 1e-4
    min_detection_snr_db: float = 0.0
    q_doppler: float = 50.0
    gate_chi2: float = 11.83
    confirm_m: int = 3
    confirm_n: int = 4
    max_coast: int = 5
    drift_window_halfwidth_s: float = 100e-9
    drift_smooth_symbols: int = 31
    min_receivers: int = 3
    sigma_floor_s: float = 0.02e-9
    cpi_symbols: int | None = None  # override of signal.n_symbols_per_cpi

    def to_dict(self) -> dict:
        return {
            "background_alpha": self.background_alpha,
            "cfar_guard": list(self.cfar_guard),
            "cfar_train": list(self.cfar_train),
            "cfar_pfa": self.cfar_pfa,
            "min_detection_snr_db": self.min_detection_snr_db,
            "q_doppler": self.q_doppler,
            "gate_chi2": self.gate_chi2,
            "confirm_m": self.confirm_m,
            "confirm_n": self.confirm_n,
            "max_coast": self.max_coast,
            "drift_window_halfwidth_s": self.drift_window_halfwidth_s,
            "drift_smooth_symbols": self.drift_smooth_symbols,
            "min_receivers": self.min_receivers,
            "sigma_floor_s": self.sigma_floor_s,
            "cpi_symbols": self.cpi_symbols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessingParams":
        p = cls()
        for k, v in d.items():
            if not hasattr(p, k):
                raise ScenarioError(f"processing.{k}", "unknown parameter")
            if k in ("cfar_guard", "cfar_train"):
                v = tuple(int(x) for x in v)
            setattr(p, k, v)
        return p


@dataclass
class Scenario:
    name: str
    seed: int
    cfg: SignalConfig
    clocks: dict
    nodes: dict
    targets: list
    clutter: list
    schedule: list
    processing: ProcessingParams = field(default_factory=ProcessingParams)
    position_noise_std_m: float = 0.0
    duration_s: float = 0.0

    def tx_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.role == "tx"]

    def rx_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.role == "rx"]


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"{path}.{key}", "required field missing")
    return d[key]


def _num(v, path: str, positive=False, nonneg=False) -> float:
    if isinstance(v, str):
        # YAML 1.1 resolves '3.75e9' (unsigned exponent) as a string
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {type(v).__name__}")
    x = float(v)
    if not np.isfinite(x):
        raise ScenarioError(path, "must be finite")
    if positive and x <= 0:
        raise ScenarioError(path, f"must be > 0, got {x}")
    if nonneg and x < 0:
        raise ScenarioError(path, f"must be >= 0, got {x}")
    return x


def _int(v, path: str, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(path, f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        raise ScenarioError(path, f"must be >= {minimum}, got {v}")
    return v


def _str(v, path: str) -> str:
    if not isinstance(v, str) or not v:
        raise ScenarioError(path, "expected a non-empty string")
    return v


def _vec3(v, path: str) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ScenarioError(path, "expected [x, y, z]")
    return np.array([_num(c, f"{path}[{i}]") for i, c in enumerate(v)])


def _parse_trajectory(d: dict, path: str, name: str) -> Trajectory:
    if "position" in d and "trajectory" in d:
        raise ScenarioError(path, "give either position or trajectory, not both")
    if "position" in d:
        return Trajectory.stationary(_vec3(d["position"], f"{path}.position"), name=name)
    if "trajectory" not in d:
        raise ScenarioError(path, "needs a position or a trajectory")
    t = d["trajectory"]
    times = _req(t, "times", f"{path}.trajectory")
    positions = _req(t, "positions", f"{path}.trajectory")
    if not isinstance(times, list) or not isinstance(positions, list) \
            or len(times) != len(positions) or not times:
        raise ScenarioError(f"{path}.trajectory",
                            "times and positions must be equal-length non-empty lists")
    tt = [_num(x, f"{path}.trajectory.times[{i}]") for i, x in enumerate(times)]
    pp = np.array([_vec3(p, f"{path}.trajectory.positions[{i}]")
                   for i, p in enumerate(positions)])
    try:
        return Trajectory.from_waypoints(tt, pp, name=name)
    except ValueError as e:
        raise ScenarioError(f"{path}.trajectory", str(e)) from e


def _parse_antenna(d, path: str) -> AntennaPattern:
    if d is None:
        return AntennaPattern("omni")
    kind = _str(_req(d, "kind", path), f"{path}.kind")
    if kind == "omni":
        return AntennaPattern("omni")
    if kind != "directional":
        raise ScenarioError(f"{path}.kind", f"must be 'omni' or 'directional', got {kind!r}")
    bore = _vec3(_req(d, "boresight", path), f"{path}.boresight")
    bw = _num(d.get("beamwidth_10db_deg", 40.0), f"{path}.beamwidth_10db_deg", positive=True)
    try:
        return AntennaPattern("directional", boresight=bore, beamwidth_10db_deg=bw)
    except ValueError as e:
        raise ScenarioError(path, str(e)) from e


def parse_scenario(doc: dict, source: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(source, "document must be a mapping")
    name = _str(doc.get("name", "unnamed"), "name")
    seed = _int(doc.get("seed", 0), "seed")

    sig = doc.get("signal")
    if not isinstance(sig, dict):
        raise ScenarioError("signal", "required section missing or not a mapping")
    sig_kwargs = dict(
        f_c_hz=_num(_req(sig, "f_c_hz", "signal"), "signal.f_c_hz", positive=True),
        bandwidth_hz=_num(_req(sig, "bandwidth_hz", "signal"),
                          "signal.bandwidth_hz", positive=True),
        n_subcarriers=_int(_req(sig, "n_subcarriers", "signal"),
                           "signal.n_subcarriers", minimum=2),
        t_symbol_s=_num(_req(sig, "t_symbol_s", "signal"),
                        "signal.t_symbol_s", positive=True),
        n_symbols_per_cpi=_int(sig.get("n_symbols_per_cpi", 1024),
                               "signal.n_symbols_per_cpi", minimum=2))
    try:
        cfg = SignalConfig(**sig_kwargs)
    except ValueError as e:
        raise ScenarioError("signal", str(e)) from e

    clocks: dict[str, ClockModel] = {}
    for i, c in enumerate(doc.get("clocks", []) or []):
        path = f"clocks[{i}]"
        cid = _str(_req(c, "id", path), f"{path}.id")
        if cid in clocks:
            raise ScenarioError(f"{path}.id", f"duplicate clock id {cid!r}")
        clocks[cid] = ClockModel(
            id=cid,
            initial_time_offset_s=_num(c.get("initial_time_offset_s", 0.0),
                                       f"{path}.initial_time_offset_s"),
            initial_ffo=_num(c.get("initial_ffo", 0.0), f"{path}.initial_ffo"),
            ffo_random_walk_psd=_num(c.get("ffo_random_walk_psd", 0.0),
                                     f"{path}.ffo_random_walk_psd", nonneg=True),
            seed=_int(c.get("seed", 0), f"{path}.seed"))

    nodes: dict[str, Node] = {}
    node_list = doc.get("nodes")
    if not isinstance(node_list, list) or not node_list:
        raise ScenarioError("nodes", "at least one node is required")
    for i, nd in enumerate(node_list):
        path = f"nodes[{i}]"
        nid = _str(_req(nd, "id", path), f"{path}.id")
        if nid in nodes:
            raise ScenarioError(f"{path}.id", f"duplicate node id {nid!r}")
        role = _str(_req(nd, "role", path), f"{path}.role")
        if role not in ("tx", "rx"):
            raise ScenarioError(f"{path}.role", f"must be 'tx' or 'rx', got {role!r}")
        clock = None
        if nd.get("clock") is not None:
            cref = _str(nd["clock"], f"{path}.clock")
            if cref not in clocks:
                raise ScenarioError(f"{path}.clock", f"unknown clock id {cref!r}")
            clock = clocks[cref]
        kwargs = dict(
            id=nid, role=role,
            trajectory=_parse_trajectory(nd, path, name=nid),
            antenna=_parse_antenna(nd.get("antenna"), f"{path}.antenna"),
            clock=clock,
            los_attenuation_db=_num(nd.get("los_attenuation_db", 0.0),
                                    f"{path}.los_attenuation_db", nonneg=True),
            cable_attenuation_db=_num(nd.get("cable_attenuation_db", 30.0),
                                      f"{path}.cable_attenuation_db", nonneg=True))
        if role == "tx":
            kwargs["eirp_dbm"] = _num(_req(nd, "eirp_dbm", path), f"{path}.eirp_dbm")
        else:
            kwargs["noise_floor_dbm_hz"] = _num(
                _req(nd, "noise_floor_dbm_hz", path), f"{path}.noise_floor_dbm_hz")
        nodes[nid] = Node(**kwargs)

    targets = []
    seen_t = set()
    for i, td in enumerate(doc.get("targets", []) or []):
        path = f"targets[{i}]"
        tid = _str(_req(td, "id", path), f"{path}.id")
        if tid in seen_t:
            raise ScenarioError(f"{path}.id", f"duplicate target id {tid!r}")
        seen_t.add(tid)
        targets.append(Target(id=tid, trajectory=_parse_trajectory(td, path, name=tid),
                              rcs_dbsm=_num(td.get("rcs_dbsm", -3.0), f"{path}.rcs_dbsm")))

    clutter = []
    rx_ids = {n.id for n in nodes.values() if n.role == "rx"}
    for i, cd in enumerate(doc.get("clutter", []) or []):
        path = f"clutter[{i}]"
        rx_id = _str(_req(cd, "rx_id", path), f"{path}.rx_id")
        if rx_id not in rx_ids:
            raise ScenarioError(f"{path}.rx_id", f"unknown rx node {rx_id!r}")
        delay = _num(_req(cd, "delay_s", path), f"{path}.delay_s", nonneg=True)
        if delay >= cfg.t_symbol_s:
            raise ScenarioError(f"{path}.delay_s",
                                f"must be below the symbol duration {cfg.t_symbol_s}")
        clutter.append(ClutterTap(rx_id=rx_id, delay_s=delay,
                                  gain_db=_num(_req(cd, "gain_db", path), f"{path}.gain_db"),
                                  phase_rad=_num(cd.get("phase_rad", 0.0),
                                                 f"{path}.phase_rad")))

    schedule = []
    sched = doc.get("schedule")
    if not isinstance(sched, list) or not sched:
        raise ScenarioError("schedule", "at least one tx window is required")
    tx_ids = {n.id for n in nodes.values() if n.role == "tx"}
    for i, w in enumerate(sched):
        path = f"schedule[{i}]"
        tx_id = _str(_req(w, "tx_id", path), f"{path}.tx_id")
        if tx_id not in tx_ids:
            raise ScenarioError(f"{path}.tx_id", f"unknown tx node {tx_id!r}")
        schedule.append(Window(tx_id=tx_id,
                               start_s=_num(_req(w, "start_s", path),
                                            f"{path}.start_s", nonneg=True),
                               n_cpi=_int(_req(w, "n_cpi", path), f"{path}.n_cpi",
                                          minimum=1)))
    schedule.sort(key=lambda w: w.start_s)
    for i in range(1, len(schedule)):
        prev_end = schedule[i - 1].start_s + schedule[i - 1].duration_s(cfg)
        if schedule[i].start_s < prev_end - 1e-12:
            raise ScenarioError(
                f"schedule[{i}]",
                f"window starting at {schedule[i].start_s:g} s overlaps the previous "
                f"window ending at {prev_end:g} s (single shared frequency)")

    processing = ProcessingParams.from_dict(doc.get("processing", {}) or {})
    noise_std = _num(doc.get("position_noise_std_m", 0.0),
                     "position_noise_std_m", nonneg=True)
    end = max(w.start_s + w.duration_s(cfg) for w in schedule)
    duration = _num(doc.get("duration_s", end), "duration_s", positive=True)
    if duration < end - 1e-9:
        raise ScenarioError("duration_s", f"shorter than the schedule end {end:g} s")

    scn = Scenario(name=name, seed=seed, cfg=cfg, clocks=clocks, nodes=nodes,
                   targets=targets, clutter=clutter, schedule=schedule,
                   processing=processing, position_noise_std_m=noise_std,
                   duration_s=duration)
    _check_trajectory_coverage(scn)
    return scn


def _check_trajectory_coverage(scn: Scenario):
    end = max(w.start_s + w.duration_s(scn.cfg) for w in scn.schedule)
    start = min(w.start_s for w in scn.schedule)
    movers = [("nodes", n.id, n.trajectory) for n in scn.nodes.values()]
    movers += [("targets", t.id, t.trajectory) for t in scn.targets]
    for section, name, traj in movers:
        if len(traj.times) == 1:
            continue
        if traj.t_start > start or traj.t_end < end:
            raise ScenarioError(
                f"{section}[{name}].trajectory",
                f"covers [{traj.t_start:g}, {traj.t_end:g}] s but the schedule "
                f"needs [{start:g}, {end:g}] s")


def load_scenario(path) -> Scenario:
    with open(path, "r") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ScenarioError(str(path), f"not valid YAML: {e}") from e
    return parse_scenario(doc, source=str(path))

"""End-to-end pipeline commands: simulate, process, localize, report.

Each command reads the previous stage's directory and writes its own
atomic, deterministic outputs (same inputs and seed give byte-identical
files). Tables are CSV with full-precision floats, map exports are plain
.npy grids plus rendered PNGs, manifests are JSON.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import capture_io
from .capture_io import DataError
from .detect import detect_map, form_dd_map, subtract_background
from .locate import localize_track
from .scenario import ProcessingParams, Scenario, Window
from .scene import Node, Trajectory, position_at
from .sounding import compensate_drift, estimate_ctf
from .synth import Capture, synthesize_b2b_capture, synthesize_capture
from .track import TrackerConfig, TrackPoint, TrackState, run_tracker
from .waveform import b2b_reference, hardware_response


def _crc_seed(*parts) -> int:
    return zlib.crc32(":".join(str(p) for p in parts).encode())


def _fmt(x) -> str:
    return repr(float(x))


def _write_text(path: Path, text: str):
    capture_io._atomic_write(Path(path), text.encode())


def _write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text().splitlines()
    if not text:
        raise DataError(f"empty table {path}")
    header = text[0].split(",")
    return header, [line.split(",") for line in text[1:] if line]


# ---------------------------------------------------------------------------
# Position noise (stand-in for RTK/INS error)
# ---------------------------------------------------------------------------

class PositionSource:
    """Trajectory positions plus optional seeded 1 Hz Gaussian wander."""

    def __init__(self, scn: Scenario, seed: int):
        self.scn = scn
        self.std = scn.position_noise_std_m
        self._offsets = {}
        if self.std > 0:
            n_sec = int(np.ceil(scn.duration_s)) + 2
            for node_id in scn.nodes:
                rng = np.random.default_rng(
                    np.random.SeedSequence([_crc_seed(seed, node_id, "posnoise")]))
                self._offsets[node_id] = rng.normal(0.0, self.std, size=(n_sec, 3))

    def node_position(self, node_id: str, t) -> np.ndarray:
        pos = position_at(self.scn.nodes[node_id].trajectory, t)
        if self.std > 0:
            off = self._offsets[node_id]
            tt = np.clip(np.asarray(t, float), 0.0, len(off) - 1.001)
            i = np.floor(tt).astype(int)
            frac = (tt - i)[..., None]
            pos = pos + off[i] * (1 - frac) + off[i + 1] * frac
        return pos

    def positions_at(self, t: float) -> dict:
        return {nid: self.node_position(nid, float(t)) for nid in self.scn.nodes}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def pair_calibration(scn: Scenario, seed: int, tx: Node, rx: Node) -> np.ndarray:
    """Combined tx+rx hardware chain excitation for one constellation."""
    resp = (hardware_response(scn.cfg, seed=_crc_seed(seed, tx.id, "hw"))
            * hardware_response(scn.cfg, seed=_crc_seed(seed, rx.id, "hw")))
    return b2b_reference(scn.cfg, resp)


def simulate(scn: Scenario, out_dir, seed: int | None = None) -> dict:
    """Synthesize every scheduled capture, the B2B records and telemetry."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cap_dir = out_dir / "captures"
    seed = scn.seed if seed is None else int(seed)
    positions = PositionSource(scn, seed)
    rx_nodes = scn.rx_nodes()
    n_sec = int(np.ceil(scn.duration_s))
    power_acc = {rx.id: np.zeros(n_sec) for rx in rx_nodes}
    power_cnt = {rx.id: np.zeros(n_sec) for rx in rx_nodes}
    captures = []
    b2b_written = set()
    for w_idx, window in enumerate(scn.schedule):
        tx = scn.nodes[window.tx_id]
        for rx in rx_nodes:
            x_cal = pair_calibration(scn, seed, tx, rx)
            if (tx.id, rx.id) not in b2b_written:
                b2b = synthesize_b2b_capture(
                    scn.cfg, x_cal, cable_attenuation_db=rx.cable_attenuation_db,
                    seed=_crc_seed(seed, tx.id, rx.id, "b2b") & 0x7FFFFFFF,
                    tx_id=tx.id, rx_id=rx.id)
                capture_io.write_capture(cap_dir, f"b2b__{tx.id}__{rx.id}", b2b)
                b2b_written.add((tx.id, rx.id))
            cap = synthesize_capture(
                scn.cfg, tx, rx, scn.targets, scn.clutter, x_cal,
                start_time_s=window.start_s,
                n_symbols=window.n_symbols(scn.cfg),
                seed=_crc_seed(seed, w_idx, tx.id, rx.id) & 0x7FFFFFFF)
            if scn.position_noise_std_m > 0 and cap.truth is not None:
                t_m = cap.truth.symbol_times_s
                p_tx = positions.node_position(tx.id, t_m)
                p_rx = positions.node_position(rx.id, t_m)
                cap.truth.los_delay_s = (np.linalg.norm(p_tx - p_rx, axis=-1)
                                         / 299792458.0)
            base = f"air__{tx.id}__{rx.id}__w{w_idx:02d}"
            capture_io.write_capture(cap_dir, base, cap)
            captures.append({"base": base, "tx_id": tx.id, "rx_id": rx.id,
                             "window": w_idx, "start_s": window.start_s,
                             "n_cpi": window.n_cpi})
            # accumulate per-second mean rx power for telemetry
            sec = np.floor(cap.truth.symbol_times_s).astype(int) if cap.truth is not None \
                else np.floor(cap.symbol_times()).astype(int)
            p_sym = np.mean(np.abs(cap.data) ** 2, axis=0)
            for s in np.unique(sec):
                if 0 <= s < n_sec:
                    sel = sec == s
                    power_acc[rx.id][s] += p_sym[sel].sum()
                    power_cnt[rx.id][s] += sel.sum()
            del cap

    records = []
    from .clock import clock_series
    for t_sec in range(n_sec):
        for node_id, node in scn.nodes.items():
            pos = positions.node_position(node_id, float(t_sec))
            if node.clock is not None:
                te, ffo = clock_series(node.clock, np.array([float(t_sec)]))
                te, ffo = float(te[0]), float(ffo[0])
            else:
                te, ffo = 0.0, 0.0
            rec = {"t_s": float(t_sec), "node_id": node_id,
                   "position_m": [float(x) for x in pos],
                   "clock_error_s": te, "ffo": ffo,
                   "rx_mean_power_dbm": None}
            if node.role == "rx" and power_cnt[node_id][t_sec] > 0:
                mean_p = power_acc[node_id][t_sec] / power_cnt[node_id][t_sec]
                rec["rx_mean_power_dbm"] = float(10 * np.log10(mean_p) + 30.0)
            records.append(rec)
    capture_io.write_telemetry(out_dir / "telemetry.jsonl", records)

    manifest = {"command": "simulate", "scenario": scn.name, "seed": seed,
                "duration_s": scn.duration_s,
                "position_noise_std_m": scn.position_noise_std_m,
                "captures_dir": str(cap_dir), "captures": captures,
                "processing": scn.processing.to_dict()}
    _write_text(out_dir / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# process
# ---------------------------------------------------------------------------

@dataclass
class _RxStreamResult:
    rx_id: str
    drift_rows: list
    detection_rows: list
    tracks: list
    cpi_table: list  # (global cpi, time_s, tx_id)
    exports: list


def _effective_cfg(cfg, params: ProcessingParams):
    if params.cpi_symbols is None or params.cpi_symbols == cfg.n_symbols_per_cpi:
        return cfg
    import dataclasses
    return dataclasses.replace(cfg, n_symbols_per_cpi=int(params.cpi_symbols))


def _rx_map_stream(sidecars, params: ProcessingParams, drift_rows, cpi_table):
    """Generator over one receiver's CPI maps across its capture windows."""
    cpi_base = 0
    for sc in sidecars:
        cap = capture_io.read_capture(sc)
        cap.cfg = _effective_cfg(cap.cfg, params)
        cap_dir = sc.parent
        b2b_path = capture_io.find_b2b(cap_dir, cap.tx_id, cap.rx_id)
        if b2b_path is None:
            raise DataError(
                f"no B2B calibration b2b__{cap.tx_id}__{cap.rx_id}.json in "
                f"{cap_dir}; re-run simulate or copy the calibration capture in")
        b2b = capture_io.read_capture(b2b_path)
        ctf = estimate_ctf(cap, b2b)
        if cap.truth is None:
            raise DataError(f"{sc}: capture has no ground-truth tables; "
                            "drift compensation needs the LoS reference")
        corrected, drift = compensate_drift(
            ctf, cap.truth.los_delay_s,
            window_halfwidth_s=params.drift_window_halfwidth_s,
            smooth_len=params.drift_smooth_symbols)
        del ctf, b2b
        for t, raw_e, e, raw_p, p in zip(drift.symbol_times_s,
                                         drift.raw_delay_error_s,
                                         drift.delay_error_s,
                                         drift.raw_phase_error_rad,
                                         drift.phase_error_rad):
            drift_rows.append([float(t), float(raw_e), float(e),
                               float(raw_p), float(p)])
        n_cpi = corrected.n_symbols // corrected.cfg.n_symbols_per_cpi
        for local in range(n_cpi):
            m = form_dd_map(corrected, local)
            m.cpi_index = cpi_base + local
            cpi_table.append((m.cpi_index, m.time_s, cap.tx_id))
            yield m
        cpi_base += n_cpi
        del corrected, cap


def _process_rx(rx_id: str, sidecars, params: ProcessingParams):
    drift_rows: list = []
    cpi_table: list = []
    detection_rows: list = []
    per_cpi_detections: list = []
    maps = subtract_background(
        _rx_map_stream(sidecars, params, drift_rows, cpi_table),
        alpha=params.background_alpha)
    # keep a handful of maps for the Fig-style exports: first, strongest, last
    first_map = champion = last_map = None
    ridge_power = []
    for m in maps:
        dets = detect_map(m, guard=params.cfar_guard, train=params.cfar_train,
                          pfa=params.cfar_pfa,
                          min_snr_db=params.min_detection_snr_db)
        per_cpi_detections.append((m.cpi_index, m.time_s, dets))
        zero_col = m.shape[1] // 2
        ridge_power.append(float(m.power[:, zero_col].sum()))
        for d in dets:
            detection_rows.append([m.cpi_index, float(m.time_s), float(d.delay_s),
                                   float(d.doppler_hz), float(d.snr_db),
                                   float(d.peak_power), int(d.interp_flagged)])
        if first_map is None:
            first_map = m
        if champion is None or m.power.max() > champion.power.max():
            champion = m
        last_map = m
    exports = []
    for m in (first_map, champion, last_map):
        if m is not None and all(m.cpi_index != e.cpi_index for e in exports):
            exports.append(m)
    exports.sort(key=lambda m: m.cpi_index)

    # tracker config needs the signal scales; read them off any capture
    cap0 = capture_io.read_capture(sidecars[0], with_truth=False)
    cfg0 = _effective_cfg(cap0.cfg, params)
    tcfg = TrackerConfig(f_c_hz=cfg0.f_c_hz, delay_bin_s=cfg0.delay_bin_s,
                         doppler_bin_hz=cfg0.doppler_bin_hz,
                         q_doppler=params.q_doppler, gate_chi2=params.gate_chi2,
                         confirm_m=params.confirm_m, confirm_n=params.confirm_n,
                         max_coast=params.max_coast)
    tracks = run_tracker(iter(per_cpi_detections), tcfg)
    return _RxStreamResult(rx_id=rx_id, drift_rows=drift_rows,
                           detection_rows=detection_rows, tracks=tracks,
                           cpi_table=cpi_table, exports=exports), ridge_power


def process(captures_dir, out_dir, overrides: dict | None = None) -> dict:
    """Run calibration, drift compensation, detection and tracking per rx."""
    captures_dir = Path(captures_dir)
    out_dir = Path(out_dir)
    proc_dir = out_dir / "processing"
    proc_dir.mkdir(parents=True, exist_ok=True)
    sidecars = capture_io.list_captures(captures_dir)
    if not sidecars:
        raise DataError(f"no captures found in {captures_dir}")
    sim_manifest = {}
    sim_path = captures_dir.parent / "manifest.json"
    if sim_path.exists():
        sim_manifest = json.loads(sim_path.read_text())
    params = ProcessingParams.from_dict(sim_manifest.get("processing", {}))
    for k, v in (overrides or {}).items():
        if v is not None:
            if not hasattr(params, k):
                raise ValueError(f"unknown processing override {k!r}")
            setattr(params, k, v)

    by_rx: dict[str, list[Path]] = {}
    for sc in sidecars:
        rx_id = json.loads(sc.read_text())["rx_id"]
        by_rx.setdefault(rx_id, []).append(sc)

    manifest = {"command": "process", "captures_dir": str(captures_dir),
                "seed": sim_manifest.get("seed"), "params": params.to_dict(),
                "receivers": {}}
    for rx_id, rx_sidecars in sorted(by_rx.items()):
        result, ridge = _process_rx(rx_id, rx_sidecars, params)
        files = {}
        files["drift"] = f"drift_{rx_id}.csv"
        _write_csv(proc_dir / files["drift"],
                   ["time_s", "raw_delay_error_s", "delay_error_s",
                    "raw_phase_error_rad", "phase_error_rad"], result.drift_rows)
        files["detections"] = f"detections_{rx_id}.csv"
        _write_csv(proc_dir / files["detections"],
                   ["cpi", "time_s", "delay_s", "doppler_hz", "snr_db",
                    "peak_power", "interp_flagged"], result.detection_rows)
        track_rows = []
        for trk in result.tracks:
            for pt in trk.history:
                track_rows.append([trk.track_id, pt.cpi_index, float(pt.time_s),
                                   float(pt.delay_s), float(pt.doppler_hz),
                                   float(np.sqrt(pt.cov[0, 0])),
                                   float(np.sqrt(pt.cov[1, 1])),
                                   pt.status, int(pt.associated)])
        files["tracks"] = f"tracks_{rx_id}.csv"
        _write_csv(proc_dir / files["tracks"],
                   ["track_id", "cpi", "time_s", "delay_s", "doppler_hz",
                    "sigma_delay_s", "sigma_doppler_hz", "status", "associated"],
                   track_rows)
        files["cpi_table"] = f"cpis_{rx_id}.csv"
        _write_csv(proc_dir / files["cpi_table"], ["cpi", "time_s", "tx_id"],
                   [[c, float(t), tx] for c, t, tx in result.cpi_table])
        files["ridge"] = f"ridge_{rx_id}.csv"
        _write_csv(proc_dir / files["ridge"], ["cpi", "zero_doppler_power"],
                   [[i, float(r)] for i, r in enumerate(ridge)])
        files["ddmaps"] = []
        for m in result.exports:
            base = f"ddmap_{rx_id}_cpi{m.cpi_index:04d}"
            grid = m.power.astype(np.float32)
            capture_io._atomic_write(proc_dir / f"{base}.npy",
                                     capture_io._npy_bytes(grid))
            meta = {"cpi_index": m.cpi_index, "time_s": m.time_s,
                    "delay_bin_s": m.delay_bin_s, "doppler_bin_hz": m.doppler_bin_hz,
                    "shape": list(m.shape), "tx_id": m.tx_id, "rx_id": m.rx_id}
            _write_text(proc_dir / f"{base}.json", json.dumps(meta, indent=1) + "\n")
            _render_ddmap_png(proc_dir / f"{base}.png", m)
            files["ddmaps"].append(base)
        manifest["receivers"][rx_id] = files
    _write_text(proc_dir / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return manifest


def _render_ddmap_png(path: Path, m) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    p = m.power
    peak = p.max() if p.max() > 0 else 1.0
    db = 10 * np.log10(np.maximum(p, peak * 1e-12))
    fig, ax = plt.subplots(figsize=(6, 4), dpi=110)
    extent = [m.dopplers()[0], m.dopplers()[-1],
              m.delays()[-1] * 1e6, m.delays()[0] * 1e6]
    im = ax.imshow(db, aspect="auto", extent=extent, cmap="viridis",
                   vmax=db.max(), vmin=db.max() - 50)
    ax.set_xlabel("Doppler (Hz)")
    ax.set_ylabel("bistatic delay (us)")
    ax.set_title(f"rx {m.rx_id}  CPI {m.cpi_index}  t={m.time_s:.2f} s")
    fig.colorbar(im, ax=ax, label="power (dB)")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# localize
# ---------------------------------------------------------------------------

def _scenario_bounds(scn: Scenario, margin: float = 30.0):
    """Search volume for the position solver: everything the scenario
    declares (node and target trajectories) plus a margin."""
    pts = [n.trajectory.positions for n in scn.nodes.values()]
    pts += [t.trajectory.positions for t in scn.targets]
    allp = np.vstack(pts)
    return list(zip(allp.min(axis=0) - margin, allp.max(axis=0) + margin))


def _tracks_from_csv(path: Path) -> list[TrackState]:
    header, rows = _read_csv(path)
    col = {name: i for i, name in enumerate(header)}
    by_id: dict[int, TrackState] = {}
    for r in rows:
        tid = int(r[col["track_id"]])
        trk = by_id.setdefault(tid, TrackState(track_id=tid, x=np.zeros(2),
                                               cov=np.eye(2)))
        s_tau = float(r[col["sigma_delay_s"]])
        s_dop = float(r[col["sigma_doppler_hz"]])
        trk.history.append(TrackPoint(
            cpi_index=int(r[col["cpi"]]), time_s=float(r[col["time_s"]]),
            delay_s=float(r[col["delay_s"]]),
            doppler_hz=float(r[col["doppler_hz"]]),
            cov=np.diag([s_tau ** 2, s_dop ** 2]),
            status=r[col["status"]], associated=bool(int(r[col["associated"]]))))
    return list(by_id.values())


def localize_cmd(process_out, scn: Scenario, out_dir) -> dict:
    """Fuse the per-receiver delay tracks into position fixes + error report."""
    proc_dir = Path(process_out)
    if (proc_dir / "processing").is_dir():
        proc_dir = proc_dir / "processing"
    man_path = proc_dir / "manifest.json"
    if not man_path.exists():
        raise DataError(f"no processing manifest in {proc_dir}")
    proc_man = json.loads(man_path.read_text())
    receivers = proc_man.get("receivers", {})
    if len(receivers) < scn.processing.min_receivers:
        raise DataError(f"only {len(receivers)} receiver track sets in {proc_dir}; "
                        f"need >= {scn.processing.min_receivers}")
    out_dir = Path(out_dir)
    loc_dir = out_dir / "localization"
    loc_dir.mkdir(parents=True, exist_ok=True)

    per_rx = {}
    tx_for_cpi: dict[int, str] = {}
    n_cpi_total = 0
    for rx_id, files in receivers.items():
        per_rx[rx_id] = _tracks_from_csv(proc_dir / files["tracks"])
        _, cpi_rows = _read_csv(proc_dir / files["cpi_table"])
        n_cpi_total = max(n_cpi_total, len(cpi_rows))
        for r in cpi_rows:
            tx_for_cpi[int(r[0])] = r[2]

    seed = proc_man.get("seed")
    positions = PositionSource(scn, scn.seed if seed is None else int(seed))
    fixes = localize_track(per_rx, tx_for_cpi, positions.positions_at,
                           min_receivers=scn.processing.min_receivers,
                           sigma_floor_s=scn.processing.sigma_floor_s,
                           bounds=_scenario_bounds(scn))

    fix_rows = []
    err_rows = []
    errors = []
    truth_traj: Trajectory | None = scn.targets[0].trajectory if scn.targets else None
    for f in fixes:
        fix_rows.append([float(f.time_s)] + [float(x) for x in f.position]
                        + [float(np.sqrt(f.covariance[i, i])) for i in range(3)]
                        + [f.n_obs, int(f.converged), float(f.rss_residual_s2)])
        if truth_traj is not None and truth_traj.t_start <= f.time_s <= truth_traj.t_end:
            p_true = position_at(truth_traj, f.time_s)
            e = f.position - p_true
            errors.append(np.linalg.norm(e))
            err_rows.append([float(f.time_s)] + [float(x) for x in e]
                            + [float(np.linalg.norm(e))])
    _write_csv(loc_dir / "fixes.csv",
               ["time_s", "x_m", "y_m", "z_m", "sx_m", "sy_m", "sz_m",
                "n_obs", "converged", "rss_residual_s2"], fix_rows)
    _write_csv(loc_dir / "errors.csv",
               ["time_s", "ex_m", "ey_m", "ez_m", "norm_m"], err_rows)
    summary = {
        "n_fixes": len(fixes),
        "n_cpi_total": n_cpi_total,
        "fix_rate": len(fixes) / n_cpi_total if n_cpi_total else 0.0,
        "rmse_3d_m": float(np.sqrt(np.mean(np.square(errors)))) if errors else None,
        "ce90_m": float(np.percentile(errors, 90)) if errors else None,
        "mean_error_m": float(np.mean(errors)) if errors else None,
    }
    manifest = {"command": "localize", "processing_dir": str(proc_dir),
                "captures_dir": proc_man.get("captures_dir"),
                "summary": summary}
    _write_text(loc_dir / "summary.json", json.dumps(summary, indent=1) + "\n")
    _write_text(loc_dir / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def report(out_dir) -> Path:
    """Consolidated summary: drift traces, maps with tracks, error series."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    rep_dir = out_dir / "report"
    rep_dir.mkdir(parents=True, exist_ok=True)
    loc_dir = out_dir / "localization"
    proc_dir = out_dir / "processing"
    if not proc_dir.is_dir() and (out_dir / "manifest.json").exists():
        # maybe pointed at the localization output of a chained run
        man = json.loads((out_dir / "manifest.json").read_text())
        proc_dir = Path(man.get("processing_dir", proc_dir))
    lines = ["# Sounding campaign report", ""]
    notes = []

    drift_files = sorted(proc_dir.glob("drift_*.csv")) if proc_dir.is_dir() else []
    if drift_files:
        fig, ax = plt.subplots(figsize=(7, 4), dpi=110)
        for path in drift_files:
            _, rows = _read_csv(path)
            t = np.array([float(r[0]) for r in rows])
            raw = np.array([float(r[1]) for r in rows])
            step = max(1, len(t) // 4000)
            ax.plot(t[::step], raw[::step] * 1e9, lw=0.8,
                    label=path.stem.replace("drift_", ""))
        ax.set_xlabel("time (s)")
        ax.set_ylabel("LoS delay error (ns)")
        ax.set_title("Per-receiver synchronization error (raw)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(rep_dir / "sync_error.png", metadata={"Software": None})
        plt.close(fig)
        lines += ["## Synchronization error", "",
                  "Per-receiver LoS delay error vs ground truth, before "
                  "smoothing/compensation.", "", "![sync](sync_error.png)", ""]
    else:
        notes.append("drift tables not found; synchronization section skipped")

    dd_meta = sorted(proc_dir.glob("ddmap_*.json")) if proc_dir.is_dir() else []
    if dd_meta:
        lines += ["## Delay-Doppler maps", ""]
        for meta_path in dd_meta:
            png = meta_path.with_suffix(".png").name
            if (proc_dir / png).exists():
                target = rep_dir / png
                target.write_bytes((proc_dir / png).read_bytes())
                lines.append(f"![{png}]({png})")
        lines.append("")
    else:
        notes.append("no exported delay-Doppler maps found")

    err_csv = loc_dir / "errors.csv"
    if err_csv.exists():
        _, rows = _read_csv(err_csv)
        if rows:
            t = np.array([float(r[0]) for r in rows])
            e = np.array([float(r[4]) for r in rows])
            fig, ax = plt.subplots(figsize=(7, 3.5), dpi=110)
            ax.plot(t, e, "o-", ms=3, lw=0.9)
            ax.set_xlabel("time (s)")
            ax.set_ylabel("3D position error (m)")
            ax.set_title("Localization error vs ground truth")
            ax.grid(alpha=0.3)
            fig.tight_layout()
            fig.savefig(rep_dir / "localization_error.png",
                        metadata={"Software": None})
            plt.close(fig)
            lines += ["## Localization error", "",
                      "![loc](localization_error.png)", ""]
        summary_path = loc_dir / "summary.json"
        if summary_path.exists():
            summary = json.loads(summary_path.read_text())
            lines += ["### Summary", "", "```json",
                      json.dumps(summary, indent=1), "```", ""]
    else:
        notes.append("localization outputs not found; error section skipped")

    if notes:
        lines += ["## Notes", ""] + [f"- {n}" for n in notes] + [""]
    _write_text(rep_dir / "report.md", "\n".join(lines))
    return rep_dir / "report.md"

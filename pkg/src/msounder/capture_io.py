"""Bit-exact capture persistence and telemetry logs.

A capture is two (optionally three) files sharing a base name:
``<base>.iq`` holds the payload as little-endian float32 (real, imag)
pairs in symbol-major order Y[m][k]; ``<base>.json`` is the human-readable
sidecar with the signal config, node ids, seed and the payload SHA-256;
``<base>.truth.npy`` (optional) packs the ground-truth tables as one plain
float64 array whose row names live in the sidecar. Plain .npy rather than
a zip container keeps re-runs byte-identical (no archive timestamps).

Telemetry is an append-only JSON-lines file, one record per node per
second of simulated time.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .synth import Capture, CaptureTruth
from .waveform import SignalConfig

SCHEMA_VERSION = 1


class DataError(RuntimeError):
    """Missing, truncated or corrupted data files."""


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _payload_bytes(cap: Capture) -> bytes:
    inter = np.empty((cap.n_symbols, cap.cfg.n_subcarriers, 2), dtype="<f4")
    inter[:, :, 0] = cap.data.T.real
    inter[:, :, 1] = cap.data.T.imag
    return inter.tobytes()


TRUTH_SCALAR_FIELDS = ["symbol_times_s", "los_delay_s", "tx_time_error_s",
                       "rx_time_error_s", "tx_ffo", "rx_ffo"]


def _truth_matrix(truth: CaptureTruth):
    rows, names = [], []
    for name in TRUTH_SCALAR_FIELDS:
        arr = getattr(truth, name)
        if arr is not None:
            rows.append(np.asarray(arr, float))
            names.append(name)
    for tid in sorted(truth.target_delay_s):
        rows.append(np.asarray(truth.target_delay_s[tid], float))
        names.append(f"target_delay_s:{tid}")
    for tid in sorted(truth.target_doppler_hz):
        rows.append(np.asarray(truth.target_doppler_hz[tid], float))
        names.append(f"target_doppler_hz:{tid}")
    return np.vstack(rows), names


def _truth_from_matrix(mat: np.ndarray, names: list[str]) -> CaptureTruth:
    by = {n: mat[i] for i, n in enumerate(names)}
    truth = CaptureTruth(symbol_times_s=by["symbol_times_s"],
                         los_delay_s=by["los_delay_s"])
    for n in TRUTH_SCALAR_FIELDS[2:]:
        if n in by:
            setattr(truth, n, by[n])
    for n, row in by.items():
        if n.startswith("target_delay_s:"):
            truth.target_delay_s[n.split(":", 1)[1]] = row
        elif n.startswith("target_doppler_hz:"):
            truth.target_doppler_hz[n.split(":", 1)[1]] = row
    return truth


def write_capture(directory, base: str, cap: Capture) -> Path:
    """Write payload, sidecar and truth table; returns the sidecar path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = _payload_bytes(cap)
    _atomic_write(directory / f"{base}.iq", payload)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": cap.kind,
        "tx_id": cap.tx_id,
        "rx_id": cap.rx_id,
        "start_time_s": cap.start_time_s,
        "seed": cap.seed,
        "cable_attenuation_db": cap.cable_attenuation_db,
        "n_symbols": cap.n_symbols,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "signal": {
            "f_c_hz": cap.cfg.f_c_hz,
            "bandwidth_hz": cap.cfg.bandwidth_hz,
            "n_subcarriers": cap.cfg.n_subcarriers,
            "t_symbol_s": cap.cfg.t_symbol_s,
            "n_symbols_per_cpi": cap.cfg.n_symbols_per_cpi,
        },
    }
    if cap.truth is not None:
        mat, names = _truth_matrix(cap.truth)
        buf = _npy_bytes(mat)
        _atomic_write(directory / f"{base}.truth.npy", buf)
        meta["truth_rows"] = names
        meta["truth_sha256"] = hashlib.sha256(buf).hexdigest()
    _atomic_write(directory / f"{base}.json",
                  (json.dumps(meta, indent=1) + "\n").encode())
    return directory / f"{base}.json"


def _npy_bytes(arr: np.ndarray) -> bytes:
    import io
    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def read_capture(sidecar_path, verify: bool = True,
                 with_truth: bool = True) -> Capture:
    """Load a capture from its sidecar path; verifies the payload hash."""
    sidecar_path = Path(sidecar_path)
    if not sidecar_path.exists():
        raise DataError(f"missing capture sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{sidecar_path}: unsupported schema version "
                        f"{meta.get('schema_version')}")
    base = sidecar_path.with_suffix("")  # strips .json
    iq_path = base.with_name(base.name + ".iq")
    if not iq_path.exists():
        raise DataError(f"missing capture payload {iq_path}")
    payload = iq_path.read_bytes()
    sig = meta["signal"]
    cfg = SignalConfig(f_c_hz=sig["f_c_hz"], bandwidth_hz=sig["bandwidth_hz"],
                       n_subcarriers=sig["n_subcarriers"],
                       t_symbol_s=sig["t_symbol_s"],
                       n_symbols_per_cpi=sig["n_symbols_per_cpi"])
    expected = 8 * cfg.n_subcarriers * meta["n_symbols"]
    if len(payload) != expected:
        raise DataError(f"{iq_path}: payload is {len(payload)} bytes, "
                        f"expected {expected}")
    if verify and hashlib.sha256(payload).hexdigest() != meta["payload_sha256"]:
        raise DataError(f"{iq_path}: payload hash mismatch (file corrupted?)")
    inter = np.frombuffer(payload, dtype="<f4").reshape(meta["n_symbols"],
                                                        cfg.n_subcarriers, 2)
    data = (inter[:, :, 0].astype(np.float64)
            + 1j * inter[:, :, 1].astype(np.float64)).T
    truth = None
    truth_path = base.with_name(base.name + ".truth.npy")
    if with_truth and "truth_rows" in meta and truth_path.exists():
        buf = truth_path.read_bytes()
        if verify and hashlib.sha256(buf).hexdigest() != meta.get("truth_sha256"):
            raise DataError(f"{truth_path}: truth table hash mismatch")
        import io
        mat = np.load(io.BytesIO(buf))
        truth = _truth_from_matrix(mat, meta["truth_rows"])
    return Capture(tx_id=meta["tx_id"], rx_id=meta["rx_id"], cfg=cfg,
                   start_time_s=meta["start_time_s"], data=data,
                   seed=meta["seed"], kind=meta["kind"],
                   cable_attenuation_db=meta["cable_attenuation_db"],
                   truth=truth)


def list_captures(directory) -> list[Path]:
    """Sidecar paths of all air captures, sorted by (rx, start time)."""
    directory = Path(directory)
    out = []
    for p in sorted(directory.glob("*.json")):
        try:
            meta = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if meta.get("schema_version") == SCHEMA_VERSION:
            out.append((meta.get("rx_id", ""), meta.get("start_time_s", 0.0),
                        meta.get("kind"), p))
    return [p for _, _, kind, p in sorted(out, key=lambda r: (r[0], r[1]))
            if kind == "air"]


def find_b2b(directory, tx_id: str, rx_id: str) -> Path | None:
    directory = Path(directory)
    p = directory / f"b2b__{tx_id}__{rx_id}.json"
    return p if p.exists() else None


# ---------------------------------------------------------------------------
# Telemetry
# ---------------------------------------------------------------------------

def write_telemetry(path, records: list[dict]):
    """Line-delimited JSON, one record per node per simulated second."""
    lines = [json.dumps(r) for r in records]
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode() if lines else b"")


def read_telemetry(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing telemetry log {p}")
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]

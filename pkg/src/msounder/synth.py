"""Synthesize per-receiver captures in the subcarrier domain.

A capture is the matrix Y[k, m] of per-symbol frequency-domain samples a
receiver would record: line of sight, target echoes via the bistatic radar
equation, declared static clutter, differential clock impairments and
thermal noise. Paths are quasi-static within one symbol (a 30 m/s target
moves 0.5 mm in 16 us, far below the range resolution), which lets the
whole synthesis stay in the frequency domain - no fractional resampling.

Path phases track the instantaneous geometry from symbol to symbol, so the
slow-time phase progression of an echo is the integral of its Doppler
shift; the explicit Doppler argument of `synthesize_from_paths` is for
constant-parameter injections where the linear-phase form is exact.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from ._phasor import subcarrier_phasors
from .clock import ClockModel, clock_series
from .scene import (SPEED_OF_LIGHT, ClutterTap, GeometryError, Node, Target,
                    antenna_gain, bistatic_doppler, position_at, velocity_at)
from .waveform import SignalConfig


class PathAliasError(ValueError):
    """A path delay reached or exceeded the symbol duration."""


@dataclass
class CaptureTruth:
    """Ground-truth sidecar aligned with capture symbol centers."""

    symbol_times_s: np.ndarray
    los_delay_s: np.ndarray
    target_delay_s: dict[str, np.ndarray] = field(default_factory=dict)
    target_doppler_hz: dict[str, np.ndarray] = field(default_factory=dict)
    tx_time_error_s: np.ndarray | None = None
    rx_time_error_s: np.ndarray | None = None
    tx_ffo: np.ndarray | None = None
    rx_ffo: np.ndarray | None = None


@dataclass
class Capture:
    """Per-receiver record of one scheduled sounding window."""

    tx_id: str
    rx_id: str
    cfg: SignalConfig
    start_time_s: float
    data: np.ndarray  # complex (n_subcarriers, n_symbols)
    seed: int = 0
    kind: str = "air"  # "air" | "b2b"
    cable_attenuation_db: float = 0.0  # b2b captures only
    truth: CaptureTruth | None = None

    def __post_init__(self):
        n, m = self.data.shape
        if n != self.cfg.n_subcarriers:
            raise ValueError(f"capture rows {n} != n_subcarriers {self.cfg.n_subcarriers}")
        if self.truth is not None and len(self.truth.symbol_times_s) != m:
            raise ValueError("truth tables misaligned with capture symbols")

    @property
    def n_symbols(self) -> int:
        return self.data.shape[1]

    def symbol_times(self) -> np.ndarray:
        m = np.arange(self.n_symbols)
        return self.start_time_s + (m + 0.5) * self.cfg.t_symbol_s


# ---------------------------------------------------------------------------
# Link budget
# ---------------------------------------------------------------------------

def _dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def los_gain(eirp_dbm, g_tx_db, g_rx_db, f_c: float, range_m):
    """Complex voltage gain of the direct path (Friis, 1 V^2 = 1 W reference).

    g_tx_db is the tx pattern gain relative to the boresight the EIRP is
    quoted at; phase is the carrier phase -2*pi*f_c*range/c.
    """
    r = np.asarray(range_m, dtype=float)
    if np.any(r <= 0):
        raise GeometryError("LoS range must be positive")
    lam = SPEED_OF_LIGHT / f_c
    amp = np.sqrt(_dbm_to_w(np.asarray(eirp_dbm, float) + np.asarray(g_tx_db, float)
                            + np.asarray(g_rx_db, float))) * lam / (4 * np.pi * r)
    phase = np.mod(-2 * np.pi * f_c * r / SPEED_OF_LIGHT, 2 * np.pi)
    out = amp * np.exp(1j * phase)
    return complex(out) if out.ndim == 0 else out


def target_gain(eirp_dbm, g_tx_db, g_rx_db, f_c: float, r_tx_m, r_rx_m,
                rcs_dbsm, scatter_phase_rad=0.0):
    """Complex voltage gain of a bistatic echo (standard radar equation)."""
    r1 = np.asarray(r_tx_m, dtype=float)
    r2 = np.asarray(r_rx_m, dtype=float)
    if np.any(r1 <= 0) or np.any(r2 <= 0):
        raise GeometryError("bistatic ranges must be positive")
    lam = SPEED_OF_LIGHT / f_c
    sigma = 10.0 ** (np.asarray(rcs_dbsm, float) / 10.0)
    power = (_dbm_to_w(np.asarray(eirp_dbm, float) + np.asarray(g_tx_db, float)
                       + np.asarray(g_rx_db, float))
             * lam ** 2 * sigma / ((4 * np.pi) ** 3 * r1 ** 2 * r2 ** 2))
    phase = -2 * np.pi * f_c * (r1 + r2) / SPEED_OF_LIGHT + scatter_phase_rad
    out = np.sqrt(power) * np.exp(1j * phase)
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Core frequency-domain synthesis kernel
# ---------------------------------------------------------------------------

def synthesize_from_paths(cfg: SignalConfig, x_cal: np.ndarray,
                          gains: np.ndarray, delays_s: np.ndarray,
                          dopplers_hz: np.ndarray, symbol_times_s: np.ndarray,
                          noise_std: float = 0.0,
                          rng: np.random.Generator | None = None,
                          path_names: list[str] | None = None) -> np.ndarray:
    """Y[k,m] = sum_p g[p,m] exp(-j2pi f_k tau[p,m]) exp(j2pi fD[p,m] t_m) X[k] + N.

    gains/delays/dopplers are (P, M) arrays (or (P,), broadcast over
    symbols). Delays must sit in [0, t_symbol); noise is circular complex
    Gaussian with per-sample variance noise_std**2.
    """
    t_m = np.asarray(symbol_times_s, dtype=float)
    m_count = len(t_m)
    g = np.atleast_2d(np.asarray(gains, dtype=complex))
    tau = np.atleast_2d(np.asarray(delays_s, dtype=float))
    f_d = np.atleast_2d(np.asarray(dopplers_hz, dtype=float))
    n_paths = max(g.shape[0], tau.shape[0], f_d.shape[0])
    g = np.broadcast_to(g, (n_paths, m_count))
    tau = np.broadcast_to(tau, (n_paths, m_count))
    f_d = np.broadcast_to(f_d, (n_paths, m_count))
    if np.any(tau < 0) or np.any(tau >= cfg.t_symbol_s):
        p_bad = int(np.argwhere((tau < 0) | (tau >= cfg.t_symbol_s))[0][0])
        name = path_names[p_bad] if path_names else f"path {p_bad}"
        raise PathAliasError(
            f"{name}: delay outside [0, {cfg.t_symbol_s:g} s) symbol span "
            f"(min {tau[p_bad].min():.3e}, max {tau[p_bad].max():.3e} s)")
    out = np.zeros((cfg.n_subcarriers, m_count), dtype=complex)
    for p in range(g.shape[0]):
        slow = g[p] * np.exp(2j * np.pi * f_d[p] * t_m)
        out += subcarrier_phasors(cfg, tau[p], sign=-1.0) * slow[None, :]
    out *= np.asarray(x_cal, dtype=complex)[:, None]
    if noise_std > 0:
        if rng is None:
            rng = np.random.default_rng()
        out += (noise_std / np.sqrt(2)) * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
    return out


def noise_std_for(cfg: SignalConfig, noise_floor_dbm_hz: float) -> float:
    """Per-sample noise standard deviation from a receiver noise density."""
    total = _dbm_to_w(noise_floor_dbm_hz) * cfg.bandwidth_hz
    return float(np.sqrt(total / cfg.n_subcarriers))


def _string_seed(*parts) -> np.random.SeedSequence:
    words = [p & 0xFFFFFFFF if isinstance(p, int) else zlib.crc32(str(p).encode())
             for p in parts]
    return np.random.SeedSequence(words)


# ---------------------------------------------------------------------------
# Scenario-driven capture synthesis
# ---------------------------------------------------------------------------

def synthesize_capture(cfg: SignalConfig, tx: Node, rx: Node,
                       targets: list[Target], clutter: list[ClutterTap],
                       x_cal: np.ndarray, start_time_s: float, n_symbols: int,
                       seed: int, with_noise: bool = True,
                       with_truth: bool = True,
                       chunk_symbols: int = 16384) -> Capture:
    """Synthesize the capture one receiver records during one tx window.

    Per symbol: geometry-derived complex gains and delays for the LoS, one
    echo per target and the receiver's declared clutter taps; differential
    clock timing error added to every path delay; the common oscillator
    phase applied as the integral of the CFO; white circular noise at the
    receiver noise density. Deterministic for a given seed and
    chunk_symbols value (the chunking sets where noise draws fall, so it is
    a fixed constant in the pipeline, not a tuning knob).
    """
    if tx.role != "tx" or rx.role != "rx":
        raise ValueError(f"need tx/rx roles, got {tx.role}/{rx.role}")
    t_all = start_time_s + (np.arange(n_symbols) + 0.5) * cfg.t_symbol_s
    rng = np.random.default_rng(_string_seed(seed, tx.id, rx.id))
    scatter = {tgt.id: np.random.default_rng(_string_seed(seed, tgt.id, "scatter"))
               .uniform(0, 2 * np.pi) for tgt in targets}
    noise_std = noise_std_for(cfg, rx.noise_floor_dbm_hz) if with_noise else 0.0
    rx_clutter = [c for c in clutter if c.rx_id == rx.id]

    data = np.empty((cfg.n_subcarriers, n_symbols), dtype=complex)
    truth = None
    if with_truth:
        truth = CaptureTruth(symbol_times_s=t_all,
                             los_delay_s=np.empty(n_symbols),
                             target_delay_s={t.id: np.empty(n_symbols) for t in targets},
                             target_doppler_hz={t.id: np.empty(n_symbols) for t in targets})

    tx_clock = tx.clock if isinstance(tx.clock, ClockModel) else ClockModel("ideal-tx")
    rx_clock = rx.clock if isinstance(rx.clock, ClockModel) else ClockModel("ideal-rx")
    te_tx, ffo_tx = clock_series(tx_clock, t_all)
    te_rx, ffo_rx = clock_series(rx_clock, t_all)
    dte0 = rx_clock.initial_time_offset_s - tx_clock.initial_time_offset_s
    # common oscillator phase: f_c times the accumulated differential drift
    cfo_phase = 2 * np.pi * cfg.f_c_hz * ((te_rx - te_tx) - dte0)
    if with_truth:
        truth.tx_time_error_s, truth.rx_time_error_s = te_tx, te_rx
        truth.tx_ffo, truth.rx_ffo = ffo_tx, ffo_rx

    for lo in range(0, n_symbols, chunk_symbols):
        hi = min(lo + chunk_symbols, n_symbols)
        t_m = t_all[lo:hi]
        p_tx = position_at(tx.trajectory, t_m)
        p_rx = position_at(rx.trajectory, t_m)
        d_los = p_rx - p_tx
        r_los = np.linalg.norm(d_los, axis=-1)
        if np.any(r_los == 0):
            raise GeometryError("tx and rx coincide during the capture window")
        g_tx_los = antenna_gain(tx.antenna, d_los)
        g_rx_los = antenna_gain(rx.antenna, -d_los)
        g_los = los_gain(tx.eirp_dbm, g_tx_los,
                         np.asarray(g_rx_los) - rx.los_attenuation_db,
                         cfg.f_c_hz, r_los)
        tau_los = r_los / SPEED_OF_LIGHT

        gains = [g_los]
        delays = [tau_los]
        names = ["los"]
        for tgt in targets:
            p_t = position_at(tgt.trajectory, t_m)
            v_t = velocity_at(tgt.trajectory, t_m)
            d1 = p_t - p_tx
            d2 = p_t - p_rx
            r1 = np.linalg.norm(d1, axis=-1)
            r2 = np.linalg.norm(d2, axis=-1)
            if np.any(r1 == 0) or np.any(r2 == 0):
                raise GeometryError(f"target {tgt.id!r} coincides with an endpoint")
            g_t = target_gain(tx.eirp_dbm, antenna_gain(tx.antenna, d1),
                              antenna_gain(rx.antenna, d2), cfg.f_c_hz,
                              r1, r2, tgt.rcs_dbsm, scatter[tgt.id])
            gains.append(g_t)
            delays.append((r1 + r2) / SPEED_OF_LIGHT)
            names.append(f"target:{tgt.id}")
            if with_truth:
                truth.target_delay_s[tgt.id][lo:hi] = (r1 + r2) / SPEED_OF_LIGHT
                truth.target_doppler_hz[tgt.id][lo:hi] = bistatic_doppler(
                    p_tx, p_t, v_t, p_rx, cfg.f_c_hz,
                    v_tx=velocity_at(tx.trajectory, t_m),
                    v_rx=velocity_at(rx.trajectory, t_m))
        for i, tap in enumerate(rx_clutter):
            gains.append(np.abs(g_los) * 10.0 ** (tap.gain_db / 20.0)
                         * np.exp(1j * tap.phase_rad))
            delays.append(np.full(hi - lo, tap.delay_s))
            names.append(f"clutter:{rx.id}[{i}]")
        if with_truth:
            truth.los_delay_s[lo:hi] = tau_los

        dte = (te_rx - te_tx)[lo:hi]
        eff_delays = np.stack([np.broadcast_to(d, (hi - lo,)) for d in delays]) + dte
        eff_gains = np.stack([np.broadcast_to(np.asarray(g, complex), (hi - lo,))
                              for g in gains])
        eff_gains = eff_gains * np.exp(1j * cfo_phase[lo:hi])[None, :]
        data[:, lo:hi] = synthesize_from_paths(
            cfg, x_cal, eff_gains, eff_delays, np.zeros((1, hi - lo)), t_m,
            noise_std=noise_std, rng=rng, path_names=names)

    return Capture(tx_id=tx.id, rx_id=rx.id, cfg=cfg, start_time_s=start_time_s,
                   data=data, seed=seed, truth=truth)


def synthesize_b2b_capture(cfg: SignalConfig, x_cal: np.ndarray,
                           cable_attenuation_db: float = 30.0,
                           snr_db: float = 70.0, seed: int = 0,
                           tx_id: str = "tx", rx_id: str = "rx",
                           n_symbols: int | None = None) -> Capture:
    """Cabled tx->rx calibration capture: zero delay, known attenuation.

    Records the per-subcarrier product symbol*hardware response at a high
    SNR (>= 60 dB); averaging its symbols gives the division reference.
    """
    if n_symbols is None:
        n_symbols = cfg.n_symbols_per_cpi
    atten = 10.0 ** (-cable_attenuation_db / 20.0)
    rng = np.random.default_rng(_string_seed(seed, tx_id, rx_id, "b2b"))
    rms = atten * float(np.sqrt(np.mean(np.abs(x_cal) ** 2)))
    noise_std = rms * 10.0 ** (-snr_db / 20.0)
    data = np.tile(atten * np.asarray(x_cal, complex)[:, None], (1, n_symbols))
    data = data + (noise_std / np.sqrt(2)) * (
        rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    return Capture(tx_id=tx_id, rx_id=rx_id, cfg=cfg, start_time_s=0.0,
                   data=data, seed=seed, kind="b2b",
                   cable_attenuation_db=cable_attenuation_db)

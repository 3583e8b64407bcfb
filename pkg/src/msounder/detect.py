"""Delay-Doppler map formation, clutter removal, SO-CFAR, peak refinement.

One coherent processing interval (CPI) of the corrected channel transfer
function becomes a complex delay-Doppler map; an exponential moving
background of the complex maps removes static clutter; a smallest-of CFAR
thresholds the residual power, and detected cells are refined off-grid by
independent three-point parabolic interpolation of the dB power along each
axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.signal.windows import hann

from .sounding import CtfRecord
from .waveform import SignalConfig


@dataclass
class DelayDopplerMap:
    """Complex map over bistatic delay x Doppler for one CPI."""

    cpi_index: int
    time_s: float
    cmap: np.ndarray  # complex (n_delay, n_doppler), Doppler axis centered
    delay_bin_s: float
    doppler_bin_hz: float
    tx_id: str = ""
    rx_id: str = ""
    _power: np.ndarray | None = field(default=None, repr=False)

    @property
    def power(self) -> np.ndarray:
        if self._power is None:
            self._power = np.abs(self.cmap) ** 2
        return self._power

    @property
    def shape(self):
        return self.cmap.shape

    def delays(self) -> np.ndarray:
        return np.arange(self.cmap.shape[0]) * self.delay_bin_s

    def dopplers(self) -> np.ndarray:
        m = self.cmap.shape[1]
        return (np.arange(m) - m // 2) * self.doppler_bin_hz


@dataclass
class CellDetection:
    """One CFAR threshold crossing, still on the map grid."""

    delay_idx: int
    doppler_idx: int
    power: float
    noise_power: float

    @property
    def snr_db(self) -> float:
        return 10.0 * np.log10(self.power / self.noise_power)


@dataclass
class Detection:
    """Off-grid measurement after parabolic refinement."""

    cpi_index: int
    time_s: float
    delay_s: float
    doppler_hz: float
    snr_db: float
    peak_power: float
    delay_idx: int = 0
    doppler_idx: int = 0
    interp_flagged: bool = False


def _window(kind: str, n: int) -> np.ndarray:
    if kind in ("rect", "none", None):
        return np.ones(n)
    if kind == "hann":
        return hann(n, sym=False)
    raise ValueError(f"unknown window {kind!r}")


def form_dd_map(ctf: CtfRecord, cpi_index: int, doppler_window: str = "hann",
                delay_window: str = "hann") -> DelayDopplerMap:
    """Delay transform over subcarriers, windowed DFT over slow time.

    Both axes are windowed (Hann by default): the slow-time window keeps
    platform clutter spread from masking slow targets, the subcarrier
    window keeps the delay sidelobes of a strong echo from flooding the
    detector. Normalized so a unit-amplitude matched path peaks at |1|.
    """
    cfg = ctf.cfg
    m_per = cfg.n_symbols_per_cpi
    lo, hi = cpi_index * m_per, (cpi_index + 1) * m_per
    if cpi_index < 0 or hi > ctf.n_symbols:
        raise ValueError(
            f"CPI {cpi_index} ([{lo}, {hi})) not fully inside the {ctf.n_symbols}-symbol record")
    w_d = _window(delay_window, cfg.n_subcarriers)
    w_s = _window(doppler_window, m_per)
    block = ctf.h[:, lo:hi] * w_d[:, None]
    a = cfg.n_subcarriers * np.fft.ifft(np.fft.ifftshift(block, axes=0), axis=0)
    a /= np.sum(w_d)
    g = np.fft.fftshift(np.fft.fft(a * w_s[None, :], axis=1), axes=1)
    g /= np.sum(w_s)
    t_center = ctf.start_time_s + (cpi_index + 0.5) * cfg.cpi_duration_s
    return DelayDopplerMap(cpi_index=cpi_index, time_s=t_center, cmap=g,
                           delay_bin_s=cfg.delay_bin_s,
                           doppler_bin_hz=cfg.doppler_bin_hz,
                           tx_id=ctf.tx_id, rx_id=ctf.rx_id)


def subtract_background(maps, alpha: float = 0.9):
    """Exponential moving background over complex maps, previous-background
    subtraction.

    B_0 = C_0 and the n-th output is C_n - B_{n-1} (the first output is all
    zero by convention), so a target moving at least one cell per CPI never
    subtracts itself in a freshly entered cell. Generator over a map stream.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"forgetting factor must be in [0, 1), got {alpha}")
    background = None
    for m in maps:
        if background is None:
            out = np.zeros_like(m.cmap)
            background = m.cmap.copy()
        else:
            out = m.cmap - background
            background *= alpha
            background += (1.0 - alpha) * m.cmap
        yield DelayDopplerMap(cpi_index=m.cpi_index, time_s=m.time_s, cmap=out,
                              delay_bin_s=m.delay_bin_s,
                              doppler_bin_hz=m.doppler_bin_hz,
                              tx_id=m.tx_id, rx_id=m.rx_id)


# ---------------------------------------------------------------------------
# SO-CFAR
# ---------------------------------------------------------------------------

def so_cfar_window_counts(guard=(2, 2), train=(8, 4)) -> int:
    """Training cells in each (leading or lagging) half-window."""
    g_d, g_v = guard
    t_d, t_v = train
    return t_d * (2 * (g_v + t_v) + 1) + g_d * 2 * t_v


def so_cfar(dd_map, guard=(2, 2), train=(8, 4), pfa: float = 1e-4,
            alpha_factor: float | None = None,
            require_local_max: bool = True) -> list[CellDetection]:
    """Smallest-of CFAR over a power map.

    The training ring around each cell (rectangular ring minus the guard
    ring) is split into leading and lagging halves along the delay axis;
    the noise level is the smaller of the two half means, which keeps a
    second target or a clutter edge in one half from masking the cell
    under test. Threshold factor calibrated by Monte Carlo for the target
    false-alarm probability under unit-mean exponential cells. Cells whose
    window would leave the map are skipped.
    """
    p = dd_map.power if isinstance(dd_map, DelayDopplerMap) else np.asarray(dd_map)
    g_d, g_v = guard
    t_d, t_v = train
    w_d, w_v = g_d + t_d, g_v + t_v
    if min(g_d, g_v, t_d, t_v) < 1:
        raise ValueError("guard and training extents must be >= 1 cell")
    if p.shape[0] <= 2 * w_d + 1 or p.shape[1] <= 2 * w_v + 1:
        raise ValueError(f"map {p.shape} smaller than the CFAR window "
                         f"({2 * w_d + 1} x {2 * w_v + 1})")
    if not 0.0 < pfa < 0.1:
        raise ValueError("pfa must be in (0, 0.1)")
    if alpha_factor is None:
        alpha_factor = so_cfar_alpha(guard, train, pfa)
    n_half = so_cfar_window_counts(guard, train)

    # integral image: every window sum is four lookups, O(cells) total
    h, w = p.shape
    s = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(p, axis=0), axis=1, out=s[1:, 1:])

    def window_sum(r0, r1, c0, c1):
        """Sum over rows [i+r0, i+r1], cols [j+c0, j+c1] for every CUT (i, j),
        i in [w_d, h-w_d), j in [w_v, w-w_v)."""
        def sl(base_lo, base_hi, off):
            return slice(base_lo + off, base_hi + off)
        ri, rj = (w_d, h - w_d), (w_v, w - w_v)
        return (s[sl(*ri, r1 + 1), sl(*rj, c1 + 1)] - s[sl(*ri, r0), sl(*rj, c1 + 1)]
                - s[sl(*ri, r1 + 1), sl(*rj, c0)] + s[sl(*ri, r0), sl(*rj, c0)])

    # half = big box on one delay side minus its guard-box part
    lead = window_sum(-w_d, -1, -w_v, w_v) - window_sum(-g_d, -1, -g_v, g_v)
    lag = window_sum(1, w_d, -w_v, w_v) - window_sum(1, g_d, -g_v, g_v)
    noise = np.minimum(lead, lag) / n_half
    rows = slice(w_d, h - w_d)
    cols = slice(w_v, w - w_v)
    cut = p[rows, cols]
    mask = cut > alpha_factor * noise
    if require_local_max:
        core = p[rows, cols]
        neighbor_max = np.full_like(core, -np.inf)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                shifted = p[w_d + dr: h - w_d + dr, w_v + dc: w - w_v + dc]
                neighbor_max = np.maximum(neighbor_max, shifted)
        mask &= core >= neighbor_max
    out = []
    for di, vi in zip(*np.nonzero(mask)):
        out.append(CellDetection(delay_idx=int(di + w_d), doppler_idx=int(vi + w_v),
                                 power=float(cut[di, vi]),
                                 noise_power=float(noise[di, vi])))
    return out


# --- threshold calibration --------------------------------------------------

_ALPHA_CACHE: dict[tuple, float] = {}


def calibrate_so_cfar_alpha(n_lead: int, n_lag: int, pfa: float,
                            n_mc: int = 2_000_000, seed: int = 20240901) -> float:
    """Monte Carlo threshold factor for smallest-of CFAR.

    For a unit-mean exponential cell under test, Pfa(a) = E[exp(-a * m)]
    with m the smaller of the two training-half means; solve for a by
    bisection. Deterministic for a given seed, so the shipped table can be
    regenerated bit-for-bit.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0xCFA2, seed]))
    a_means = rng.gamma(shape=n_lead, scale=1.0 / n_lead, size=n_mc)
    b_means = rng.gamma(shape=n_lag, scale=1.0 / n_lag, size=n_mc)
    m = np.minimum(a_means, b_means)

    def pfa_of(a):
        return float(np.mean(np.exp(-a * m)))

    lo, hi = 1.0, 200.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if pfa_of(mid) > pfa:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def so_cfar_alpha(guard=(2, 2), train=(8, 4), pfa: float = 1e-4) -> float:
    """Threshold factor from the shipped calibration table, else computed
    on demand (and cached for the process lifetime)."""
    key = (int(guard[0]), int(guard[1]), int(train[0]), int(train[1]), float(pfa))
    if key in _ALPHA_CACHE:
        return _ALPHA_CACHE[key]
    name = f"{key[0]},{key[1]},{key[2]},{key[3]},{key[4]:.3e}"
    try:
        table = json.loads(resources.files("msounder")
                           .joinpath("data/so_cfar_alpha.json").read_text())
    except (FileNotFoundError, ModuleNotFoundError):
        table = {}
    if name in table:
        alpha = float(table[name])
    else:
        n_half = so_cfar_window_counts(guard, train)
        alpha = calibrate_so_cfar_alpha(n_half, n_half, pfa)
    _ALPHA_CACHE[key] = alpha
    return alpha


# ---------------------------------------------------------------------------
# Off-grid refinement
# ---------------------------------------------------------------------------

def _parabolic_offset(p_m1: float, p_0: float, p_p1: float) -> tuple[float, bool]:
    """Vertex offset of the parabola through three dB samples, clamped to
    half a bin; flags a non-concave triple instead of extrapolating."""
    denom = p_m1 - 2.0 * p_0 + p_p1
    if denom >= 0:
        return 0.0, True
    delta = (p_m1 - p_p1) / (2.0 * denom)
    return float(np.clip(delta, -0.5, 0.5)), False


def refine_peak(dd_map: DelayDopplerMap, cell: CellDetection) -> Detection:
    """Independent 3-point parabolic interpolation (dB power) on each axis."""
    p = dd_map.power
    d, v = cell.delay_idx, cell.doppler_idx
    if not (1 <= d < p.shape[0] - 1 and 1 <= v < p.shape[1] - 1):
        raise ValueError(f"cell ({d}, {v}) on the map border cannot be refined")
    eps = np.finfo(float).tiny
    db = lambda x: 10.0 * np.log10(max(x, eps))
    dd, flag_d = _parabolic_offset(db(p[d - 1, v]), db(p[d, v]), db(p[d + 1, v]))
    dv, flag_v = _parabolic_offset(db(p[d, v - 1]), db(p[d, v]), db(p[d, v + 1]))
    m = p.shape[1]
    return Detection(cpi_index=dd_map.cpi_index, time_s=dd_map.time_s,
                     delay_s=(d + dd) * dd_map.delay_bin_s,
                     doppler_hz=(v + dv - m // 2) * dd_map.doppler_bin_hz,
                     snr_db=cell.snr_db, peak_power=cell.power,
                     delay_idx=d, doppler_idx=v,
                     interp_flagged=flag_d or flag_v)


def cluster_cells(cells: list[CellDetection],
                  radius=(5, 3)) -> list[CellDetection]:
    """Greedy peak grouping: strongest cell absorbs every weaker detection
    within the (delay, doppler) cell radius, so one echo (and its residual
    window sidelobes) yields one measurement."""
    kept: list[CellDetection] = []
    for c in sorted(cells, key=lambda c: -c.power):
        if all(abs(c.delay_idx - k.delay_idx) > radius[0]
               or abs(c.doppler_idx - k.doppler_idx) > radius[1] for k in kept):
            kept.append(c)
    return kept


def detect_map(dd_map: DelayDopplerMap, guard=(2, 2), train=(8, 4),
               pfa: float = 1e-4, min_snr_db: float = 0.0,
               cluster_radius=(5, 3)) -> list[Detection]:
    """SO-CFAR, peak grouping and refinement in one call; detections sorted
    by power (strongest first)."""
    cells = so_cfar(dd_map, guard=guard, train=train, pfa=pfa)
    cells = cluster_cells(cells, cluster_radius)
    dets = [refine_peak(dd_map, c) for c in cells
            if c.snr_db >= min_snr_db]
    return sorted(dets, key=lambda t: -t.peak_power)

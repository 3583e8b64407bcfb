"""Per-node oscillator models: time offset, fractional frequency drift.

One fractional-frequency process per node drives both the carrier
frequency offset and the sampling clock offset (single-oscillator
assumption: the disciplined reference feeds the whole SDR). Discipline
residue is modeled as a seeded random walk on a fixed 10 ms grid, so any
(model, t) pair reproduces the identical state on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WALK_GRID_S = 0.01  # random-walk update interval


@dataclass(frozen=True)
class ClockModel:
    id: str
    initial_time_offset_s: float = 0.0
    initial_ffo: float = 0.0
    ffo_random_walk_psd: float = 0.0  # (fractional)^2 per second
    seed: int = 0

    def __post_init__(self):
        if self.ffo_random_walk_psd < 0:
            raise ValueError(f"clock {self.id!r}: random-walk PSD must be >= 0")


@dataclass(frozen=True)
class ClockState:
    t: float
    time_error_s: float
    ffo: float


_walk_cache: dict[ClockModel, np.ndarray] = {}


def _ffo_grid(model: ClockModel, n_steps: int) -> np.ndarray:
    """ffo at grid points 0..n_steps (inclusive), deterministic per model.

    Regenerated from scratch whenever the cache is too short so the prefix
    never depends on earlier query order.
    """
    cached = _walk_cache.get(model)
    if cached is None or len(cached) < n_steps + 1:
        n = max(n_steps, 256)
        rng = np.random.default_rng(np.random.SeedSequence([0x636C6B, model.seed & 0xFFFFFFFF]))
        steps = rng.standard_normal(n) * np.sqrt(model.ffo_random_walk_psd * WALK_GRID_S)
        walk = np.concatenate(([0.0], np.cumsum(steps)))
        cached = model.initial_ffo + walk
        _walk_cache[model] = cached
    return cached[: n_steps + 1]


def clock_series(model: ClockModel, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(time_error_s, ffo) evaluated at an array of true times.

    ffo interpolates linearly between grid points of the seeded walk;
    time_error integrates ffo with the trapezoidal rule on the same grid,
    so increments over any interval match the integral of the interpolant.
    """
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("clock state undefined for negative time")
    if t.size == 0:
        return np.empty(0), np.empty(0)
    n_steps = int(np.ceil(t.max() / WALK_GRID_S)) + 1
    ffo_g = _ffo_grid(model, n_steps)
    grid = np.arange(n_steps + 1) * WALK_GRID_S
    # trapezoidal cumulative integral of ffo on the grid
    te_g = np.concatenate(([0.0], np.cumsum(0.5 * (ffo_g[1:] + ffo_g[:-1]) * WALK_GRID_S)))
    te_g += model.initial_time_offset_s
    ffo_t = np.interp(t, grid, ffo_g)
    idx = np.clip(np.floor(t / WALK_GRID_S).astype(int), 0, n_steps - 1)
    frac_dt = t - grid[idx]
    te_t = te_g[idx] + 0.5 * (ffo_g[idx] + ffo_t) * frac_dt
    return te_t, ffo_t


def clock_state_at(model: ClockModel, t: float) -> ClockState:
    """Deterministic oscillator state at true time t >= 0."""
    te, ffo = clock_series(model, np.array([float(t)]))
    return ClockState(t=float(t), time_error_s=float(te[0]), ffo=float(ffo[0]))


def cfo_hz(state: ClockState, f_c: float) -> float:
    """Carrier frequency offset ffo * f_c (the same ffo scales the sampling clock)."""
    return state.ffo * f_c

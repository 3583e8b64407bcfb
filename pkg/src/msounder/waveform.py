"""Constant-magnitude multisine sounding symbol and calibration references.

The sounding waveform is an OFDM-style multisine whose subcarrier phases
follow the classical quadratic low-crest construction. Symbols are
transmitted back-to-back with no cyclic prefix: the waveform is exactly
periodic in the symbol duration, so per-symbol circular convolution holds
for every path delay shorter than one symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CalibrationError(ValueError):
    """Calibration record unusable (zero or near-zero response bins)."""


@dataclass(frozen=True)
class SignalConfig:
    """Sounding signal parameterization.

    The subcarrier spacing is 1/t_symbol_s and n_subcarriers times that
    spacing must reproduce the bandwidth exactly (62.5 kHz spacing for a
    16 us symbol; 1280 subcarriers -> 80 MHz, 768 -> 48 MHz).
    """

    f_c_hz: float
    bandwidth_hz: float
    n_subcarriers: int
    t_symbol_s: float
    n_symbols_per_cpi: int = 1024
    n_cpi: int = 1

    def __post_init__(self):
        if min(self.f_c_hz, self.bandwidth_hz, self.t_symbol_s) <= 0:
            raise ValueError("f_c, bandwidth and t_symbol must be positive")
        if self.n_subcarriers < 2 or self.n_subcarriers % 2:
            raise ValueError("n_subcarriers must be even and >= 2")
        if self.n_symbols_per_cpi < 1 or self.n_cpi < 1:
            raise ValueError("symbol and CPI counts must be >= 1")
        implied = self.n_subcarriers / self.t_symbol_s
        if abs(implied - self.bandwidth_hz) > 1e-6 * self.bandwidth_hz:
            raise ValueError(
                f"inconsistent config: {self.n_subcarriers} subcarriers / "
                f"{self.t_symbol_s} s symbol implies {implied:.6g} Hz, "
                f"declared bandwidth is {self.bandwidth_hz:.6g} Hz"
            )

    @property
    def subcarrier_spacing_hz(self) -> float:
        return 1.0 / self.t_symbol_s

    @property
    def delay_bin_s(self) -> float:
        return 1.0 / self.bandwidth_hz

    @property
    def cpi_duration_s(self) -> float:
        return self.n_symbols_per_cpi * self.t_symbol_s

    @property
    def doppler_bin_hz(self) -> float:
        return 1.0 / self.cpi_duration_s

    @property
    def n_symbols_total(self) -> int:
        return self.n_symbols_per_cpi * self.n_cpi

    def subcarrier_freqs(self) -> np.ndarray:
        """Baseband frequencies f_k = (k - n/2) * spacing, k = 0..n-1."""
        k = np.arange(self.n_subcarriers)
        return (k - self.n_subcarriers / 2) * self.subcarrier_spacing_hz


@dataclass(frozen=True)
class SoundingSymbol:
    """Frequency-domain sounding symbol, |X[k]| = 1 for every subcarrier."""

    freq_domain: np.ndarray
    subcarrier_freqs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.freq_domain, dtype=complex)
        if not np.allclose(np.abs(x), 1.0, atol=1e-12):
            raise ValueError("sounding symbol must have unit-magnitude subcarriers")
        object.__setattr__(self, "freq_domain", x)
        object.__setattr__(self, "subcarrier_freqs", np.asarray(self.subcarrier_freqs, float))


def newman_phases(n: int) -> np.ndarray:
    """Quadratic phase sequence pi*(k-1)^2/n for k = 1..n, in subcarrier order."""
    if n < 1:
        raise ValueError(f"need at least one subcarrier, got n={n}")
    k = np.arange(1, n + 1)
    return np.pi * (k - 1) ** 2 / n


def generate_symbol(cfg: SignalConfig) -> SoundingSymbol:
    """Deterministic unit-modulus symbol X[k] = exp(j*phi_k)."""
    phases = newman_phases(cfg.n_subcarriers)
    return SoundingSymbol(np.exp(1j * phases), cfg.subcarrier_freqs())


def time_domain_samples(freq_domain: np.ndarray, oversample: int = 1) -> np.ndarray:
    """Synthesize one symbol period on an oversample*n grid.

    Returns x[i] = sum_k X[k] exp(j*2*pi*(k - n/2)*i/(n*oversample)), the
    continuous multisine sampled at i*t_symbol/(n*oversample).
    """
    x = np.asarray(freq_domain, dtype=complex)
    n = len(x)
    length = n * oversample
    padded = np.zeros(length, dtype=complex)
    lo = length // 2 - n // 2
    padded[lo: lo + n] = x
    return length * np.fft.ifft(np.fft.ifftshift(padded))


def crest_factor_db(sym: SoundingSymbol, oversample: int = 8) -> float:
    """20*log10(peak/rms) of the oversampled time-domain symbol."""
    if oversample < 4:
        raise ValueError("oversample must be >= 4 to resolve envelope peaks")
    t = time_domain_samples(sym.freq_domain, oversample)
    mag = np.abs(t)
    rms = np.sqrt(np.mean(mag ** 2))
    return 20.0 * np.log10(mag.max() / rms)


def hardware_response(cfg: SignalConfig, seed: int, ripple_db: float = 1.5,
                      group_delay_s: float | None = None) -> np.ndarray:
    """Synthetic combined tx+rx hardware frequency response.

    Product of a raised-cosine band-edge taper (edges roll to -6 dB, no
    zeros) and a low-order smooth random ripple bounded by +-ripple_db,
    plus a small random group delay. Stands in for real filter/amplifier
    chains; deterministic for a given seed.
    """
    n = cfg.n_subcarriers
    rng = np.random.default_rng(np.random.SeedSequence([0x68775266, seed & 0xFFFFFFFF]))
    # band-edge taper: flat center, raised-cosine roll-off over 10% per edge
    edge = max(2, int(round(0.1 * n)))
    taper = np.ones(n)
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(edge) / edge))  # 0 -> 1
    taper[:edge] = ramp
    taper[-edge:] = ramp[::-1]
    amp = 0.5 + 0.5 * taper  # -6 dB at the very edge, never zero
    # smooth ripple: a few low-order cosines across the band
    k = np.arange(n) / n
    ripple = np.zeros(n)
    orders = np.arange(1, 5)
    coeffs = rng.uniform(-1, 1, size=len(orders)) / orders
    phases = rng.uniform(0, 2 * np.pi, size=len(orders))
    for q, a, ph in zip(orders, coeffs, phases):
        ripple += a * np.cos(2 * np.pi * q * k + ph)
    peak = np.max(np.abs(ripple))
    if peak > 0:
        ripple *= ripple_db / peak * rng.uniform(0.5, 1.0)
    amp = amp * 10.0 ** (ripple / 20.0)
    if group_delay_s is None:
        group_delay_s = rng.uniform(-20e-9, 20e-9)
    phase = -2 * np.pi * cfg.subcarrier_freqs() * group_delay_s
    phase += rng.uniform(-0.5, 0.5) * np.sin(2 * np.pi * k + rng.uniform(0, 2 * np.pi))
    return amp * np.exp(1j * phase)


def b2b_reference(cfg: SignalConfig, tx_rx_response: np.ndarray) -> np.ndarray:
    """Per-subcarrier product of the sounding symbol and the hardware response.

    This is what a cabled tx->rx measurement records (zero delay, known
    attenuation); dividing sky captures by it removes the hardware chain.
    """
    g = np.asarray(tx_rx_response, dtype=complex)
    if len(g) != cfg.n_subcarriers:
        raise ValueError(
            f"response length {len(g)} != n_subcarriers {cfg.n_subcarriers}")
    mags = np.abs(g)
    if np.any(mags == 0) or mags.min() <= 1e-6 * np.median(mags):
        bad = np.flatnonzero(mags <= 1e-6 * np.median(mags))
        raise CalibrationError(
            f"hardware response (near-)zero at subcarriers {bad.tolist()[:10]}; "
            "division calibration would be singular")
    return generate_symbol(cfg).freq_domain * g

import numpy as np
import pytest

from msounder.clock import ClockModel
from msounder.scene import (SPEED_OF_LIGHT, AntennaPattern, ClutterTap, Node,
                            Target, Trajectory)
from msounder.synth import (Capture, PathAliasError, los_gain, noise_std_for,
                            synthesize_b2b_capture, synthesize_capture,
                            synthesize_from_paths, target_gain)
from msounder.waveform import (SignalConfig, b2b_reference, generate_symbol,
                               hardware_response)

C = SPEED_OF_LIGHT


def tiny_cfg(n=16, m=8):
    return SignalConfig(f_c_hz=3.75e9, bandwidth_hz=n / 16e-6, n_subcarriers=n,
                        t_symbol_s=16e-6, n_symbols_per_cpi=m)


def time_domain_oracle(cfg, x_cal, gains, delays, dopplers, symbol_times):
    """Brute force: per symbol, sample the sum of delayed periodic
    multisines (Doppler as the per-symbol phasor at the symbol center),
    then DFT back to centered subcarrier order."""
    n = cfg.n_subcarriers
    f_k = cfg.subcarrier_freqs()
    u = np.arange(n) * cfg.t_symbol_s / n  # symbol-local sampling grid
    out = np.empty((n, len(symbol_times)), dtype=complex)
    for m, t_m in enumerate(symbol_times):
        y = np.zeros(n, dtype=complex)
        for g, tau, fd in zip(gains, delays, dopplers):
            phasor = g * np.exp(2j * np.pi * fd * t_m)
            for i, ui in enumerate(u):
                y[i] += phasor * np.sum(x_cal * np.exp(2j * np.pi * f_k * (ui - tau)))
        out[:, m] = np.fft.fftshift(np.fft.fft(y)) / n
    return out


def test_frequency_domain_matches_time_domain_oracle():
    cfg = tiny_cfg()
    x_cal = generate_symbol(cfg).freq_domain
    gains = np.array([0.8 - 0.3j, 0.1 + 0.05j])
    delays = np.array([3.37e-6, 7.91e-6])  # off-grid (1 us bins)
    dopplers = np.array([700.0, -1300.0])
    t_m = (np.arange(8) + 0.5) * cfg.t_symbol_s
    y = synthesize_from_paths(cfg, x_cal, gains[:, None], delays[:, None],
                              dopplers[:, None], t_m)
    ref = time_domain_oracle(cfg, x_cal, gains, delays, dopplers, t_m)
    rel = np.linalg.norm(y - ref) / np.linalg.norm(ref)
    assert rel <= 1e-10


def test_energy_bookkeeping_single_unit_path():
    cfg = tiny_cfg(n=32)
    x_cal = generate_symbol(cfg).freq_domain
    t_m = (np.arange(4) + 0.5) * cfg.t_symbol_s
    y = synthesize_from_paths(cfg, x_cal, np.array([1.0 + 0j]), np.array([5.5e-6]),
                              np.array([250.0]), t_m)
    for m in range(4):
        assert np.sum(np.abs(y[:, m]) ** 2) == pytest.approx(
            np.sum(np.abs(x_cal) ** 2), rel=1e-12)


def test_alias_error_names_path():
    cfg = tiny_cfg()
    x_cal = generate_symbol(cfg).freq_domain
    with pytest.raises(PathAliasError, match="echo"):
        synthesize_from_paths(cfg, x_cal, np.array([1.0 + 0j]), np.array([17e-6]),
                              np.array([0.0]), np.array([8e-6]), path_names=["echo"])


def test_los_gain_friis_scalings():
    g1 = los_gain(46.0, 0.0, 0.0, 3.75e9, 100.0)
    g2 = los_gain(46.0, 0.0, 0.0, 3.75e9, 200.0)
    assert abs(g2) ** 2 / abs(g1) ** 2 == pytest.approx(0.25, rel=1e-12)
    g3 = los_gain(46.0, 0.0, 3.0, 3.75e9, 100.0)
    assert abs(g3) ** 2 / abs(g1) ** 2 == pytest.approx(10 ** 0.3, rel=1e-12)
    lam = C / 3.75e9
    assert lam == pytest.approx(0.0799446, rel=1e-6)
    assert abs(g1) == pytest.approx(
        np.sqrt(10 ** ((46.0 - 30.0) / 10.0)) * lam / (4 * np.pi * 100.0), rel=1e-12)


def test_target_gain_radar_equation():
    base = target_gain(40.0, 0.0, 0.0, 3.75e9, 100.0, 100.0, 0.0)
    both_double = target_gain(40.0, 0.0, 0.0, 3.75e9, 200.0, 200.0, 0.0)
    assert abs(both_double) ** 2 / abs(base) ** 2 == pytest.approx(1 / 16, rel=1e-12)
    plus10 = target_gain(40.0, 0.0, 0.0, 3.75e9, 100.0, 100.0, 10.0)
    assert abs(plus10) ** 2 / abs(base) ** 2 == pytest.approx(10.0, rel=1e-12)
    # monostatic consistency against the standard r^4 radar equation
    lam = C / 3.75e9
    r = 123.0
    expect = 10 ** ((40.0 - 30) / 10) * lam ** 2 * 1.0 / ((4 * np.pi) ** 3 * r ** 4)
    assert abs(target_gain(40.0, 0.0, 0.0, 3.75e9, r, r, 0.0)) ** 2 \
        == pytest.approx(expect, rel=1e-12)


def phase_slope_delay(h, f_k):
    return -np.polyfit(f_k, np.unwrap(np.angle(h)), 1)[0] / (2 * np.pi)


def simple_pair(noise_floor=-174.0, clock_tx=None, clock_rx=None):
    tx = Node("t1", "tx", Trajectory.stationary([0, 0, 10]), AntennaPattern("omni"),
              eirp_dbm=30.0, clock=clock_tx)
    rx = Node("r1", "rx", Trajectory.stationary([120, 0, 10]), AntennaPattern("omni"),
              noise_floor_dbm_hz=noise_floor, clock=clock_rx)
    return tx, rx


def test_capture_ideal_clock_los_delay_recovered():
    cfg = tiny_cfg(n=64, m=4)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair()
    cap = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 4, seed=1,
                             with_noise=False)
    h = cap.data[:, 2] / x_cal
    tau = phase_slope_delay(h, cfg.subcarrier_freqs())
    assert tau == pytest.approx(120.0 / C, rel=1e-9)
    assert cap.truth.los_delay_s[2] == pytest.approx(120.0 / C, rel=1e-12)


def test_capture_clock_offset_shifts_delay_exactly():
    cfg = tiny_cfg(n=64, m=4)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair(clock_rx=ClockModel("rxc", initial_time_offset_s=5e-9))
    cap = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 4, seed=1,
                             with_noise=False)
    h = cap.data[:, 1] / x_cal
    tau = phase_slope_delay(h, cfg.subcarrier_freqs())
    assert tau - 120.0 / C == pytest.approx(5e-9, rel=1e-9)


def test_capture_determinism_byte_identical():
    cfg = tiny_cfg(n=32, m=16)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair(noise_floor=-160.0)
    tgt = Target("v", Trajectory.from_waypoints([0.0, 1.0], [[30, 40, 20], [40, 40, 20]]))
    a = synthesize_capture(cfg, tx, rx, [tgt], [], x_cal, 0.0, 16, seed=7)
    b = synthesize_capture(cfg, tx, rx, [tgt], [], x_cal, 0.0, 16, seed=7)
    assert np.array_equal(a.data, b.data)
    c = synthesize_capture(cfg, tx, rx, [tgt], [], x_cal, 0.0, 16, seed=8)
    assert not np.array_equal(a.data, c.data)


def test_capture_closing_target_positive_doppler():
    cfg = tiny_cfg(n=32, m=64)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair()
    # target flying toward the midpoint of the baseline: closing on both
    tgt = Target("v", Trajectory.from_waypoints([0.0, 1.0],
                                                [[60, 1000, 10], [60, 900, 10]]))
    cap = synthesize_capture(cfg, tx, rx, [tgt], [], x_cal, 0.0, 64, seed=3,
                             with_noise=False)
    assert np.all(cap.truth.target_doppler_hz["v"] > 0)
    # isolate the echo by subtracting the LoS-only capture
    cap0 = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 64, seed=3,
                              with_noise=False)
    echo = (cap.data - cap0.data)[16, :]  # one subcarrier, slow time
    meas = np.angle(np.sum(echo[1:] * np.conj(echo[:-1]))) / (2 * np.pi * cfg.t_symbol_s)
    assert meas == pytest.approx(np.mean(cap.truth.target_doppler_hz["v"]), rel=0.05)


def test_clutter_tap_static_and_scaled_to_los():
    cfg = tiny_cfg(n=32, m=8)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair()
    tap = ClutterTap("r1", delay_s=2.5e-6, gain_db=-10.0, phase_rad=0.3)
    cap = synthesize_capture(cfg, tx, rx, [], [tap], x_cal, 0.0, 8, seed=1,
                             with_noise=False)
    cap0 = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 8, seed=1,
                              with_noise=False)
    extra = (cap.data - cap0.data) / x_cal[:, None]
    # static: identical in every symbol
    assert np.allclose(extra, extra[:, :1], rtol=1e-9, atol=1e-12)
    tau = phase_slope_delay(extra[:, 0], cfg.subcarrier_freqs())
    assert tau == pytest.approx(2.5e-6, rel=1e-9)
    los_amp = abs(los_gain(30.0, 0.0, 0.0, cfg.f_c_hz, 120.0))
    assert np.mean(np.abs(extra[:, 0])) == pytest.approx(los_amp * 10 ** -0.5, rel=1e-6)


def test_b2b_capture_division_removes_hardware():
    cfg = tiny_cfg(n=64, m=4)
    g_hw = hardware_response(cfg, seed=11)
    x_cal = b2b_reference(cfg, g_hw)
    b2b = synthesize_b2b_capture(cfg, x_cal, cable_attenuation_db=30.0,
                                 snr_db=200.0, seed=0)
    ref = np.mean(b2b.data, axis=1) * 10 ** (30.0 / 20.0)
    tx, rx = simple_pair()
    cap = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 4, seed=1,
                             with_noise=False)
    h = cap.data[:, 0] / ref
    # hardware ripple fully cancelled: flat magnitude
    mag_db = 20 * np.log10(np.abs(h))
    assert np.max(mag_db) - np.min(mag_db) <= 1e-6


def test_noise_std_matches_density():
    cfg = tiny_cfg(n=64, m=4)
    std = noise_std_for(cfg, -170.0)
    expect = np.sqrt(10 ** ((-170.0 - 30) / 10) * cfg.bandwidth_hz / 64)
    assert std == pytest.approx(expect, rel=1e-12)


def test_noise_sample_statistics():
    cfg = tiny_cfg(n=64, m=256)
    x_cal = generate_symbol(cfg).freq_domain
    tx, rx = simple_pair(noise_floor=-120.0)
    cap = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 256, seed=2)
    cap0 = synthesize_capture(cfg, tx, rx, [], [], x_cal, 0.0, 256, seed=2,
                              with_noise=False)
    noise = cap.data - cap0.data
    std = noise_std_for(cfg, -120.0)
    assert np.std(noise.real) == pytest.approx(std / np.sqrt(2), rel=0.02)
    assert np.std(noise.imag) == pytest.approx(std / np.sqrt(2), rel=0.02)

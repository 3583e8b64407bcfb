import numpy as np
import pytest

from msounder.scene import (SPEED_OF_LIGHT, AntennaPattern, GeometryError,
                            Trajectory, TrajectoryRangeError, antenna_gain,
                            bistatic_delay, bistatic_doppler, los_delay,
                            position_at, velocity_at)

C = SPEED_OF_LIGHT


def test_position_at_linear_midpoint():
    traj = Trajectory.from_waypoints([0.0, 10.0], [[0, 0, 0], [100, 0, 0]])
    assert np.allclose(position_at(traj, 5.0), [50, 0, 0])


def test_position_at_endpoint_exact():
    traj = Trajectory.from_waypoints([0.0, 10.0], [[0, 0, 0], [100, 0, 0]])
    assert np.array_equal(position_at(traj, 0.0), [0, 0, 0])
    assert np.array_equal(position_at(traj, 10.0), [100, 0, 0])


def test_position_at_closed_form_line():
    # oracle: p(t) = p0 + v*t for the straight segment
    v = np.array([10.0, 0.0, 0.0])
    traj = Trajectory(np.array([0.0, 10.0]),
                      np.array([[0, 0, 30], [100, 0, 30]], float),
                      np.array([v, v]))
    t = 2.5
    assert np.allclose(position_at(traj, t), np.array([0, 0, 30]) + v * t)


def test_position_at_exact_at_all_samples():
    rng = np.random.default_rng(7)
    times = np.cumsum(rng.uniform(0.5, 2.0, 6))
    pos = rng.uniform(-50, 50, (6, 3))
    traj = Trajectory.from_waypoints(times, pos)
    for t, p in zip(times, pos):
        assert np.allclose(position_at(traj, t), p, atol=1e-9)


def test_position_out_of_range_names_trajectory():
    traj = Trajectory.from_waypoints([0.0, 10.0], [[0, 0, 0], [1, 0, 0]], name="vtol")
    with pytest.raises(TrajectoryRangeError, match="vtol"):
        position_at(traj, 11.0)


def test_trajectory_velocity_consistency_enforced():
    with pytest.raises(ValueError, match="velocity"):
        Trajectory(np.array([0.0, 10.0]),
                   np.array([[0, 0, 0], [100, 0, 0]], float),
                   np.array([[5.0, 0, 0], [5.0, 0, 0]]))  # true slope is 10


def test_stationary_trajectory_valid_everywhere():
    traj = Trajectory.stationary([1, 2, 3])
    assert np.allclose(position_at(traj, 12345.0), [1, 2, 3])
    assert np.allclose(velocity_at(traj, 99.0), [0, 0, 0])


def test_los_delay_hand_values():
    assert los_delay([0, 0, 10], [100, 0, 10]) == pytest.approx(100.0 / C)
    assert los_delay([0, 0, 10], [100, 0, 10]) == pytest.approx(333.5641e-9, rel=1e-6)
    # definition of c: 299.792458 m <-> 1 us
    assert los_delay([0, 0, 0], [0, 0, 299.792458]) == pytest.approx(1e-6, rel=1e-12)
    # 3-4-5 triangle
    assert los_delay([0, 0, 0], [3, 4, 0]) == pytest.approx(5.0 / C, rel=1e-12)


def test_los_delay_coincident_points_rejected():
    with pytest.raises(GeometryError):
        los_delay([1, 2, 3], [1, 2, 3])


def test_bistatic_delay_hand_evaluation():
    # both legs are sqrt(50^2 + 20^2) = sqrt(2900)
    expect = 2.0 * np.sqrt(2900.0) / C
    assert bistatic_delay([0, 0, 0], [50, 0, 20], [100, 0, 0]) == pytest.approx(expect, rel=1e-12)


def test_bistatic_delay_degenerate_ellipse_equals_los():
    d = bistatic_delay([0, 0, 0], [50, 0, 0], [100, 0, 0])
    assert d == pytest.approx(los_delay([0, 0, 0], [100, 0, 0]), rel=1e-12)


def test_bistatic_delay_monostatic_round_trip():
    assert bistatic_delay([0, 0, 0], [0, 0, 50], [0, 0, 0] + np.array([0, 0, 1e-12])) \
        == pytest.approx(2 * 50 / C, rel=1e-9)


def test_bistatic_delay_triangle_inequality():
    rng = np.random.default_rng(3)
    p_tx, p_rx = np.array([0, 0, 5.0]), np.array([80, 10, 2.0])
    base = los_delay(p_tx, p_rx)
    for _ in range(200):
        tgt = rng.uniform(-100, 100, 3)
        assert bistatic_delay(p_tx, tgt, p_rx) >= base - 1e-15


def test_bistatic_doppler_symmetry_cancels():
    f = bistatic_doppler([0, 0, 0], [50, 0, 20], [10, 0, 0], [100, 0, 0], 3.75e9)
    assert abs(f) < 1e-9


def test_bistatic_doppler_hand_dot_products():
    # leg rates: tx->tgt -10 m/s, tgt->rx -500/sqrt(12500) m/s
    rate = -10.0 + np.dot([0, -10, 0], np.array([0, 50, 0]) - np.array([100, 0, 0])) \
        / np.linalg.norm(np.array([0, 50, 0]) - np.array([100, 0, 0]))
    assert rate == pytest.approx(-14.4721, abs=1e-4)
    f = bistatic_doppler([0, 0, 0], [0, 50, 0], [0, -10, 0], [100, 0, 0], 3.75e9)
    assert f == pytest.approx(-(3.75e9 / C) * rate, rel=1e-9)
    assert f == pytest.approx(181.03, abs=0.01)


def test_bistatic_doppler_zero_velocity_and_antisymmetry():
    assert bistatic_doppler([0, 0, 0], [10, 20, 5], [0, 0, 0], [50, 0, 0], 3.75e9) == 0.0
    rng = np.random.default_rng(11)
    for _ in range(50):
        tgt = rng.uniform(-40, 40, 3) + [0, 0, 60]
        v = rng.uniform(-20, 20, 3)
        fp = bistatic_doppler([0, 0, 0], tgt, v, [100, 0, 0], 3.75e9)
        fm = bistatic_doppler([0, 0, 0], tgt, -v, [100, 0, 0], 3.75e9)
        assert fp == pytest.approx(-fm, rel=1e-12, abs=1e-12)


def test_bistatic_doppler_moving_rx_term():
    # rx moving with the same velocity as the target nulls the rx leg
    f_static = bistatic_doppler([0, 0, 0], [0, 50, 0], [0, -10, 0], [100, 0, 0], 3.75e9)
    f_moving = bistatic_doppler([0, 0, 0], [0, 50, 0], [0, -10, 0], [100, 0, 0], 3.75e9,
                                v_rx=[0, -10, 0])
    assert f_moving == pytest.approx(-(3.75e9 / C) * (-10.0), rel=1e-9)
    assert f_moving != pytest.approx(f_static, rel=1e-3)


def test_antenna_gain_omni_and_boresight():
    omni = AntennaPattern("omni")
    assert antenna_gain(omni, [1, -2, 0.5]) == 0.0
    direc = AntennaPattern("directional", boresight=[1, 0, 0], beamwidth_10db_deg=40.0)
    assert antenna_gain(direc, [5, 0, 0]) == pytest.approx(0.0, abs=1e-9)


def test_antenna_gain_10db_beamwidth_anchor():
    direc = AntennaPattern("directional", boresight=[1, 0, 0], beamwidth_10db_deg=40.0)
    d = [np.cos(np.radians(20)), np.sin(np.radians(20)), 0.0]
    assert antenna_gain(direc, d) == pytest.approx(-10.0, abs=1e-9)


def test_antenna_gain_monotone_and_floored():
    direc = AntennaPattern("directional", boresight=[1, 0, 0], beamwidth_10db_deg=40.0)
    angles = np.linspace(0, 180, 181)
    gains = [antenna_gain(direc, [np.cos(np.radians(a)), np.sin(np.radians(a)), 0])
             for a in angles]
    assert all(g2 <= g1 + 1e-12 for g1, g2 in zip(gains, gains[1:]))
    assert gains[-1] == -30.0


def test_antenna_gain_zero_direction_rejected():
    with pytest.raises(GeometryError):
        antenna_gain(AntennaPattern("omni"), [0, 0, 0])

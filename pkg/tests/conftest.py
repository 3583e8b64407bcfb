import copy

import pytest

# Small fast scenario for pipeline tests: coarse signal (64 subcarriers over
# 4 MHz, so 250 ns delay bins), kilometer-scale geometry so the bistatic
# delays clear the CFAR border region, a deliberately fast target so its
# Doppler clears the clutter ridge at the coarse Doppler resolution, and a
# generous link budget so detections are unambiguous.
MINI_SCENARIO = {
    "name": "mini",
    "seed": 4242,
    "duration_s": 1.0,
    "signal": {
        "f_c_hz": 3.75e9,
        "bandwidth_hz": 4.0e6,
        "n_subcarriers": 64,
        "t_symbol_s": 1.6e-5,
        "n_symbols_per_cpi": 128,
    },
    "clocks": [
        {"id": "c_tx", "initial_time_offset_s": 8.0e-9, "initial_ffo": 4.0e-10,
         "ffo_random_walk_psd": 1.0e-22, "seed": 1},
        {"id": "c_r1", "initial_time_offset_s": -12.0e-9, "initial_ffo": -6.0e-10,
         "ffo_random_walk_psd": 1.0e-22, "seed": 2},
        {"id": "c_r2", "initial_time_offset_s": 15.0e-9, "initial_ffo": 7.0e-10,
         "ffo_random_walk_psd": 1.0e-22, "seed": 3},
        {"id": "c_r3", "initial_time_offset_s": -4.0e-9, "initial_ffo": 2.0e-10,
         "ffo_random_walk_psd": 1.0e-22, "seed": 4},
        {"id": "c_r4", "initial_time_offset_s": 6.0e-9, "initial_ffo": -3.0e-10,
         "ffo_random_walk_psd": 1.0e-22, "seed": 5},
    ],
    "nodes": [
        {"id": "tx", "role": "tx", "clock": "c_tx", "eirp_dbm": 70.0,
         "position": [0.0, 0.0, 40.0], "antenna": {"kind": "omni"}},
        {"id": "r1", "role": "rx", "clock": "c_r1", "noise_floor_dbm_hz": -140.0,
         "position": [1400.0, 400.0, 30.0]},
        {"id": "r2", "role": "rx", "clock": "c_r2", "noise_floor_dbm_hz": -140.0,
         "position": [-600.0, 400.0, 250.0]},
        {"id": "r3", "role": "rx", "clock": "c_r3", "noise_floor_dbm_hz": -140.0,
         "position": [1000.0, 640.0, 420.0]},
        {"id": "r4", "role": "rx", "clock": "c_r4", "noise_floor_dbm_hz": -140.0,
         "position": [-400.0, 150.0, 60.0]},
    ],
    "targets": [
        {"id": "probe", "rcs_dbsm": 7.0,
         "trajectory": {"times": [0.0, 0.6],
                        "positions": [[80.0, 400.0, 200.0], [152.0, 400.0, 200.0]]}},
    ],
    "clutter": [
        {"rx_id": "r1", "delay_s": 8.5e-6, "gain_db": -15.0, "phase_rad": 1.0},
    ],
    "schedule": [
        {"tx_id": "tx", "start_s": 0.05, "n_cpi": 4},
        {"tx_id": "tx", "start_s": 0.40, "n_cpi": 4},
    ],
    "processing": {
        "background_alpha": 0.9,
        "cfar_pfa": 1.0e-4,
        "q_doppler": 1.0e5,
        "gate_chi2": 13.8,
        "drift_window_halfwidth_s": 3.0e-7,
    },
}


@pytest.fixture
def mini_doc():
    return copy.deepcopy(MINI_SCENARIO)


@pytest.fixture
def mini_scenario(mini_doc):
    from msounder.scenario import parse_scenario
    return parse_scenario(mini_doc)

"""Multistatic channel-sounding simulator and radar processing toolkit.

Synthesizes distributed tx/rx sounding captures with realistic clock drift
and target echoes, then runs the delay-Doppler processing chain (division
calibration, drift compensation, background subtraction, SO-CFAR detection,
off-grid refinement, Kalman tracking) and fuses per-receiver delays into 3D
position estimates by nonlinear least squares.
"""

from .scene import (SPEED_OF_LIGHT, AntennaPattern, ClutterTap, GeometryError,
                    Node, Target, Trajectory, TrajectoryRangeError, antenna_gain,
                    bistatic_delay, bistatic_doppler, los_delay, position_at,
                    velocity_at)
from .waveform import (CalibrationError, SignalConfig, SoundingSymbol,
                       b2b_reference, crest_factor_db, generate_symbol,
                       hardware_response, newman_phases)
from .clock import ClockModel, ClockState, cfo_hz, clock_series, clock_state_at
from .synth import (Capture, CaptureTruth, PathAliasError, los_gain,
                    noise_std_for, synthesize_b2b_capture, synthesize_capture,
                    synthesize_from_paths, target_gain)

__version__ = "0.1.0"

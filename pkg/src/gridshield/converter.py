"""Per-DG physical layer: phasor power flow, droop control, linearized
state-space dynamics, measurement noise, and waveform synthesis.

Each converter is described by an 11-element state vector

    x = [beta, v_od, v_oq, i_od, i_oq, i_d, i_q, P_G, Q_G, omega, V]

with beta in rad, voltages and currents in pu, P_G in W, Q_G in Var, omega in
rad/s and V in pu.  The control input is u = [omega_s, V_s]: the setpoint pair
delivered to the modulation controller, i.e. the no-load references already
carrying any secondary corrections.  Active power couples to frequency and
reactive power to voltage through the droop coefficients, which is valid in
the inductive-line regime (impedance angle at or near 90 degrees).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_NAMES = ("beta", "v_od", "v_oq", "i_od", "i_oq", "i_d", "i_q",
               "P_G", "Q_G", "omega", "V")
N_STATES = len(STATE_NAMES)
IDX = {name: i for i, name in enumerate(STATE_NAMES)}


class InvalidImpedanceError(ValueError):
    pass


class NumericalDivergence(RuntimeError):
    """Raised when an integration step produces a non-finite state entry."""

    def __init__(self, state_index: int, message: str = ""):
        self.state_index = state_index
        super().__init__(message or f"non-finite value in state {STATE_NAMES[state_index]}")


def power_flow(v_g: float, v_i: float, beta: float, z: float, theta: float):
    """Active/reactive power a converter injects into the grid [pu].

    v_g is the grid-side voltage magnitude (reference angle zero), v_i and
    beta the converter output phasor, and z, theta the lumped filter+line
    impedance magnitude and angle.
    """
    if z <= 0:
        raise InvalidImpedanceError(f"impedance magnitude must be > 0, got {z}")
    p = (v_g * v_i / z) * math.cos(theta - beta) - (v_g * v_g / z) * math.cos(theta)
    q = (v_g * v_i / z) * math.sin(theta - beta) - (v_g * v_g / z) * math.sin(theta)
    return p, q


@dataclass(frozen=True)
class DroopParams:
    omega0: float   # no-load angular frequency [rad/s]
    v0: float       # no-load voltage [pu]
    k_p: float      # [rad/s per W]
    k_q: float      # [pu per Var]

    def __post_init__(self):
        if self.omega0 <= 0 or self.v0 <= 0 or self.k_p <= 0 or self.k_q <= 0:
            raise ValueError("droop parameters must all be > 0")


def droop_primary(params: DroopParams, p_g: float, q_g: float):
    """Primary droop characteristic: frequency sags with P, voltage with Q."""
    omega = params.omega0 - params.k_p * p_g
    v = params.v0 - params.k_q * q_g
    return omega, v


def droop_with_secondary(params: DroopParams, p_g: float, q_g: float,
                         delta_omega: float, delta_v: float):
    """Droop with the secondary restoration terms added on top."""
    omega, v = droop_primary(params, p_g, q_g)
    return omega + delta_omega, v + delta_v


@dataclass
class ConverterState:
    """The 11-state vector plus an out-of-envelope marker.

    omega_bounds are hard plausibility bounds; crossing them marks the state
    rather than clamping it, so the envelope violation is observable.
    """

    x: np.ndarray
    omega_bounds: tuple = (0.5, 1.5)   # multiples of omega_nominal
    omega_nominal: float = 2.0 * math.pi * 60.0
    out_of_envelope: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (N_STATES,):
            raise ValueError(f"state vector must have {N_STATES} entries")
        self.check_envelope()

    def check_envelope(self) -> bool:
        lo = self.omega_bounds[0] * self.omega_nominal
        hi = self.omega_bounds[1] * self.omega_nominal
        if not (lo <= self.x[IDX["omega"]] <= hi):
            self.out_of_envelope = True
        return self.out_of_envelope

    def __getattr__(self, name):
        if name in IDX:
            return self.x[IDX[name]]
        raise AttributeError(name)


@dataclass(frozen=True)
class SecondarySignal:
    """Control input u = [omega_s, V_s] as delivered to the converter."""

    omega_s: float
    v_s: float

    def __post_init__(self):
        if not (math.isfinite(self.omega_s) and math.isfinite(self.v_s)):
            raise ValueError("secondary signal values must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.omega_s, self.v_s], dtype=float)


@dataclass
class StateSpaceModel:
    """x' = x + dt (A x + B u), y = C x + e with e ~ N(0, noise_sigma)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    noise_sigma: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.noise_sigma = np.asarray(self.noise_sigma, dtype=float)
        b = self.A.shape[0]
        if self.A.shape != (b, b):
            raise ValueError("A must be square")
        if self.B.shape[0] != b:
            raise ValueError("B row count must match A")
        if self.C.shape[1] != b:
            raise ValueError("C column count must match A")
        if self.noise_sigma.shape != (self.C.shape[0],):
            raise ValueError("noise_sigma must have one entry per output")
        if np.any(self.noise_sigma < 0):
            raise ValueError("noise_sigma must be non-negative")


def step_state(model: StateSpaceModel, x: np.ndarray, u: np.ndarray,
               dt: float, rng: np.random.Generator | None = None):
    """One explicit-Euler step of the linear model plus a noisy output read.

    Returns (x_next, y).  Raises NumericalDivergence (carrying the offending
    state index) when the step produces a non-finite entry.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        x_next = x + dt * (model.A @ x + model.B @ u)
    finite = np.isfinite(x_next)
    if not finite.all():
        raise NumericalDivergence(int(np.argmin(finite)))
    y = model.C @ x_next
    if rng is not None and np.any(model.noise_sigma > 0):
        y = y + rng.normal(0.0, 1.0, size=y.shape) * model.noise_sigma
    return x_next, y


def build_state_space(params: DroopParams, z: float = 0.1,
                      theta: float = math.pi / 2, s_base: float = 2.0e6,
                      t_filter: float = 1.0e-3, t_power: float = 5.0e-3,
                      v_g: float = 1.0, noise_sigma_pu: float = 1.0e-3,
                      ) -> StateSpaceModel:
    """Assemble the linearized 11-state model around the no-load point.

    The droop rows implement the primary characteristic against the delivered
    setpoints (so the model's omega/V fixed point, with P_G and Q_G held
    constant, is exactly the droop characteristic); the power rows use the
    small-angle power-flow sensitivities dP/dbeta = dQ/dV = v_g/z; every other
    state is a first-order tracking filter.  C is identity, with per-channel
    noise scaled to the channel's physical units.
    """
    if z <= 0:
        raise InvalidImpedanceError(f"impedance magnitude must be > 0, got {z}")
    b = N_STATES
    A = np.zeros((b, b))
    B = np.zeros((b, 2))
    i = IDX

    # Angle integrates the frequency error against the delivered reference.
    A[i["beta"], i["omega"]] = 1.0
    B[i["beta"], 0] = -1.0

    # Output voltage/current filters (d axis aligned with the output phasor).
    A[i["v_od"], i["V"]] = 1.0 / t_filter
    A[i["v_od"], i["v_od"]] = -1.0 / t_filter
    A[i["v_oq"], i["v_oq"]] = -1.0 / t_filter
    A[i["i_od"], i["P_G"]] = 1.0 / (s_base * t_filter)
    A[i["i_od"], i["i_od"]] = -1.0 / t_filter
    A[i["i_oq"], i["Q_G"]] = -1.0 / (s_base * t_filter)
    A[i["i_oq"], i["i_oq"]] = -1.0 / t_filter
    A[i["i_d"], i["i_od"]] = 1.0 / t_filter
    A[i["i_d"], i["i_d"]] = -1.0 / t_filter
    A[i["i_q"], i["i_oq"]] = 1.0 / t_filter
    A[i["i_q"], i["i_q"]] = -1.0 / t_filter

    # Low-passed powers with linearized flow sensitivities (theta ~ 90 deg).
    A[i["P_G"], i["beta"]] = math.sin(theta) * (v_g / z) * s_base / t_power
    A[i["P_G"], i["P_G"]] = -1.0 / t_power
    A[i["Q_G"], i["V"]] = math.sin(theta) * (v_g / z) * s_base / t_power
    A[i["Q_G"], i["Q_G"]] = -1.0 / t_power

    # Droop rows: track the delivered setpoints sagged by the droop gains.
    A[i["omega"], i["omega"]] = -1.0 / t_filter
    A[i["omega"], i["P_G"]] = -params.k_p / t_filter
    B[i["omega"], 0] = 1.0 / t_filter
    A[i["V"], i["V"]] = -1.0 / t_filter
    A[i["V"], i["Q_G"]] = -params.k_q / t_filter
    B[i["V"], 1] = 1.0 / t_filter

    C = np.eye(b)
    noise_sigma = noise_sigma_pu * channel_scales(params.omega0, s_base)
    return StateSpaceModel(A=A, B=B, C=C, noise_sigma=noise_sigma)


def channel_scales(omega_nominal: float, s_base: float) -> np.ndarray:
    """Physical scale of each state channel (1 pu of that channel)."""
    scales = np.ones(N_STATES)
    scales[IDX["P_G"]] = s_base
    scales[IDX["Q_G"]] = s_base
    scales[IDX["omega"]] = omega_nominal
    return scales


# ----------------------------------------------------------------------------
# Waveform synthesis and harmonic distortion

PHASE_OFFSETS = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)


def synthesize_waveform(state: ConverterState, t, clip_pu: float):
    """Three-phase instantaneous voltages at time(s) t, hard-clipped.

    v_abc(t) = clamp(V sin(omega t + beta + offset), +-clip_pu); the clipping
    reproduces modulation saturation, which squares off the waveform.
    """
    if clip_pu <= 0:
        raise ValueError("clip_pu must be > 0")
    t = np.asarray(t, dtype=float)
    v, omega, beta = state.V, state.omega, state.beta
    phases = omega * t[..., None] + beta + np.array(PHASE_OFFSETS)
    return np.clip(v * np.sin(phases), -clip_pu, clip_pu)


def harmonic_projection_matrix(f0: float, rate: float, n_samples: int,
                               harmonics: int = 50) -> np.ndarray:
    """DFT projection onto exact harmonics k*f0 over an n_samples window.

    Used instead of raw FFT bins because one fundamental period is generally
    not an integer number of samples (20 kHz / 60 Hz = 333.33).
    """
    n = np.arange(n_samples) / rate
    k = np.arange(1, harmonics + 1)
    return np.exp(-2j * math.pi * f0 * np.outer(k, n)) * (2.0 / n_samples)


def waveform_thd(samples, rate: float, f0: float, harmonics: int = 50) -> float:
    """Total harmonic distortion of a window: harmonics 2..harmonics over the
    fundamental.  Returns 0 for windows with no fundamental content."""
    samples = np.asarray(samples, dtype=float)
    m = harmonic_projection_matrix(f0, rate, samples.shape[-1], harmonics)
    coeffs = m @ samples
    fundamental = abs(coeffs[0])
    if fundamental < 1e-9:
        return 0.0
    return float(math.sqrt(float(np.sum(np.abs(coeffs[1:]) ** 2))) / fundamental)

"""Measurement-channel attack models.

An attacked channel delivers a manipulated value to the consuming controller,
which applies its feedback law to whatever it receives (u = -H * y_delivered).
Three manipulation kinds are supported over a closed time window [t_a, t_a']:

  scaling   y -> (1 + a_s) * y        (a_s dimensionless)
  additive  y -> y + a_a              (a_a in the channel's units)
  ramping   y -> y + a_r * t_rel      (a_r in units per second, t_rel measured
                                       from the currently open window)

A spec is either one-shot or periodic with period T; the periodic window
repeats as [t_a + kT, t_a' + kT] for k >= 0.  Outside every active window the
delivered value equals the true value bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

KINDS = ("scaling", "additive", "ramping")
SCHEDULES = ("one_shot", "periodic")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    magnitude: float
    agent: int
    channel: str
    window: tuple          # (t_a, t_a') seconds, closed interval
    schedule: str = "one_shot"
    period: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        t_a, t_b = self.window
        if not t_a < t_b:
            raise ValueError(f"window must satisfy t_a < t_a', got {self.window}")
        if self.schedule == "periodic":
            if self.period is None:
                raise ValueError("periodic schedule requires a period")
            if not self.period > (t_b - t_a):
                raise ValueError("period must exceed the window length")


def is_active(spec: AttackSpec, t: float) -> bool:
    """True when t falls inside an attack window (closed boundaries)."""
    t_a, t_b = spec.window
    if spec.schedule == "one_shot":
        return t_a <= t <= t_b
    if t < t_a:
        return False
    return math.fmod(t - t_a, spec.period) <= (t_b - t_a)


def window_relative_time(spec: AttackSpec, t: float) -> float:
    """Seconds since the currently open window started (0 when inactive)."""
    if not is_active(spec, t):
        return 0.0
    t_a = spec.window[0]
    if spec.schedule == "one_shot":
        return t - t_a
    return math.fmod(t - t_a, spec.period)


def apply_attack(spec: AttackSpec, y: float, t: float) -> float:
    """Delivered value of a channel carrying true value y at time t."""
    if not is_active(spec, t):
        return y
    if spec.kind == "scaling":
        return (1.0 + spec.magnitude) * y
    if spec.kind == "additive":
        return y + spec.magnitude
    return y + spec.magnitude * window_relative_time(spec, t)


def corrupt_control(h: float, y_delivered: float) -> float:
    """Feedback law applied blindly to the delivered measurement."""
    return -h * y_delivered


@dataclass
class AttackChannel:
    """One victim channel: true value in, delivered value out.

    The invariant that y_delivered == y_true whenever no spec is active is
    what makes identity-outside-window testable at the channel level.
    """

    feedback_gain: float
    specs: tuple = ()
    y_true: float = 0.0
    y_delivered: float = 0.0

    def sample(self, y: float, t: float) -> float:
        self.y_true = y
        for spec in self.specs:
            y = apply_attack(spec, y, t)
        self.y_delivered = y
        return y

    def control(self, t: float) -> float:
        return corrupt_control(self.feedback_gain, self.y_delivered)

"""Threshold-based anomaly detection against per-agent attack-free baselines.

Each agent gets a custom baseline learned from an attack-free run: a tolerance
band per monitored feature (the 11 state channels), an allowed waveform THD
ceiling, a settling-time ceiling, and absolute voltage/frequency operating
limits.  At run time a feature must stay out of its band for a configured
number of consecutive samples before the agent is flagged, which suppresses
single-sample noise hits.  Compromised behavior is reported as flag/no-flag;
classifying attack vs. fault is out of scope here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class InsufficientDataError(ValueError):
    pass


@dataclass
class AgentBaseline:
    """Per-feature tolerance bands plus scalar operating ceilings."""

    mean: np.ndarray          # per-feature center
    half_width: np.ndarray    # per-feature band half-width, > 0
    thd_ceiling: float = 0.05
    settle_ceiling: float = 0.0
    v_limits: tuple = (0.9, 1.1)
    f_limits: tuple = (59.5, 60.5)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.half_width = np.asarray(self.half_width, dtype=float)
        if self.mean.shape != self.half_width.shape:
            raise ValueError("mean and half_width must align")
        if np.any(self.half_width <= 0):
            raise ValueError("tolerance bands must be strictly positive")

    def out_of_band(self, sample) -> np.ndarray:
        return np.abs(np.asarray(sample, dtype=float) - self.mean) > self.half_width


@dataclass
class DetectionVerdict:
    agent: int
    flagged: bool
    triggered_features: list = field(default_factory=list)
    trigger_time: float | None = None
    feature_values: np.ndarray | None = None

    def __post_init__(self):
        if self.flagged != bool(self.triggered_features):
            raise ValueError("flagged must match triggered_features being non-empty")


def calibrate(attack_free_run, dt: float, margin_factor: float = 6.0,
              floor=1.0e-3, min_duration: float = 1.0,
              thd_ceiling: float = 0.05, settle_band_pct: float = 0.02,
              v_limits=(0.9, 1.1), f_limits=(59.5, 60.5)) -> AgentBaseline:
    """Learn one agent's baseline from attack-free feature samples.

    attack_free_run is an (n_samples, n_features) array of settled
    measurements.  Each band is mean +- max(margin_factor * std, floor);
    floor may be a scalar or a per-feature vector (physical channel scales).
    min_duration guards against calibrating on too little data; the in-run
    warmup fallback passes its own (shorter) requirement explicitly.
    """
    run = np.asarray(attack_free_run, dtype=float)
    if run.ndim != 2 or run.shape[0] < 2:
        raise InsufficientDataError("need a 2-D run with at least 2 samples")
    if run.shape[0] * dt < min_duration:
        raise InsufficientDataError(
            f"calibration run covers {run.shape[0] * dt:.4f}s "
            f"but {min_duration:.4f}s of settled data is required"
        )
    mean = run.mean(axis=0)
    std = run.std(axis=0)
    half = np.maximum(margin_factor * std, np.broadcast_to(floor, std.shape))
    settle = max(
        settling_time(run[:, j], float(mean[j]), dt, band_pct=settle_band_pct)
        for j in range(run.shape[1])
    )
    return AgentBaseline(mean=mean, half_width=half, thd_ceiling=thd_ceiling,
                         settle_ceiling=settle, v_limits=tuple(v_limits),
                         f_limits=tuple(f_limits))


def detect(baseline: AgentBaseline, window, t: float, dt: float,
           persistence: int = 20, agent: int = 0) -> DetectionVerdict:
    """Evaluate a window of recent measurements ending at time t.

    window is (n_samples, n_features) with the last row sampled at t.  The
    agent is flagged when any feature sits outside its band for at least
    `persistence` consecutive samples; the verdict carries the time of the
    first sample of the earliest such streak.
    """
    window = np.asarray(window, dtype=float)
    if window.shape[0] < persistence:
        raise InsufficientDataError(
            f"window has {window.shape[0]} samples, persistence needs {persistence}"
        )
    out = np.abs(window - baseline.mean) > baseline.half_width
    n = window.shape[0]
    t_first = t - (n - 1) * dt
    triggered = {}
    for j in range(window.shape[1]):
        streak = 0
        for s in range(n):
            streak = streak + 1 if out[s, j] else 0
            if streak == persistence and j not in triggered:
                triggered[j] = t_first + (s - persistence + 1) * dt
    if not triggered:
        return DetectionVerdict(agent=agent, flagged=False)
    trigger_time = min(triggered.values())
    trigger_idx = int(round((trigger_time - t_first) / dt))
    return DetectionVerdict(
        agent=agent,
        flagged=True,
        triggered_features=sorted(triggered),
        trigger_time=trigger_time,
        feature_values=window[trigger_idx].copy(),
    )


def settling_time(signal, target: float, dt: float, band_pct: float = 0.02) -> float:
    """Time after which the signal stays inside target +- band for good.

    The band is band_pct of the initial deviation |signal[0] - target| (the
    usual step-response convention); for a series that starts on target the
    band falls back to band_pct of max(|target|, 1).  Measured from the series
    start; a series still outside the band at its end returns the full
    duration (never settled).
    """
    sig = np.asarray(signal, dtype=float)
    if sig.size == 0:
        raise InsufficientDataError("empty series")
    ref = abs(float(sig[0]) - target)
    if ref == 0.0:
        ref = max(abs(target), 1.0)
    band = band_pct * ref
    out = np.abs(sig - target) > band
    if not out.any():
        return 0.0
    last_out = int(np.nonzero(out)[0][-1])
    return (last_out + 1) * dt


# ----------------------------------------------------------------------------
# Baseline persistence (for the calibrate CLI command)

def save_baselines(path: str, baselines, meta=None) -> None:
    payload = {
        "format": "gridshield-baseline v1",
        "meta": meta or {},
        "agents": [
            {
                "mean": [repr(v) for v in b.mean.tolist()],
                "half_width": [repr(v) for v in b.half_width.tolist()],
                "thd_ceiling": b.thd_ceiling,
                "settle_ceiling": b.settle_ceiling,
                "v_limits": list(b.v_limits),
                "f_limits": list(b.f_limits),
            }
            for b in baselines
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_baselines(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "gridshield-baseline v1":
        raise ValueError(f"{path} is not a gridshield baseline file")
    out = []
    for entry in payload["agents"]:
        out.append(AgentBaseline(
            mean=np.array([float(v) for v in entry["mean"]]),
            half_width=np.array([float(v) for v in entry["half_width"]]),
            thd_ceiling=entry["thd_ceiling"],
            settle_ceiling=entry["settle_ceiling"],
            v_limits=tuple(entry["v_limits"]),
            f_limits=tuple(entry["f_limits"]),
        ))
    return out

"""Deterministic fixed-step simulation loop and Monte Carlo sweeps.

Each step applies, in a fixed order: attack evaluation on the delivered
control channels, consensus inputs from the exchanged states, converter state
integration, threshold detection, supervisory commands on the scan grid,
battery dispatch, and recording.  All scheduling runs on integer step indices
so identical (scenario, seed) inputs give bit-identical outputs; sweep cells
reuse the base seed so attack magnitude is the only varying factor.

Scenarios start from the solved droop equilibrium of the dispatch point: the
consensus leader reference x0 is the secondary frequency correction that
makes each agent carry its bus load at nominal frequency, and a static
secondary voltage correction holds the output voltage at the nominal value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gridshield import kernel
from gridshield.attack import AttackSpec
from gridshield.consensus import ConsensusController, consensus_error
from gridshield.converter import (IDX, N_STATES, STATE_NAMES, channel_scales,
                                  harmonic_projection_matrix, power_flow)
from gridshield.detection import AgentBaseline, InsufficientDataError
from gridshield.mitigation import (BessState, MscSupervisor, bess_step,
                                   regulate_frequency)
from gridshield.topology import CHANNELS, ScenarioConfig, ScenarioError

FEATURE_NAMES = STATE_NAMES + ("v_limit", "f_limit", "thd")
N_FEATURES = len(FEATURE_NAMES)
THD_FEATURE = 13
STATUS_CODE = {"ON": 0, "OFF": 1, "RESTORING": 2}
KIND_CODE = {"scaling": 0, "additive": 1, "ramping": 2}


class DivergenceError(RuntimeError):
    pass


@dataclass
class Event:
    step: int
    t: float
    agent: int
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass
class TimeSeriesRecord:
    """Decimated run history; one row per record interval, columns fixed."""

    t: np.ndarray            # (rows,)
    v: np.ndarray            # (rows, n) output voltage [pu]
    f: np.ndarray            # (rows, n) frequency [Hz]
    p: np.ndarray            # (rows, n) active power [W]
    q: np.ndarray            # (rows, n) reactive power [Var]
    thd: np.ndarray          # (rows, n)
    status: np.ndarray       # (rows, n) 0=ON 1=OFF 2=RESTORING
    flag: np.ndarray         # (rows, n) detector flag latched
    bess_soc: np.ndarray     # (rows,)
    bess_w: np.ndarray       # (rows,) dispatched power [W]
    bess_f: np.ndarray       # (rows,) regulated island frequency [Hz]
    consensus_err: np.ndarray  # (rows,)

    @property
    def n_agents(self) -> int:
        return self.v.shape[1]

    def column_names(self) -> list:
        names = ["t"]
        for i in range(self.n_agents):
            names += [f"agent{i}_{c}" for c in
                      ("v_pu", "f_hz", "p_w", "q_var", "thd", "status", "flag")]
        names += ["bess_soc", "bess_w", "bess_f_hz", "consensus_err"]
        return names

    def rows(self):
        for r in range(self.t.shape[0]):
            row = [self.t[r]]
            for i in range(self.n_agents):
                row += [self.v[r, i], self.f[r, i], self.p[r, i], self.q[r, i],
                        self.thd[r, i], int(self.status[r, i]), int(self.flag[r, i])]
            row += [self.bess_soc[r], self.bess_w[r], self.bess_f[r],
                    self.consensus_err[r]]
            yield row


@dataclass
class RunResult:
    config: ScenarioConfig
    record: TimeSeriesRecord
    events: list
    status: str                  # "ok" | "diverged"
    final_states: np.ndarray     # (n, 11) last good state
    final_xsec: np.ndarray
    bess: BessState
    soc_initial: float
    energy_dispatched_wh: float
    baselines: list
    divergence: dict | None = None
    measurements: np.ndarray | None = None   # (rows, n, 11) when collected

    def event_kinds(self) -> set:
        return {e.kind for e in self.events}

    def first_event(self, kind: str, agent: int | None = None):
        for e in self.events:
            if e.kind == kind and (agent is None or e.agent == agent):
                return e
        return None


# ----------------------------------------------------------------------------
# Initial conditions

def solve_equilibrium(config: ScenarioConfig, agent: int):
    """Droop equilibrium of one agent at its dispatch point.

    Returns (state_vector, dv_secondary).  The dispatch P* = x0 / k_p holds
    the agent at nominal frequency; beta solves the power flow for P* at
    V = v0, and the static secondary voltage correction cancels the Q droop
    so the voltage equilibrium is exactly v0.
    """
    a = config.agents[agent]
    z = config.topology.line_z_pu[agent]
    theta = config.topology.line_theta_rad[agent]
    v_g = 1.0
    p_target = (config.leader_x0 / a.k_p) / a.s_base
    p_max = v_g * a.v0 / z - (v_g * v_g / z) * math.cos(theta)
    if p_target > p_max:
        raise ScenarioError(
            f"[agents] agent{agent}: dispatch {p_target:.3f} pu exceeds the "
            f"line transfer capability {p_max:.3f} pu"
        )
    lo, hi = 0.0, theta
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p_mid, _ = power_flow(v_g, a.v0, mid, z, theta)
        if p_mid < p_target:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    p_pu, q_pu = power_flow(v_g, a.v0, beta, z, theta)
    q_w = q_pu * a.s_base
    dv_secondary = a.k_q * q_w
    x = np.zeros(N_STATES)
    x[IDX["beta"]] = beta
    x[IDX["v_od"]] = a.v0
    x[IDX["v_oq"]] = 0.0
    x[IDX["i_od"]] = p_pu / a.v0
    x[IDX["i_oq"]] = -q_pu / a.v0
    x[IDX["i_d"]] = p_pu / a.v0
    x[IDX["i_q"]] = -q_pu / a.v0
    x[IDX["P_G"]] = p_pu * a.s_base
    x[IDX["Q_G"]] = q_w
    x[IDX["omega"]] = a.omega0
    x[IDX["V"]] = a.v0
    return x, dv_secondary


def make_noise(config: ScenarioConfig, n_steps: int) -> np.ndarray:
    """Telemetry noise, one counter-based stream per (agent, channel).

    Keyed on (seed, agent, channel) so adding agents or changing attack
    magnitudes never perturbs another agent's noise, which keeps sweep cells
    comparable point by point.
    """
    n = config.n_agents
    noise = np.empty((n, N_STATES, n_steps))
    seed = config.sim.seed % (2 ** 63)
    for i in range(n):
        scales = channel_scales(config.agents[i].omega0, config.agents[i].s_base)
        for ch in range(N_STATES):
            key = np.array([seed, (i << 32) + ch], dtype=np.uint64)
            gen = np.random.Generator(np.random.Philox(key=key))
            sigma = config.detection.noise_sigma_pu * scales[ch]
            noise[i, ch, :] = gen.normal(0.0, 1.0, size=n_steps) * sigma
    return noise


def _encode_attacks(config: ScenarioConfig) -> np.ndarray:
    rows = []
    for spec in config.attacks:
        rows.append([
            float(spec.agent),
            float(CHANNELS.index(spec.channel)),
            float(KIND_CODE[spec.kind]),
            spec.magnitude,
            spec.window[0],
            spec.window[1],
            1.0 if spec.schedule == "periodic" else 0.0,
            spec.period if spec.period is not None else 0.0,
        ])
    return np.array(rows, dtype=float).reshape(len(rows), 8)


def _params_matrix(config: ScenarioConfig) -> np.ndarray:
    par = np.empty((config.n_agents, 13))
    for i, a in enumerate(config.agents):
        par[i] = [a.k_p, a.k_q, a.omega0, a.v0,
                  config.topology.line_z_pu[i], config.topology.line_theta_rad[i],
                  a.s_base, a.t_filter, a.t_power, a.v_sat,
                  a.h_gain, float(a.leader_link), 0.0]
    return par


class _Verdict:
    """Latched per-agent detector outcome handed to the supervisor."""

    __slots__ = ("agent", "flagged", "triggered_features", "trigger_time")

    def __init__(self, agent, flagged, triggered_features, trigger_time):
        self.agent = agent
        self.flagged = flagged
        self.triggered_features = triggered_features
        self.trigger_time = trigger_time


# ----------------------------------------------------------------------------
# The run loop

def run(config: ScenarioConfig, baselines: list | None = None,
        collect_measurements: bool = False) -> RunResult:
    config.validate()
    n = config.n_agents
    sim = config.sim
    dt = sim.timestep
    n_steps = int(round(sim.duration / dt))
    decim = sim.record_decimation
    scan_steps = max(int(round(sim.scan_interval / dt)), 1)
    pickup_steps = int(round(sim.bess_pickup_delay / dt))
    reboot_steps = int(round(sim.reboot_time / dt))
    warmup_steps = int(round(config.detection.warmup / dt))
    omega_nom = config.agents[0].omega0
    for a in config.agents:
        if a.omega0 != omega_nom:
            raise ScenarioError("[agents] all agents must share omega0")
    f_nom = omega_nom / (2.0 * math.pi)

    # Waveform machinery: integer sub-samples per step, one-period window.
    wf_per_step = max(int(round(sim.waveform_rate * dt)), 1)
    wf_len = max(int(round(sim.waveform_rate / f_nom)), 8)
    wf_proj = harmonic_projection_matrix(f_nom, sim.waveform_rate, wf_len)

    par = _params_matrix(config)
    attacks = _encode_attacks(config)
    X = np.empty((n, N_STATES))
    dv_sec = np.zeros(n)
    for i in range(n):
        X[i], dv_sec[i] = solve_equilibrium(config, i)
    par[:, 12] = dv_sec
    X_warm = X.copy()
    xsec = np.array([
        config.leader_x0 if a.secondary_init is None else a.secondary_init
        for a in config.agents
    ])

    ctrl = ConsensusController(
        adjacency=np.array(config.graph.adjacency_list(), dtype=float),
        gains=np.array([a.h_gain for a in config.agents]),
        leader_flags=np.array([float(a.leader_link) for a in config.agents]),
        leader_state=config.leader_x0,
    )

    detect_on = config.detection.enabled
    if detect_on:
        noise = make_noise(config, n_steps)
    else:
        noise = np.zeros((n, N_STATES, 1))

    bess_cfg = config.bess
    bess = BessState(
        p_min=bess_cfg.p_min_w, p_max=bess_cfg.p_max_w,
        soc=bess_cfg.soc_init, soc_min=bess_cfg.soc_min,
        soc_max=bess_cfg.soc_max,
        capacity_wh=config.topology.bess_capacity_mwh * 1e6,
        omega=bess_cfg.omega_ref, omega_ref=bess_cfg.omega_ref,
        t_lim=bess_cfg.t_lim,
    )
    soc_initial = bess.soc

    sup = MscSupervisor(
        n_agents=n,
        loads_w=[a.load_w for a in config.agents],
        criticalities=[a.criticality for a in config.agents],
        pickup_delay_steps=pickup_steps,
        reboot_steps=reboot_steps,
        horizon_s=sim.reboot_time + sim.scan_interval,
    )

    inverter_on = np.ones(n, dtype=np.uint8)
    monitored = np.ones(n, dtype=np.uint8)
    for i, a in enumerate(config.agents):
        if a.initial_off:
            sup.mark_initially_off(i)
            inverter_on[i] = 0
            monitored[i] = 0
            ctrl.remove_agent(i)
            X[i] = 0.0
            X[i, IDX["omega"]] = omega_nom

    # Baselines: externally calibrated, or learned over the warmup window.
    if baselines is not None:
        if len(baselines) != n:
            raise ValueError("need one baseline per agent")
        base_mean = np.stack([b.mean for b in baselines])
        base_half = np.stack([b.half_width for b in baselines])
        detect_from_step = 0
        run_baselines = list(baselines)
    else:
        base_mean = np.zeros((n, N_STATES))
        base_half = np.full((n, N_STATES), np.inf)
        detect_from_step = warmup_steps
        run_baselines = []

    counters = np.zeros((n, N_FEATURES), dtype=np.int64)
    streak_start = np.full((n, N_FEATURES), -1, dtype=np.int64)
    first_exceed = np.full((n, N_FEATURES), -1, dtype=np.int64)
    flag_step = np.full(n, -1, dtype=np.int64)
    flag_feature = np.full(n, -1, dtype=np.int64)
    env_flag = np.zeros(n, dtype=np.uint8)
    env_reported = set()
    flag_reported = set()

    theta_wf = np.zeros(n)
    wf_buf = np.zeros((n, wf_len))
    wf_pos = 0
    wf_filled = 0          # THD reads garbage until the ring wraps once
    thd_now = np.zeros(n)

    n_rows = sum(1 for s in range(1, n_steps + 1) if s % decim == 0 or s == n_steps)
    rec = TimeSeriesRecord(
        t=np.zeros(n_rows),
        v=np.zeros((n_rows, n)), f=np.zeros((n_rows, n)),
        p=np.zeros((n_rows, n)), q=np.zeros((n_rows, n)),
        thd=np.zeros((n_rows, n)), status=np.zeros((n_rows, n), dtype=np.int8),
        flag=np.zeros((n_rows, n), dtype=np.int8),
        bess_soc=np.zeros(n_rows), bess_w=np.zeros(n_rows),
        bess_f=np.zeros(n_rows), consensus_err=np.zeros(n_rows),
    )
    measurements = np.zeros((n_rows, n, N_STATES)) if collect_measurements else None

    events: list = []
    energy_wh = 0.0
    pickup_step = None
    freq_violation_reported = False
    curtail_reported = False
    divergence = None
    status = "ok"

    clip = sim.clip_pu
    det_cfg = config.detection
    v_lo, v_hi = det_cfg.v_limits
    w_lo = det_cfg.f_limits[0] * 2.0 * math.pi
    w_hi = det_cfg.f_limits[1] * 2.0 * math.pi
    persistence = det_cfg.persistence

    def state_in_bands(i: int) -> bool:
        return bool(np.all(np.abs(X[i] - base_mean[i]) <= base_half[i]))

    def emit(kind: str, agent: int, step: int, payload=None):
        events.append(Event(step=step, t=step * dt, agent=agent, kind=kind,
                            payload=payload or {}))

    def thd_counter_update(i: int, nsub: int, step_end: int):
        out = thd_now[i] > det_cfg.thd_ceiling
        if out:
            if counters[i, THD_FEATURE] == 0:
                streak_start[i, THD_FEATURE] = step_end - nsub + 1
            counters[i, THD_FEATURE] += nsub
            if counters[i, THD_FEATURE] >= persistence:
                if first_exceed[i, THD_FEATURE] < 0:
                    first_exceed[i, THD_FEATURE] = streak_start[i, THD_FEATURE]
                if flag_step[i] < 0:
                    flag_step[i] = streak_start[i, THD_FEATURE] + persistence - 1
                    flag_feature[i] = THD_FEATURE
        else:
            counters[i, THD_FEATURE] = 0
            streak_start[i, THD_FEATURE] = -1

    def apply_commands(commands):
        nonlocal pickup_step, freq_violation_reported
        for cmd in commands:
            i = cmd.agent
            emit(cmd.kind, i, cmd.step, cmd.payload)
            if cmd.kind == "breaker_open":
                pass
            elif cmd.kind == "status_off":
                monitored[i] = 0
            elif cmd.kind == "consensus_remove":
                ctrl.remove_agent(i)
            elif cmd.kind == "inverter_disconnect":
                inverter_on[i] = 0
            elif cmd.kind == "bess_dispatch":
                if bess.frequency_mode != "regulating":
                    bess.frequency_mode = "regulating"
                    bess.omega = X[i, IDX["omega"]]
                    pickup_step = cmd.step
                    freq_violation_reported = False
                bess.current_output = sup.committed_output()
            elif cmd.kind == "state_reset":
                X[i] = X_warm[i]
                xsec[i] = config.leader_x0
                inverter_on[i] = 1
            elif cmd.kind == "status_on":
                monitored[i] = 1
                counters[i, :] = 0
                streak_start[i, :] = -1
                first_exceed[i, :] = -1
                flag_step[i] = -1
                flag_feature[i] = -1
                flag_reported.discard(i)
            elif cmd.kind == "inverter_connect":
                X[i, IDX["V"]] += sim.handover_perturbation
            elif cmd.kind == "consensus_restore":
                ctrl.restore_agent(i)
            elif cmd.kind == "bess_release":
                bess.current_output = sup.committed_output()
                if not sup.supported_demand:
                    bess.frequency_mode = "idle"
                    pickup_step = None

    done = 0
    row = 0
    while done < n_steps:
        next_record = ((done // decim) + 1) * decim
        next_scan = ((done // scan_steps) + 1) * scan_steps
        stop = min(next_record, next_scan, n_steps)
        nsub = stop - done
        wf_pos, kstatus, bad_agent, bad_state = kernel.run_chunk(
            X, xsec, theta_wf, wf_buf, wf_pos,
            counters, streak_start, first_exceed, flag_step, flag_feature,
            env_flag, noise, par, ctrl.working, ctrl.in_set,
            inverter_on, monitored, attacks, config.leader_x0,
            base_mean, base_half, v_lo, v_hi, w_lo, w_hi,
            persistence, int(detect_on), detect_from_step,
            omega_nom, 1.0, clip, dt, done, nsub, wf_per_step,
        )
        done = stop
        if kstatus != kernel.OK:
            status = "diverged"
            divergence = {"agent": int(bad_agent),
                          "state": STATE_NAMES[bad_state], "step": done}
            emit("divergence", int(bad_agent), done,
                 {"state": STATE_NAMES[bad_state]})
            break

        # THD from the one-period sliding window (held between evaluations).
        wf_filled = min(wf_filled + nsub * wf_per_step, wf_len)
        for i in range(n):
            if inverter_on[i] and wf_filled >= wf_len:
                window = np.concatenate((wf_buf[i, wf_pos:], wf_buf[i, :wf_pos]))
                coeffs = wf_proj @ window
                fund = abs(coeffs[0])
                thd_now[i] = 0.0 if fund < 1e-9 else float(
                    math.sqrt(float(np.sum(np.abs(coeffs[1:]) ** 2))) / fund)
            else:
                thd_now[i] = 0.0
            if detect_on and done > detect_from_step and monitored[i]:
                thd_counter_update(i, nsub, done)

        for i in range(n):
            if env_flag[i] and i not in env_reported:
                env_reported.add(i)
                emit("envelope_violation", i, done)

        # In-run calibration once the warmup window closes.
        if detect_on and baselines is None and not run_baselines \
                and done >= warmup_steps:
            w = min(max(warmup_steps, 2), n_steps)
            for i in range(n):
                e_slice = noise[i, :, :w]
                mean_i = X[i] + e_slice.mean(axis=1)
                scales = channel_scales(config.agents[i].omega0,
                                        config.agents[i].s_base)
                half_i = np.maximum(det_cfg.margin_factor * e_slice.std(axis=1),
                                    det_cfg.floor * scales)
                base_mean[i] = mean_i
                base_half[i] = half_i
                run_baselines.append(AgentBaseline(
                    mean=mean_i.copy(), half_width=half_i.copy(),
                    thd_ceiling=det_cfg.thd_ceiling,
                    settle_ceiling=0.0,
                    v_limits=det_cfg.v_limits, f_limits=det_cfg.f_limits,
                ))

        # Battery dispatch, state of charge, and frequency regulation.
        chunk_dt = nsub * dt
        demand = sup.committed_output()
        if demand > 0.0 or bess.current_output != 0.0:
            bess = bess_step(bess, demand, chunk_dt)
            energy_wh += bess.current_output * chunk_dt / 3600.0
        if bess.frequency_mode == "regulating" and pickup_step is not None:
            t_since = (done - pickup_step) * dt
            omega_cmd, compliant = regulate_frequency(
                bess, bess.omega, bess.omega_ref, t_since, bess.t_lim,
                dt=chunk_dt)
            bess.omega = omega_cmd
            if not compliant and not freq_violation_reported:
                freq_violation_reported = True
                emit("frequency_violation", -1, done,
                     {"deviation": abs(bess.omega - bess.omega_ref)})
        if bess.limit_reached and not curtail_reported:
            curtail_reported = True
            emit("bess_curtailed", -1, done, {"output_w": bess.current_output})

        # Supervisory scan.
        if done % scan_steps == 0:
            verdicts = []
            for i in range(n):
                if flag_step[i] >= 0 and i not in flag_reported:
                    feats = [FEATURE_NAMES[f] for f in range(N_FEATURES)
                             if first_exceed[i, f] >= 0]
                    valid = first_exceed[i][first_exceed[i] >= 0]
                    verdicts.append(_Verdict(i, True, feats,
                                             float(valid.min()) * dt))
                    flag_reported.add(i)
                else:
                    verdicts.append(_Verdict(i, False, [], None))
            commands = sup.supervise_step(bess, verdicts, done, state_in_bands)
            apply_commands(commands)

        # Recording.
        if done % decim == 0 or done == n_steps:
            rec.t[row] = done * dt
            rec.v[row] = X[:, IDX["V"]]
            rec.f[row] = X[:, IDX["omega"]] / (2.0 * math.pi)
            rec.p[row] = X[:, IDX["P_G"]]
            rec.q[row] = X[:, IDX["Q_G"]]
            rec.thd[row] = thd_now
            rec.status[row] = [STATUS_CODE[sup.agents[i].status] for i in range(n)]
            rec.flag[row] = [1 if flag_step[i] >= 0 else 0 for i in range(n)]
            rec.bess_soc[row] = bess.soc
            rec.bess_w[row] = bess.current_output
            rec.bess_f[row] = bess.omega / (2.0 * math.pi)
            rec.consensus_err[row] = consensus_error(
                list(xsec), config.leader_x0, in_set=ctrl.in_set) \
                if ctrl.in_set.any() else 0.0
            if collect_measurements:
                measurements[row] = X + noise[:, :, done - 1] if detect_on else X
            row += 1

    if status == "diverged":
        rec = _truncate_record(rec, row)
        if measurements is not None:
            measurements = measurements[:row]

    return RunResult(
        config=config,
        record=rec,
        events=events,
        status=status,
        final_states=X.copy(),
        final_xsec=xsec.copy(),
        bess=bess,
        soc_initial=soc_initial,
        energy_dispatched_wh=energy_wh,
        baselines=run_baselines,
        divergence=divergence,
        measurements=measurements,
    )


def _truncate_record(rec: TimeSeriesRecord, rows: int) -> TimeSeriesRecord:
    return TimeSeriesRecord(**{
        name: getattr(rec, name)[:rows] for name in (
            "t", "v", "f", "p", "q", "thd", "status", "flag",
            "bess_soc", "bess_w", "bess_f", "consensus_err")
    })


# ----------------------------------------------------------------------------
# Steady-state impact and sweeps

def steady_state_impact(record: TimeSeriesRecord, config: ScenarioConfig,
                        tail_fraction: float = 0.2):
    """Steady-state attack impact: (dV [pu], df [Hz]), worst agent.

    Means of |V - V_nom| / V_nom and |f - f_nom| over the final fraction of
    the record.  The record must span at least five of the longest configured
    time constant so the tail is actually steady.
    """
    span = record.t[-1] - record.t[0] if record.t.size > 1 else 0.0
    t_min = 5.0 * max(a.t_filter for a in config.agents)
    t_min = max(t_min, 5.0 * max(a.t_power for a in config.agents))
    if span < t_min:
        raise InsufficientDataError(
            f"record spans {span:.4f}s; need at least {t_min:.4f}s")
    rows = record.t.shape[0]
    tail = max(int(round(rows * tail_fraction)), 1)
    v_nom = config.agents[0].v0
    f_nom = config.f_nominal()
    dv = np.abs(record.v[-tail:] - v_nom) / v_nom
    df = np.abs(record.f[-tail:] - f_nom)
    return float(dv.mean(axis=0).max()), float(df.mean(axis=0).max())


@dataclass
class SweepResult:
    """Steady-state deviations over the (additive, scaling-factor) grid."""

    additive: np.ndarray       # (na,)
    scaling: np.ndarray        # (ns,) factors (1 + a_s)
    dv: np.ndarray             # (na, ns) [pu]
    df: np.ndarray             # (na, ns) [Hz]
    diverged: np.ndarray       # (na, ns) bool

    def cell(self, a_a: float, factor: float):
        ia = int(np.argmin(np.abs(self.additive - a_a)))
        is_ = int(np.argmin(np.abs(self.scaling - factor)))
        return self.dv[ia, is_], self.df[ia, is_], bool(self.diverged[ia, is_])


def _sweep_template(config: ScenarioConfig):
    """Target/window the sweep varies; taken from the scenario's first attack."""
    if config.attacks:
        t = config.attacks[0]
        return t.agent, t.channel, t.window, t.schedule, t.period
    return 0, "mod", (0.1, config.sim.duration), "one_shot", None


def sweep_cell(config: ScenarioConfig, a_a: float, factor: float):
    """Run one sweep cell: scaling by `factor` then adding `a_a`.

    Returns (dv, df, diverged).  Divergence is recorded, not raised, so a
    sweep survives unstable corners of the grid.
    """
    agent, channel, window, schedule, period = _sweep_template(config)
    specs = [
        AttackSpec(kind="scaling", magnitude=factor - 1.0, agent=agent,
                   channel=channel, window=window, schedule=schedule,
                   period=period),
        AttackSpec(kind="additive", magnitude=a_a, agent=agent,
                   channel=channel, window=window, schedule=schedule,
                   period=period),
    ]
    cell_config = config.with_attacks(specs)
    result = run(cell_config)
    if result.status == "diverged":
        return math.nan, math.nan, True
    dv, df = steady_state_impact(result.record, cell_config)
    return dv, df, False


def run_sweep(config: ScenarioConfig, additive_grid, scaling_grid,
              jobs: int = 1) -> SweepResult:
    """Independent runs over the attack-magnitude grid, same seed per cell."""
    additive = np.asarray(list(additive_grid), dtype=float)
    scaling = np.asarray(list(scaling_grid), dtype=float)
    if additive.size == 0 or scaling.size == 0:
        raise ValueError("sweep grids must be non-empty")
    if not (np.any(additive == 0.0) and np.any(scaling == 1.0)):
        raise ValueError("sweep grids must include the attack-free point "
                         "(additive 0, scaling factor 1)")
    cells = [(ia, is_) for ia in range(additive.size)
             for is_ in range(scaling.size)]
    dv = np.zeros((additive.size, scaling.size))
    df = np.zeros((additive.size, scaling.size))
    diverged = np.zeros((additive.size, scaling.size), dtype=bool)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(sweep_cell, config, float(additive[ia]),
                            float(scaling[is_])): (ia, is_)
                for ia, is_ in cells
            }
            for fut, (ia, is_) in futures.items():
                dv[ia, is_], df[ia, is_], diverged[ia, is_] = fut.result()
    else:
        for ia, is_ in cells:
            dv[ia, is_], df[ia, is_], diverged[ia, is_] = sweep_cell(
                config, float(additive[ia]), float(scaling[is_]))
    return SweepResult(additive=additive, scaling=scaling, dv=dv, df=df,
                       diverged=diverged)

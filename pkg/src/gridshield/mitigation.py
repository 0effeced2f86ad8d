"""Supervisory self-healing: isolate flagged agents, carry their demand on the
battery, black-start their controllers, and hand back seamlessly.

The supervisor runs on a fixed scan grid (integer step indices, so event
timing never depends on floating-point time accumulation).  For one flagged
agent the scan sequence is:

  flag confirmed -> breaker-open + status OFF + consensus removal
  + pickup delay -> battery feasibility check; if satisfiable:
                    inverter-disconnect, battery dispatch, breaker-close,
                    inverter reboot (fixed dead time)
  reboot done    -> controller state reset to the attack-free baseline
  next scan      -> if the state is back inside baseline bands: status ON,
                    inverter-connect, consensus restore, battery release

When the battery cannot carry the demand, the supervisor sheds the island's
non-critical load in fixed increments until the remainder is feasible, or
declares an unservable deficit if only critical load is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# Stable event vocabulary; golden logs and tests rely on these exact strings.
EVENT_KINDS = (
    "detector_flag",
    "breaker_open",
    "status_off",
    "consensus_remove",
    "inverter_disconnect",
    "bess_dispatch",
    "breaker_close",
    "inverter_reboot",
    "state_reset",
    "status_on",
    "inverter_connect",
    "consensus_restore",
    "bess_release",
    "load_shed",
    "load_restored",
    "unservable_deficit",
    "frequency_violation",
    "envelope_violation",
    "bess_curtailed",
    "divergence",
)

ON, OFF, RESTORING = "ON", "OFF", "RESTORING"
CONNECTED, DISCONNECTED, REBOOTING = "connected", "disconnected", "rebooting"


class BessConstraintError(AssertionError):
    pass


@dataclass
class BessState:
    """Battery limits, state of charge, and frequency-regulation status."""

    p_min: float               # discharge floor [W]
    p_max: float               # discharge ceiling [W]
    soc: float                 # fraction of capacity
    soc_min: float
    soc_max: float
    capacity_wh: float
    current_output: float = 0.0
    frequency_mode: str = "idle"        # "idle" | "regulating"
    omega: float = 2.0 * math.pi * 60.0 # regulated frequency [rad/s]
    omega_ref: float = 2.0 * math.pi * 60.0
    t_lim: float = 0.1
    limit_reached: bool = False

    def __post_init__(self):
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ValueError("need 0 <= soc_min < soc_max <= 1")
        if self.capacity_wh <= 0:
            raise ValueError("capacity must be > 0")
        self.assert_within_limits()

    def assert_within_limits(self) -> None:
        # Hard operating-envelope assertions; stripped under python -O.
        assert self.soc_min - 1e-12 <= self.soc <= self.soc_max + 1e-12, \
            BessConstraintError(f"SOC {self.soc} outside [{self.soc_min}, {self.soc_max}]")
        if self.current_output != 0.0:
            assert self.p_min - 1e-9 <= self.current_output <= self.p_max + 1e-9, \
                BessConstraintError(f"output {self.current_output} outside power limits")


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    reason: str = ""
    projected_soc: float = 0.0

    def __bool__(self) -> bool:
        return self.feasible


def check_bess_feasible(bess: BessState, demand: float, horizon: float) -> FeasibilityVerdict:
    """Can the battery supply `demand` watts for `horizon` seconds?

    Feasible when the demand sits inside the power limits and the projected
    state of charge after the horizon stays at or above the floor.
    """
    if demand < 0:
        raise ValueError("demand must be >= 0")
    projected = bess.soc - demand * horizon / (3600.0 * bess.capacity_wh)
    if not (bess.p_min <= demand <= bess.p_max):
        return FeasibilityVerdict(False, "power limits", projected)
    if projected < bess.soc_min:
        return FeasibilityVerdict(False, "soc floor", projected)
    return FeasibilityVerdict(True, "", projected)


def bess_step(bess: BessState, demand: float, dt: float) -> BessState:
    """Advance the state of charge under a (previously validated) dispatch.

    If the step would cross the SOC floor the output is curtailed so the
    floor is hit exactly and limit_reached is set; curtailment is an
    operational condition, not an error.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if demand < 0:
        raise ValueError("demand must be >= 0")
    assert demand == 0.0 or demand <= bess.p_max + 1e-9, \
        BessConstraintError("dispatch exceeds the validated power ceiling")
    d_soc = demand * dt / (3600.0 * bess.capacity_wh)
    if bess.soc - d_soc < bess.soc_min:
        available = bess.soc - bess.soc_min
        curtailed = available * 3600.0 * bess.capacity_wh / dt
        return replace(bess, soc=bess.soc_min, current_output=curtailed,
                       limit_reached=True)
    return replace(bess, soc=bess.soc - d_soc, current_output=demand)


def regulate_frequency(bess: BessState, omega_now: float, omega_ref: float,
                       t_since_pickup: float, t_lim: float,
                       dt: float | None = None, settle_band: float = 0.02):
    """First-order regulation of the supported island's frequency.

    With dt given, returns the frequency command one interval ahead under a
    tracking time constant of t_lim / 5 (so the deviation decays by e^-5 over
    the full settling budget); without dt, returns the asymptotic command
    omega_ref.  compliant is True while the budget has not elapsed or once
    the deviation is inside the settle band (relative to omega_ref).
    """
    if bess.frequency_mode != "regulating":
        raise ValueError("battery is not in frequency-regulating mode")
    tau = t_lim / 5.0
    if dt is None:
        omega_cmd = omega_ref
    else:
        omega_cmd = omega_ref + (omega_now - omega_ref) * math.exp(-dt / tau)
    compliant = (t_since_pickup < t_lim) or (
        abs(omega_now - omega_ref) <= settle_band * omega_ref
    )
    return omega_cmd, compliant


def compromised_state_step(x, u):
    """Discrete state recursion of an agent driven by attacked control input."""
    try:
        return [xi + ui for xi, ui in zip(x, u)]
    except TypeError:
        return x + u


# ----------------------------------------------------------------------------
# Load shedding

@dataclass(frozen=True)
class Load:
    load_id: int
    size_w: float
    criticality: int


@dataclass
class SheddingPlan:
    """Incremental shedding over a set of loads.

    Loads carrying the plan's critical weight are shed last, i.e. never by
    shed_load; everything else sheds in shed_fraction-of-load increments,
    lowest criticality first and lowest load id breaking ties.
    """

    loads: tuple                       # of Load
    shed_fraction: float = 0.1
    critical_weight: int | None = None # defaults to the max weight present
    shed_w: dict = field(default_factory=dict)  # load_id -> watts already shed

    def __post_init__(self):
        if not (0.0 < self.shed_fraction <= 1.0):
            raise ValueError("shed fraction must be in (0, 1]")
        if self.critical_weight is None:
            self.critical_weight = max((l.criticality for l in self.loads), default=0)
        for l in self.loads:
            self.shed_w.setdefault(l.load_id, 0.0)

    def total_shed(self) -> float:
        return sum(self.shed_w.values())

    def remaining_demand(self) -> float:
        return sum(l.size_w for l in self.loads) - self.total_shed()


@dataclass(frozen=True)
class ShedResult:
    plan: SheddingPlan
    commands: tuple        # of (load_id, watts) in application order
    unserved_w: float      # > 0 means an unservable deficit remains


def shed_load(plan: SheddingPlan, deficit: float) -> ShedResult:
    """Shed at least `deficit` watts of non-critical load.

    Sheds in shed_fraction increments, lowest criticality first (load id
    breaking ties), never touching loads at the plan's critical weight.  Any
    deficit left once all non-critical load is gone is returned as
    unserved_w, which the supervisor reports as an unservable-deficit event.
    """
    if deficit <= 0:
        raise ValueError("deficit must be > 0")
    commands = []
    remaining = deficit
    order = sorted(
        (l for l in plan.loads if l.criticality < plan.critical_weight),
        key=lambda l: (l.criticality, l.load_id),
    )
    for load in order:
        step = plan.shed_fraction * load.size_w
        while remaining > 1e-9 and plan.shed_w[load.load_id] < load.size_w - 1e-9:
            amount = min(step, load.size_w - plan.shed_w[load.load_id])
            plan.shed_w[load.load_id] += amount
            commands.append((load.load_id, amount))
            remaining -= amount
        if remaining <= 1e-9:
            break
    return ShedResult(plan, tuple(commands), max(remaining, 0.0))


# ----------------------------------------------------------------------------
# Agent status and the supervisor state machine

@dataclass
class AgentStatus:
    status: str = ON              # ON | OFF | RESTORING
    breaker_closed: bool = True
    inverter: str = CONNECTED     # connected | disconnected | rebooting
    bess_supported: bool = False

    def validate(self) -> None:
        if self.bess_supported and self.inverter not in (DISCONNECTED, REBOOTING):
            raise ValueError("battery support requires a disconnected/rebooting inverter")


@dataclass(frozen=True)
class Command:
    kind: str
    agent: int
    step: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown command kind {self.kind!r}")


class MscSupervisor:
    """Leader-side registry and the isolate/support/black-start state machine.

    All scheduling is in integer engine steps.  supervise_step is called on
    the scan grid with the latched per-agent detection verdicts and a
    state-in-bands predicate for restoring agents; it returns the commands the
    engine must apply, in order.
    """

    def __init__(self, n_agents: int, loads_w, criticalities,
                 pickup_delay_steps: int, reboot_steps: int,
                 horizon_s: float, shed_fraction: float = 0.1):
        self.n_agents = n_agents
        self.loads_w = list(loads_w)
        self.criticalities = list(criticalities)
        self.agents = [AgentStatus() for _ in range(n_agents)]
        self.pickup_delay_steps = pickup_delay_steps
        self.reboot_steps = reboot_steps
        self.horizon_s = horizon_s
        self.shed_fraction = shed_fraction
        self.critical_weight = max(criticalities) if criticalities else 0
        self.pickup_due: dict = {}     # agent -> step when support may start
        self.reboot_done: dict = {}    # agent -> step when black-start ends
        self.reset_applied: set = set()
        self.supported_demand: dict = {}  # agent -> watts carried by the BESS
        self.shed_plans: dict = {}     # agent -> SheddingPlan for its island
        self.unservable: set = set()

    def mark_initially_off(self, agent: int) -> None:
        st = self.agents[agent]
        st.status = OFF
        st.breaker_closed = False
        st.inverter = DISCONNECTED

    def committed_output(self) -> float:
        return sum(self.supported_demand.values())

    def island_demand(self, agent: int) -> float:
        plan = self.shed_plans.get(agent)
        if plan is not None:
            return plan.remaining_demand()
        return self.loads_w[agent]

    def supervise_step(self, bess: BessState, verdicts, step: int,
                       state_in_bands) -> list:
        """One supervisory scan; verdicts[i].flagged marks agent i anomalous."""
        commands: list = []

        # Newly flagged agents: isolate immediately.
        for i in range(self.n_agents):
            st = self.agents[i]
            if st.status == ON and verdicts[i] is not None and verdicts[i].flagged:
                commands.append(Command("detector_flag", i, step, {
                    "features": list(verdicts[i].triggered_features),
                    "trigger_time": verdicts[i].trigger_time,
                }))
                commands.append(Command("breaker_open", i, step))
                st.breaker_closed = False
                commands.append(Command("status_off", i, step))
                st.status = OFF
                commands.append(Command("consensus_remove", i, step))
                self.pickup_due[i] = step + self.pickup_delay_steps

        # Due support requests, most critical island first.
        due = [i for i, when in self.pickup_due.items()
               if when <= step and self.agents[i].status == OFF
               and i not in self.unservable]
        due.sort(key=lambda i: (-self.criticalities[i], i))
        for i in due:
            commands.extend(self._attempt_support(bess, i, step))

        # Black-start completion and handover.
        for i in range(self.n_agents):
            st = self.agents[i]
            if st.status != RESTORING:
                continue
            if i not in self.reset_applied:
                if self.reboot_done.get(i, 0) <= step:
                    commands.append(Command("state_reset", i, step))
                    self.reset_applied.add(i)
                continue
            if state_in_bands(i):
                commands.append(Command("status_on", i, step))
                st.status = ON
                st.inverter = CONNECTED
                st.bess_supported = False
                commands.append(Command("inverter_connect", i, step))
                commands.append(Command("consensus_restore", i, step))
                released = self.supported_demand.pop(i, 0.0)
                commands.append(Command("bess_release", i, step,
                                        {"released_w": released}))
                plan = self.shed_plans.pop(i, None)
                if plan is not None and plan.total_shed() > 0:
                    commands.append(Command("load_restored", i, step,
                                            {"restored_w": plan.total_shed()}))
                self.pickup_due.pop(i, None)
                self.reboot_done.pop(i, None)
                self.reset_applied.discard(i)
        return commands

    def _attempt_support(self, bess: BessState, i: int, step: int) -> list:
        commands: list = []
        st = self.agents[i]
        demand = self.island_demand(i)
        total = self.committed_output() + demand
        verdict = check_bess_feasible(bess, total, self.horizon_s)
        if not verdict:
            deficit = self._required_reduction(bess, total)
            plan = self.shed_plans.get(i)
            if plan is None:
                plan = SheddingPlan(
                    loads=(Load(i, self.loads_w[i], self.criticalities[i]),),
                    shed_fraction=self.shed_fraction,
                    critical_weight=self.critical_weight,
                )
                self.shed_plans[i] = plan
            result = shed_load(plan, deficit)
            for load_id, amount in result.commands:
                commands.append(Command("load_shed", i, step,
                                        {"load": load_id, "shed_w": amount}))
            if result.unserved_w > 0:
                commands.append(Command("unservable_deficit", i, step,
                                        {"remaining_w": result.unserved_w}))
                self.unservable.add(i)
                return commands
            demand = self.island_demand(i)
            total = self.committed_output() + demand
            verdict = check_bess_feasible(bess, total, self.horizon_s)
            if not verdict:
                commands.append(Command("unservable_deficit", i, step,
                                        {"remaining_w": total - bess.p_max}))
                self.unservable.add(i)
                return commands
        commands.append(Command("inverter_disconnect", i, step))
        st.inverter = DISCONNECTED
        commands.append(Command("bess_dispatch", i, step, {"demand_w": demand}))
        self.supported_demand[i] = demand
        st.bess_supported = True
        commands.append(Command("breaker_close", i, step))
        st.breaker_closed = True
        commands.append(Command("inverter_reboot", i, step))
        st.inverter = REBOOTING
        st.status = RESTORING
        self.reboot_done[i] = step + self.reboot_steps
        self.pickup_due.pop(i, None)
        st.validate()
        return commands

    def _required_reduction(self, bess: BessState, total: float) -> float:
        """Watts of shedding needed to make `total` dispatch feasible."""
        by_power = total - bess.p_max
        budget = (bess.soc - bess.soc_min) * 3600.0 * bess.capacity_wh / self.horizon_s
        by_soc = total - budget
        return max(by_power, by_soc, 0.0)

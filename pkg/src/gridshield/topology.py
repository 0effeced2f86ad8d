"""Communication graph, benchmark network parameters, and scenario files.

The cyber layer is an undirected graph over the DG agents: agents exchange
data only with adjacent agents, while the supervisory controller (MSC) talks
to every agent over dedicated always-on links that are not part of the
adjacency matrix and are not attackable.  The physical layer is the Canadian
urban benchmark feeder: a 120 kV / 12.5 kV substation, one aggregated 2 MW
load per DG bus, a 2.75 MVar capacitor bank and a 1 MWh battery at the PCC.

Scenario files are INI text (UTF-8) with sections [topology], [graph],
[agents], [attacks], [detection], [bess] and [sim]; see the bundled
``scenarios/*.scn`` files and the key table in the README.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace

from gridshield.attack import AttackSpec

TWO_PI = 2.0 * math.pi

# Channels an attack can target.  "p"/"q" are the power measurements feeding
# the agent's own droop loop (and its neighbor reports), "ws"/"vs" are the
# frequency/voltage components of the modulation control input, "mod" hits
# both modulation components at once (additive magnitudes in pu of nominal).
CHANNELS = ("p", "q", "ws", "vs", "mod")


class ScenarioError(ValueError):
    """Raised for malformed or semantically invalid scenario files."""


class InvalidEdgeError(ValueError):
    """Raised by build_graph for self-loops or out-of-range node ids."""


@dataclass(frozen=True)
class CyberGraph:
    """Undirected agent-to-agent communication topology."""

    node_count: int
    edges: frozenset  # of (i, j) tuples with i < j
    adjacency: tuple  # row-major tuple of tuples, entries 0/1

    def neighbors(self, i: int) -> set:
        return {j for j in range(self.node_count) if self.adjacency[i][j]}

    def adjacency_list(self) -> list:
        return [list(row) for row in self.adjacency]

    def is_connected(self) -> bool:
        """True when every node is reachable from node 0 (n=1 counts)."""
        if self.node_count == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in self.neighbors(i):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.node_count


def build_graph(edges, n: int) -> CyberGraph:
    """Build the cyber graph from an (i, j) pair list over nodes [0, n)."""
    adj = [[0] * n for _ in range(n)]
    canon = set()
    for i, j in edges:
        if i == j:
            raise InvalidEdgeError(f"self-loop ({i},{j}) is not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidEdgeError(f"edge ({i},{j}) outside node range [0,{n})")
        a, b = (i, j) if i < j else (j, i)
        canon.add((a, b))
        adj[a][b] = adj[b][a] = 1
    return CyberGraph(
        node_count=n,
        edges=frozenset(canon),
        adjacency=tuple(tuple(row) for row in adj),
    )


@dataclass(frozen=True)
class BenchmarkTopology:
    """Physical benchmark constants; per-line lumped impedances in pu."""

    substation_primary_kv: float = 120.0
    feeder_kv: float = 12.5
    dg_lv_kv: float = 0.208
    capacitor_bank_mvar: float = 2.75
    per_bus_load_mw: float = 2.0
    bess_capacity_mwh: float = 1.0
    line_z_pu: tuple = ()      # per-agent |Z| (pu on the agent base)
    line_theta_rad: tuple = () # per-agent impedance angle, (0, 90] degrees
    pcc_bus_id: int = 0

    def validate(self, n_agents: int) -> None:
        for name in ("substation_primary_kv", "feeder_kv", "dg_lv_kv",
                     "capacitor_bank_mvar", "per_bus_load_mw",
                     "bess_capacity_mwh"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"[topology] {name} must be > 0")
        if len(self.line_z_pu) != n_agents or len(self.line_theta_rad) != n_agents:
            raise ScenarioError("[topology] one line impedance entry per agent required")
        for i, (z, th) in enumerate(zip(self.line_z_pu, self.line_theta_rad)):
            if z <= 0:
                raise ScenarioError(f"[topology] line {i}: impedance must be > 0")
            if not (0.0 < th <= math.pi / 2):
                raise ScenarioError(
                    f"[topology] line {i}: impedance angle must be in (0, 90] degrees"
                )
        # Buses: 0 is the PCC (hosts the BESS), agents sit on buses 1..n.
        if not (0 <= self.pcc_bus_id <= n_agents):
            raise ScenarioError("[topology] pcc_bus_id is not a valid bus id")
        if self.pcc_bus_id != 0:
            raise ScenarioError("[topology] the BESS bus (pcc_bus_id) must be bus 0")


@dataclass(frozen=True)
class AgentParams:
    """Droop, filter and consensus parameters of one DG agent."""

    omega0: float            # no-load angular frequency [rad/s]
    v0: float = 1.0          # no-load voltage [pu]
    k_p: float = 1.0e-6      # P-omega droop [rad/s per W]
    k_q: float = 2.5e-8      # Q-V droop [pu per Var]
    t_filter: float = 1.0e-3 # omega/V/current tracking time constant [s]
    t_power: float = 5.0e-3  # P_G/Q_G low-pass time constant [s]
    s_base: float = 2.0e6    # per-agent power base [VA]
    v_sat: float = 4.0       # modulation command ceiling [pu]
    h_gain: float = 5.0      # consensus gain
    leader_link: int = 1     # b_i: 1 when the MSC feeds this agent directly
    load_w: float = 2.0e6    # local bus demand [W]
    criticality: int = 1     # shedding priority; max value sheds last
    secondary_init: float | None = None  # None = start at the leader reference
    initial_off: bool = False

    def validate(self, i: int) -> None:
        if self.k_p <= 0 or self.k_q <= 0 or self.omega0 <= 0 or self.v0 <= 0:
            raise ScenarioError(f"[agents] agent{i}: droop parameters must be > 0")
        if self.t_filter <= 0 or self.t_power <= 0 or self.s_base <= 0:
            raise ScenarioError(f"[agents] agent{i}: time constants and base must be > 0")
        if self.leader_link not in (0, 1):
            raise ScenarioError(f"[agents] agent{i}: leader_link must be 0 or 1")
        if self.load_w < 0:
            raise ScenarioError(f"[agents] agent{i}: load must be >= 0")
        if self.h_gain <= 0:
            raise ScenarioError(f"[agents] agent{i}: h_gain must be > 0")


@dataclass(frozen=True)
class DetectionConfig:
    enabled: bool = True
    margin_factor: float = 6.0
    floor: float = 1.0e-3        # band floor [pu of each channel's scale]
    persistence: int = 20        # consecutive out-of-band samples to flag
    thd_ceiling: float = 0.05
    settle_band_pct: float = 0.02
    warmup: float = 0.05         # in-run calibration window [s]
    v_limits: tuple = (0.9, 1.1)       # absolute voltage limits [pu]
    f_limits: tuple = (59.5, 60.5)     # absolute frequency limits [Hz]
    noise_sigma_pu: float = 1.0e-3     # telemetry noise per channel [pu]

    def validate(self) -> None:
        if self.margin_factor <= 0 or self.floor < 0:
            raise ScenarioError("[detection] margin_factor > 0 and floor >= 0 required")
        if self.persistence < 1:
            raise ScenarioError("[detection] persistence must be >= 1")
        if self.warmup < 0 or self.noise_sigma_pu < 0:
            raise ScenarioError("[detection] warmup and noise_sigma_pu must be >= 0")
        if not (self.v_limits[0] < self.v_limits[1]):
            raise ScenarioError("[detection] v_limits must be increasing")
        if not (self.f_limits[0] < self.f_limits[1]):
            raise ScenarioError("[detection] f_limits must be increasing")


@dataclass(frozen=True)
class BessConfig:
    p_min_w: float = 0.0
    p_max_w: float = 2.5e6
    soc_init: float = 0.9
    soc_min: float = 0.2
    soc_max: float = 0.95
    t_lim: float = 0.1           # frequency settling constraint [s]
    omega_ref: float = TWO_PI * 60.0

    def validate(self) -> None:
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ScenarioError("[bess] need 0 <= soc_min < soc_max <= 1")
        if not (self.soc_min <= self.soc_init <= self.soc_max):
            raise ScenarioError("[bess] soc_init outside [soc_min, soc_max]")
        if self.p_min_w < 0 or self.p_max_w < self.p_min_w:
            raise ScenarioError("[bess] need 0 <= p_min <= p_max")
        if self.t_lim <= 0:
            raise ScenarioError("[bess] t_lim must be > 0")


@dataclass(frozen=True)
class SimConfig:
    duration: float = 0.5
    timestep: float = 1.0e-4
    seed: int = 0
    scan_interval: float = 0.01    # MSC supervisory scan period [s]
    record_decimation: int = 10    # steps per recorded row
    bess_pickup_delay: float = 0.02
    reboot_time: float = 0.08
    handover_perturbation: float = 0.02  # V kick at BESS release [pu]
    waveform_rate: float = 20000.0       # waveform synthesis rate [Hz]
    clip_pu: float = 1.1                 # hardware waveform ceiling [pu]

    def validate(self) -> None:
        if self.timestep <= 0:
            raise ScenarioError("[sim] timestep must be > 0")
        if self.duration < self.timestep:
            raise ScenarioError("[sim] duration must be >= timestep")
        if self.record_decimation < 1:
            raise ScenarioError("[sim] record_decimation must be >= 1")
        if self.scan_interval < self.timestep:
            raise ScenarioError("[sim] scan_interval must be >= timestep")
        if self.waveform_rate <= 0 or self.clip_pu <= 0:
            raise ScenarioError("[sim] waveform_rate and clip_pu must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: BenchmarkTopology
    graph: CyberGraph
    agents: tuple                 # of AgentParams
    attacks: tuple                # of AttackSpec
    detection: DetectionConfig
    bess: BessConfig
    sim: SimConfig
    leader_x0: float = 0.0        # consensus leader reference (rad/s correction)

    @property
    def n_agents(self) -> int:
        return self.graph.node_count

    def f_nominal(self) -> float:
        return self.agents[0].omega0 / TWO_PI

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, sim=replace(self.sim, seed=seed))

    def with_attacks(self, attacks) -> "ScenarioConfig":
        return replace(self, attacks=tuple(attacks))

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ScenarioError("[graph] at least one agent required")
        self.topology.validate(self.n_agents)
        for i, a in enumerate(self.agents):
            a.validate(i)
        for k, spec in enumerate(self.attacks):
            spec.validate()
            if not (0 <= spec.agent < self.n_agents):
                raise ScenarioError(
                    f"[attacks] attack{k + 1}.agent {spec.agent} is not a known agent"
                )
            if spec.channel not in CHANNELS:
                raise ScenarioError(
                    f"[attacks] attack{k + 1}.channel {spec.channel!r} "
                    f"is not one of {CHANNELS}"
                )
        self.detection.validate()
        self.bess.validate()
        self.sim.validate()


# ----------------------------------------------------------------------------
# Scenario file parsing

_SECTIONS = ("topology", "graph", "agents", "attacks", "detection", "bess", "sim")


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        if default is _REQUIRED:
            raise ScenarioError(f"[{section}] missing required key {key!r}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ScenarioError(f"[{section}] {key} = {raw!r}: {exc}") from exc


_REQUIRED = object()


def _as_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _parse_edges(raw: str) -> list:
    edges = []
    raw = raw.strip()
    if not raw:
        return edges
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = part.split("-")
            edges.append((int(a), int(b)))
        except ValueError as exc:
            raise ScenarioError(f"[graph] bad edge {part!r}, expected i-j") from exc
    return edges


def _parse_window(raw: str) -> tuple:
    try:
        a, b = raw.split(":")
        return float(a), float(b)
    except ValueError as exc:
        raise ScenarioError(f"bad window {raw!r}, expected t_a:t_a'") from exc


def _agent_overrides(cp, n: int) -> dict:
    """Collect agentK.key = value entries from [agents]."""
    per_agent = {i: {} for i in range(n)}
    if not cp.has_section("agents"):
        return per_agent
    for key, value in cp.items("agents"):
        if "." not in key:
            continue
        prefix, field_name = key.split(".", 1)
        if not prefix.startswith("agent"):
            raise ScenarioError(f"[agents] unknown prefixed key {key!r}")
        try:
            idx = int(prefix[5:])
        except ValueError as exc:
            raise ScenarioError(f"[agents] bad agent index in {key!r}") from exc
        if idx not in per_agent:
            raise ScenarioError(f"[agents] {key!r} references unknown agent {idx}")
        per_agent[idx][field_name] = value
    return per_agent


def _parse_attacks(cp) -> list:
    specs = []
    if not cp.has_section("attacks"):
        return specs
    groups: dict = {}
    for key, value in cp.items("attacks"):
        if "." not in key:
            raise ScenarioError(f"[attacks] expected attackN.field keys, got {key!r}")
        prefix, field_name = key.split(".", 1)
        groups.setdefault(prefix, {})[field_name] = value
    for prefix in sorted(groups):
        g = groups[prefix]
        for required in ("kind", "magnitude", "agent", "channel", "window"):
            if required not in g:
                raise ScenarioError(f"[attacks] {prefix}.{required} is missing")
        window = _parse_window(g["window"])
        schedule = g.get("schedule", "one_shot")
        period = float(g["period"]) if "period" in g else None
        try:
            spec = AttackSpec(
                kind=g["kind"],
                magnitude=float(g["magnitude"]),
                agent=int(g["agent"]),
                channel=g["channel"],
                window=window,
                schedule=schedule,
                period=period,
            )
        except ValueError as exc:
            raise ScenarioError(f"[attacks] {prefix}: {exc}") from exc
        specs.append(spec)
    return specs


def load_scenario(path: str) -> ScenarioConfig:
    """Load and validate a scenario file.

    Raises ScenarioError with the offending section/key for semantic problems
    and with the parser's line information for syntax problems.  The
    GRIDSHIELD_SEED environment variable, when set, overrides [sim] seed.
    """
    if not os.path.exists(path):
        raise ScenarioError(f"scenario file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except configparser.Error as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from exc
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ScenarioError(f"unknown section [{section}]")
    return config_from_parser(cp, name=os.path.splitext(os.path.basename(path))[0])


def config_from_parser(cp, name: str = "scenario") -> ScenarioConfig:
    n = _get(cp, "graph", "agents", int, _REQUIRED)
    edges = _parse_edges(_get(cp, "graph", "edges", str, ""))
    try:
        graph = build_graph(edges, n)
    except InvalidEdgeError as exc:
        raise ScenarioError(f"[graph] {exc}") from exc

    z_default = _get(cp, "topology", "line_z_pu", float, 0.1)
    theta_default_deg = _get(cp, "topology", "line_theta_deg", float, 90.0)
    topo = BenchmarkTopology(
        substation_primary_kv=_get(cp, "topology", "substation_primary_kv", float, 120.0),
        feeder_kv=_get(cp, "topology", "feeder_kv", float, 12.5),
        dg_lv_kv=_get(cp, "topology", "dg_lv_kv", float, 0.208),
        capacitor_bank_mvar=_get(cp, "topology", "capacitor_bank_mvar", float, 2.75),
        per_bus_load_mw=_get(cp, "topology", "per_bus_load_mw", float, 2.0),
        bess_capacity_mwh=_get(cp, "topology", "bess_capacity_mwh", float, 1.0),
        line_z_pu=tuple([z_default] * n),
        line_theta_rad=tuple([math.radians(theta_default_deg)] * n),
        pcc_bus_id=_get(cp, "topology", "pcc_bus_id", int, 0),
    )

    f_nom = _get(cp, "agents", "omega0_hz", float, 60.0)
    base = AgentParams(
        omega0=TWO_PI * f_nom,
        v0=_get(cp, "agents", "v0_pu", float, 1.0),
        k_p=_get(cp, "agents", "k_p", float, 1.0e-6),
        k_q=_get(cp, "agents", "k_q", float, 2.5e-8),
        t_filter=_get(cp, "agents", "t_filter", float, 1.0e-3),
        t_power=_get(cp, "agents", "t_power", float, 5.0e-3),
        s_base=_get(cp, "agents", "s_base_mva", float, 2.0) * 1e6,
        v_sat=_get(cp, "agents", "v_sat_pu", float, 4.0),
        h_gain=_get(cp, "agents", "h_gain", float, 5.0),
        load_w=_get(cp, "topology", "per_bus_load_mw", float, 2.0) * 1e6,
    )
    per_agent = _agent_overrides(cp, n)
    agents = []
    for i in range(n):
        a = base
        ov = per_agent[i]
        kwargs = {}
        for fname, conv in (
            ("k_p", float), ("k_q", float), ("load_mw", float),
            ("criticality", int), ("leader_link", int), ("h_gain", float),
            ("secondary_init", float), ("initial_off", _as_bool),
        ):
            if fname in ov:
                key = "load_w" if fname == "load_mw" else fname
                value = conv(ov[fname])
                if fname == "load_mw":
                    value *= 1e6
                kwargs[key] = value
        if kwargs:
            a = replace(a, **kwargs)
        agents.append(a)

    x0_raw = _get(cp, "agents", "leader_x0", str, "auto")
    if x0_raw.strip().lower() == "auto":
        # Dispatch reference that restores nominal frequency at the local load.
        leader_x0 = agents[0].k_p * agents[0].load_w
    else:
        leader_x0 = float(x0_raw)

    detection = DetectionConfig(
        enabled=_get(cp, "detection", "enabled", _as_bool, True),
        margin_factor=_get(cp, "detection", "margin_factor", float, 6.0),
        floor=_get(cp, "detection", "floor", float, 1.0e-3),
        persistence=_get(cp, "detection", "persistence", int, 20),
        thd_ceiling=_get(cp, "detection", "thd_ceiling", float, 0.05),
        settle_band_pct=_get(cp, "detection", "settle_band_pct", float, 0.02),
        warmup=_get(cp, "detection", "warmup", float, 0.05),
        v_limits=(
            _get(cp, "detection", "v_min_pu", float, 0.9),
            _get(cp, "detection", "v_max_pu", float, 1.1),
        ),
        f_limits=(
            _get(cp, "detection", "f_min_hz", float, f_nom - 0.5),
            _get(cp, "detection", "f_max_hz", float, f_nom + 0.5),
        ),
        noise_sigma_pu=_get(cp, "detection", "noise_sigma_pu", float, 1.0e-3),
    )

    bess = BessConfig(
        p_min_w=_get(cp, "bess", "p_min_mw", float, 0.0) * 1e6,
        p_max_w=_get(cp, "bess", "p_max_mw", float, 2.5) * 1e6,
        soc_init=_get(cp, "bess", "soc_init", float, 0.9),
        soc_min=_get(cp, "bess", "soc_min", float, 0.2),
        soc_max=_get(cp, "bess", "soc_max", float, 0.95),
        t_lim=_get(cp, "bess", "t_lim", float, 0.1),
        omega_ref=TWO_PI * _get(cp, "bess", "f_ref_hz", float, f_nom),
    )

    seed = _get(cp, "sim", "seed", int, 0)
    env_seed = os.environ.get("GRIDSHIELD_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ScenarioError(f"GRIDSHIELD_SEED={env_seed!r} is not an integer") from exc

    sim = SimConfig(
        duration=_get(cp, "sim", "duration", float, 0.5),
        timestep=_get(cp, "sim", "timestep", float, 1.0e-4),
        seed=seed,
        scan_interval=_get(cp, "sim", "scan_interval", float, 0.01),
        record_decimation=_get(cp, "sim", "record_decimation", int, 10),
        bess_pickup_delay=_get(cp, "sim", "bess_pickup_delay", float, 0.02),
        reboot_time=_get(cp, "sim", "reboot_time", float, 0.08),
        handover_perturbation=_get(cp, "sim", "handover_perturbation", float, 0.02),
        waveform_rate=_get(cp, "sim", "waveform_rate", float, 20000.0),
        clip_pu=_get(cp, "sim", "clip_pu", float, 1.1),
    )

    config = ScenarioConfig(
        name=name,
        topology=topo,
        graph=graph,
        agents=tuple(agents),
        attacks=tuple(_parse_attacks(cp)),
        detection=detection,
        bess=bess,
        sim=sim,
        leader_x0=leader_x0,
    )
    config.validate()
    return config


def apply_overrides(path: str, overrides) -> ScenarioConfig:
    """Load a scenario and apply section.key=value override strings."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh, source=path)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form section.key=value")
        key_path, value = item.split("=", 1)
        if "." not in key_path:
            raise ScenarioError(f"override {item!r} is missing the section prefix")
        section, key = key_path.split(".", 1)
        if section not in _SECTIONS:
            raise ScenarioError(f"override {item!r}: unknown section [{section}]")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)
    return config_from_parser(cp, name=os.path.splitext(os.path.basename(path))[0])


def bundled_scenario(name: str) -> str:
    """Absolute path of a scenario shipped with the package."""
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "scenarios", name if name.endswith(".scn") else name + ".scn")
    if not os.path.exists(path):
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return path

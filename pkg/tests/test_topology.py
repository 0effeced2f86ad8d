import math

import pytest

from gridshield.topology import (InvalidEdgeError, ScenarioError,
                                 apply_overrides, build_graph,
                                 bundled_scenario, load_scenario)


def test_path_graph_neighbors():
    g = build_graph({(0, 1), (1, 2), (2, 3)}, 4)
    assert g.neighbors(1) == {0, 2}
    assert g.neighbors(0) == {1}
    assert g.is_connected()


def test_empty_graph_all_zero():
    g = build_graph(set(), 3)
    assert all(all(v == 0 for v in row) for row in g.adjacency)
    assert not g.is_connected()


def test_duplicate_edge_direction_collapses():
    g = build_graph([(0, 1), (1, 0)], 2)
    assert g.adjacency[0][1] == 1 and g.adjacency[1][0] == 1
    assert g.edges == frozenset({(0, 1)})


def test_adjacency_symmetric_zero_diagonal():
    g = build_graph([(0, 2), (1, 2), (3, 4)], 5)
    for i in range(5):
        assert g.adjacency[i][i] == 0
        for j in range(5):
            assert g.adjacency[i][j] == g.adjacency[j][i]


def test_edge_roundtrip():
    edges = {(0, 3), (1, 2), (2, 3), (0, 4)}
    g = build_graph(edges, 5)
    recovered = {(i, j) for i in range(5) for j in range(i + 1, 5)
                 if g.adjacency[i][j]}
    assert recovered == edges


def test_self_loop_rejected():
    with pytest.raises(InvalidEdgeError):
        build_graph([(1, 1)], 3)


def test_out_of_range_rejected():
    with pytest.raises(InvalidEdgeError):
        build_graph([(0, 7)], 3)


def test_bundled_benchmark_loads():
    cfg = load_scenario(bundled_scenario("canadian_urban"))
    assert cfg.n_agents == 4
    assert cfg.graph.is_connected()
    assert all(a.load_w == 2.0e6 for a in cfg.agents)
    assert cfg.topology.bess_capacity_mwh == 1.0
    assert cfg.topology.pcc_bus_id == 0
    assert all(a.leader_link == 1 for a in cfg.agents)  # MSC reaches everyone
    assert cfg.leader_x0 == pytest.approx(2.0)
    assert cfg.sim.seed == 0  # documented default


def test_zero_timestep_rejected(tmp_path):
    src = open(bundled_scenario("canadian_urban")).read()
    bad = tmp_path / "bad.scn"
    bad.write_text(src.replace("timestep = 1.0e-4", "timestep = 0"))
    with pytest.raises(ScenarioError, match="timestep"):
        load_scenario(str(bad))


def test_seed_defaults_to_zero(tmp_path, monkeypatch):
    monkeypatch.delenv("GRIDSHIELD_SEED", raising=False)
    src = open(bundled_scenario("canadian_urban")).read()
    noseed = tmp_path / "noseed.scn"
    noseed.write_text(src.replace("seed = 0\n", ""))
    assert load_scenario(str(noseed)).sim.seed == 0


def test_env_seed_override(monkeypatch):
    monkeypatch.setenv("GRIDSHIELD_SEED", "77")
    cfg = load_scenario(bundled_scenario("canadian_urban"))
    assert cfg.sim.seed == 77


def test_attack_unknown_agent_rejected(tmp_path):
    src = open(bundled_scenario("attack_scaling")).read()
    bad = tmp_path / "bad.scn"
    bad.write_text(src.replace("attack1.agent = 1", "attack1.agent = 9"))
    with pytest.raises(ScenarioError, match=r"attack1\.agent"):
        load_scenario(str(bad))


def test_unknown_section_rejected(tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text(open(bundled_scenario("canadian_urban")).read()
                   + "\n[market]\nprice = 3\n")
    with pytest.raises(ScenarioError, match="market"):
        load_scenario(str(bad))


def test_missing_file():
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario("/nonexistent/file.scn")


def test_overrides_change_values():
    cfg = apply_overrides(bundled_scenario("canadian_urban"),
                          ["sim.duration=0.001", "agents.k_p=2e-6"])
    assert cfg.sim.duration == 0.001
    assert cfg.agents[0].k_p == 2e-6


def test_override_bad_shape():
    with pytest.raises(ScenarioError):
        apply_overrides(bundled_scenario("canadian_urban"), ["nodots"])
    with pytest.raises(ScenarioError):
        apply_overrides(bundled_scenario("canadian_urban"), ["bogus.key=1"])


def test_line_angle_validated(tmp_path):
    src = open(bundled_scenario("canadian_urban")).read()
    bad = tmp_path / "bad.scn"
    bad.write_text(src.replace("line_theta_deg = 90.0", "line_theta_deg = 120.0"))
    with pytest.raises(ScenarioError, match="angle"):
        load_scenario(str(bad))
    bad.write_text(src.replace("line_theta_deg = 90.0", "line_theta_deg = 0.0"))
    with pytest.raises(ScenarioError, match="angle"):
        load_scenario(str(bad))


def test_theta_stored_in_radians():
    cfg = load_scenario(bundled_scenario("canadian_urban"))
    assert cfg.topology.line_theta_rad[0] == pytest.approx(math.pi / 2)

import math
from fractions import Fraction

import numpy as np
import pytest

from gridshield.mitigation import (CONNECTED, DISCONNECTED, OFF, ON,
                                   REBOOTING, RESTORING, AgentStatus,
                                   BessState, Load, MscSupervisor,
                                   SheddingPlan, bess_step,
                                   check_bess_feasible,
                                   compromised_state_step, regulate_frequency,
                                   shed_load)


def bess(soc=0.9, p_max=2.5e6, soc_min=0.2, capacity_wh=1.0e6, **kw):
    return BessState(p_min=0.0, p_max=p_max, soc=soc, soc_min=soc_min,
                     soc_max=0.95, capacity_wh=capacity_wh, **kw)


class TestFeasibility:
    def test_benchmark_case(self):
        v = check_bess_feasible(bess(), demand=2e6, horizon=0.2)
        assert v.feasible
        # projected SOC drop: 2e6 * 0.2 / 3600 / 1e6
        assert (0.9 - v.projected_soc) == pytest.approx(1.1111111e-4, rel=1e-6)

    def test_power_ceiling(self):
        assert not check_bess_feasible(bess(), demand=3e6, horizon=0.1)

    def test_zero_demand_always_ok(self):
        for soc in (0.2, 0.5, 0.95):
            assert check_bess_feasible(bess(soc=soc), 0.0, horizon=100.0)

    def test_soc_floor(self):
        v = check_bess_feasible(bess(soc=0.2000001), demand=2e6, horizon=10.0)
        assert not v.feasible and v.reason == "soc floor"

    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError):
            check_bess_feasible(bess(), -1.0, 1.0)


class TestBessStep:
    def test_zero_demand_keeps_soc(self):
        b = bess_step(bess(), 0.0, 1.0)
        assert b.soc == 0.9 and b.current_output == 0.0

    def test_soc_arithmetic_oracle(self):
        b = bess_step(bess(), 2e6, 1.0)
        # 0.9 - 2e6*1/(3600*1e6), exact rational oracle
        want = float(Fraction(9, 10) - Fraction(2e6) / (3600 * 10**6))
        assert b.soc == pytest.approx(want, rel=1e-12)
        assert b.soc == pytest.approx(0.8994444444, rel=1e-9)

    def test_depletion_time_oracle(self):
        # 2 MW from soc 1.0->0.2 of 1 MWh: 0.8 MWh / 2 MW = 24 min.
        b = BessState(p_min=0.0, p_max=2.5e6, soc=0.95, soc_min=0.2,
                      soc_max=0.95, capacity_wh=1.0e6)
        t, dt = 0.0, 1.0
        while not b.limit_reached:
            b = bess_step(b, 2e6, dt)
            t += dt
        want = (0.95 - 0.2) * 1.0e6 / 2e6 * 3600.0
        assert t == pytest.approx(want, abs=1.0)

    def test_curtailment_at_floor(self):
        b = bess(soc=0.2 + 1e-7)
        b2 = bess_step(b, 2e6, 1.0)
        assert b2.limit_reached
        assert b2.soc == pytest.approx(0.2)
        assert 0.0 < b2.current_output < 2e6

    def test_randomized_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            soc = rng.uniform(0.3, 0.95)
            cap = rng.uniform(1e5, 5e6)
            demand = rng.uniform(0.0, 2.5e6)
            dt = rng.uniform(1e-4, 10.0)
            b = BessState(p_min=0.0, p_max=2.5e6, soc=soc, soc_min=0.2,
                          soc_max=0.95, capacity_wh=cap)
            got = bess_step(b, demand, dt)
            drop = Fraction(repr(demand)) * Fraction(repr(dt)) \
                / (3600 * Fraction(repr(cap)))
            want = Fraction(repr(soc)) - drop
            if float(want) >= 0.2:
                assert got.soc == pytest.approx(float(want), rel=1e-9, abs=1e-15)
            else:
                assert got.limit_reached and got.soc == pytest.approx(0.2)

    def test_bounds_asserted(self):
        with pytest.raises(AssertionError):
            bess_step(bess(), 99e6, 1.0)

    def test_invariant_violations_rejected(self):
        with pytest.raises(ValueError):
            BessState(p_min=0.0, p_max=1.0, soc=0.5, soc_min=0.8,
                      soc_max=0.3, capacity_wh=1.0)


class TestRegulateFrequency:
    w_ref = 2 * math.pi * 60

    def regulating(self, omega):
        return bess(frequency_mode="regulating", omega=omega,
                    omega_ref=self.w_ref)

    def test_fixed_point(self):
        b = self.regulating(self.w_ref)
        cmd, ok = regulate_frequency(b, self.w_ref, self.w_ref, 0.0, 0.1)
        assert ok and cmd == self.w_ref

    def test_exponential_decay_oracle(self):
        # From a 1% deviation, the tracker reaches e^-5 of it at t_lim.
        t_lim, dt = 0.1, 1e-3
        omega = self.w_ref * 1.01
        b = self.regulating(omega)
        t = 0.0
        while t < t_lim - 1e-12:
            omega, _ = regulate_frequency(b, omega, self.w_ref, t, t_lim, dt=dt)
            t += dt
        dev = abs(omega - self.w_ref) / self.w_ref
        assert dev == pytest.approx(0.01 * math.exp(-5.0), rel=1e-6)
        assert dev < 0.02   # well inside the settle band before t_lim

    def test_noncompliant_past_budget(self):
        b = self.regulating(self.w_ref * 1.1)
        _, ok = regulate_frequency(b, self.w_ref * 1.1, self.w_ref, 0.2, 0.1)
        assert not ok

    def test_requires_regulating_mode(self):
        with pytest.raises(ValueError):
            regulate_frequency(bess(), 1.0, 1.0, 0.0, 0.1)


class TestCompromisedStateStep:
    def test_zero_input(self):
        assert compromised_state_step(1.5, 0.0) == 1.5

    def test_forced(self):
        assert compromised_state_step(1.0, -0.2) == pytest.approx(0.8)

    def test_telescoping(self):
        x, c = 1.0, 0.3
        for k in range(1, 11):
            x = compromised_state_step(x, c)
            assert x == pytest.approx(1.0 + k * c)

    def test_vector(self):
        assert compromised_state_step([1.0, 2.0], [0.5, -1.0]) == [1.5, 1.0]


class TestShedLoad:
    def test_ceiling_arithmetic(self):
        plan = SheddingPlan(loads=(Load(0, 2e6, 1),), shed_fraction=0.1,
                            critical_weight=2)
        res = shed_load(plan, 0.3e6)
        assert res.unserved_w == 0.0
        assert len(res.commands) == 2            # two 10% steps
        assert res.plan.total_shed() == pytest.approx(0.4e6)

    def test_all_critical_unservable(self):
        plan = SheddingPlan(loads=(Load(0, 2e6, 3), Load(1, 1e6, 3)),
                            critical_weight=3)
        res = shed_load(plan, 1e5)
        assert res.unserved_w == pytest.approx(1e5)
        assert res.commands == ()

    def test_tie_break_by_load_id(self):
        plan = SheddingPlan(loads=(Load(5, 1e6, 1), Load(2, 1e6, 1)),
                            critical_weight=2)
        res = shed_load(plan, 0.05e6)
        assert res.commands[0][0] == 2

    def test_criticality_order(self):
        plan = SheddingPlan(loads=(Load(0, 1e6, 2), Load(1, 1e6, 1)),
                            critical_weight=3)
        res = shed_load(plan, 1.5e6)
        shed_ids = [c[0] for c in res.commands]
        assert shed_ids[:10] == [1] * 10          # low criticality fully first
        assert set(shed_ids[10:]) == {0}

    def test_randomized_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            n_loads = int(rng.integers(1, 5))
            loads = tuple(Load(i, float(rng.uniform(1e5, 3e6)),
                               int(rng.integers(1, 4))) for i in range(n_loads))
            crit = int(rng.integers(1, 5))
            frac = float(rng.uniform(0.05, 1.0))
            deficit = float(rng.uniform(1e4, 8e6))
            plan = SheddingPlan(loads=loads, shed_fraction=frac,
                                critical_weight=crit)
            res = shed_load(plan, deficit)

            # Brute-force oracle: simulate the policy declaratively.
            sheddable = sorted((l for l in loads if l.criticality < crit),
                               key=lambda l: (l.criticality, l.load_id))
            remaining, total = deficit, 0.0
            for l in sheddable:
                step = frac * l.size_w
                taken = 0.0
                while remaining > 1e-9 and taken < l.size_w - 1e-9:
                    amt = min(step, l.size_w - taken)
                    taken += amt
                    total += amt
                    remaining -= amt
                if remaining <= 1e-9:
                    break
            assert res.plan.total_shed() == pytest.approx(total, rel=1e-9, abs=1e-6)
            assert res.unserved_w == pytest.approx(max(remaining, 0.0),
                                                   rel=1e-9, abs=1e-6)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SheddingPlan(loads=(Load(0, 1e6, 1),), shed_fraction=0.0)


class TestAgentStatus:
    def test_support_requires_decoupled_inverter(self):
        st = AgentStatus(status=OFF, breaker_closed=False,
                         inverter=CONNECTED, bess_supported=True)
        with pytest.raises(ValueError):
            st.validate()
        st.inverter = REBOOTING
        st.validate()


class Verdict:
    def __init__(self, flagged, feats=("V",)):
        self.flagged = flagged
        self.triggered_features = list(feats) if flagged else []
        self.trigger_time = 0.1 if flagged else None


def make_sup(n=2, loads=(2e6, 2e6), crit=(1, 1), pickup=200, reboot=800):
    return MscSupervisor(n_agents=n, loads_w=list(loads),
                         criticalities=list(crit), pickup_delay_steps=pickup,
                         reboot_steps=reboot, horizon_s=0.09)


def drive(sup, b, flagged_agent, scans, in_bands=lambda i: True,
          scan_steps=100, first=1400):
    """Run supervisory scans; agent flagged at the first scan."""
    log = []
    for s in range(scans):
        step = first + s * scan_steps
        verdicts = [Verdict(i == flagged_agent and s == 0)
                    for i in range(sup.n_agents)]
        for cmd in sup.supervise_step(b, verdicts, step, in_bands):
            log.append(cmd)
    return log


class TestSupervisor:
    def test_no_flags_no_commands(self):
        sup = make_sup()
        cmds = sup.supervise_step(bess(), [Verdict(False)] * 2, 100,
                                  lambda i: True)
        assert cmds == []

    def test_single_agent_cascade_order(self):
        sup = make_sup()
        log = drive(sup, bess(), flagged_agent=0, scans=12)
        kinds = [(c.kind, c.step) for c in log if c.agent == 0]
        expect = [
            ("detector_flag", 1400), ("breaker_open", 1400),
            ("status_off", 1400), ("consensus_remove", 1400),
            ("inverter_disconnect", 1600), ("bess_dispatch", 1600),
            ("breaker_close", 1600), ("inverter_reboot", 1600),
            ("state_reset", 2400),
            ("status_on", 2500), ("inverter_connect", 2500),
            ("consensus_restore", 2500), ("bess_release", 2500),
        ]
        assert kinds == expect
        assert sup.agents[0].status == ON

    def test_breaker_open_precedes_dispatch(self):
        sup = make_sup()
        log = drive(sup, bess(), 1, scans=12)
        kinds = [c.kind for c in log]
        assert kinds.index("breaker_open") < kinds.index("bess_dispatch")
        assert kinds.index("inverter_connect") < kinds.index("bess_release")

    def test_two_flags_capacity_for_one_greedy_by_criticality(self):
        # 2 + 2 MW demanded, 2.5 MW ceiling: only the critical island fits.
        sup = make_sup(crit=(1, 2))
        b = bess()
        step = 1400
        cmds = sup.supervise_step(
            b, [Verdict(True), Verdict(True)], step, lambda i: True)
        assert {c.agent for c in cmds if c.kind == "breaker_open"} == {0, 1}
        cmds = sup.supervise_step(b, [Verdict(False)] * 2, 1600, lambda i: True)
        dispatches = [c for c in cmds if c.kind == "bess_dispatch"]
        assert dispatches[0].agent == 1    # higher criticality served first
        assert dispatches[0].payload["demand_w"] == pytest.approx(2e6)
        shed = [c for c in cmds if c.kind == "load_shed" and c.agent == 0]
        assert shed                         # the other island enters shedding
        # After shedding, the remainder fits beside the committed dispatch.
        assert dispatches[1].agent == 0
        assert dispatches[1].payload["demand_w"] \
            == pytest.approx(2e6 - sum(c.payload["shed_w"] for c in shed))
        assert sup.committed_output() <= b.p_max
        assert sup.agents[1].status == RESTORING

    def test_all_critical_unservable(self):
        sup = make_sup(n=1, loads=(3e6,), crit=(2,))
        b = bess(p_max=2.5e6)
        sup.supervise_step(b, [Verdict(True)], 1400, lambda i: True)
        cmds = sup.supervise_step(b, [Verdict(False)], 1600, lambda i: True)
        assert any(c.kind == "unservable_deficit" for c in cmds)
        assert sup.agents[0].status == OFF

    def test_restore_waits_for_bands(self):
        sup = make_sup()
        ok = {"value": False}
        log = drive(sup, bess(), 0, scans=14, in_bands=lambda i: ok["value"])
        assert not any(c.kind == "status_on" for c in log)
        # One scan after the state is back inside the bands: restored.
        ok["value"] = True
        cmds = sup.supervise_step(bess(), [Verdict(False)] * 2, 2800,
                                  lambda i: True)
        assert [c.kind for c in cmds if c.agent == 0][0] == "status_on"

    def test_initially_off(self):
        sup = make_sup()
        sup.mark_initially_off(1)
        assert sup.agents[1].status == OFF
        assert not sup.agents[1].breaker_closed

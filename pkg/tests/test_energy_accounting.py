from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_doc
from fogplace.app_traffic import derive_phases, get_app
from fogplace.energy_accounting import TERM_NAMES, total_energy
from fogplace.instance import make_instance
from fogplace.power_profiles import DevicePowerProfile, load_profiles
from fogplace.solution import PlacementSolution, build_solution
from fogplace.topology import load_topology
from fogplace.toys import random_instance
from refs import random_assignment, reference_energy

ECG = get_app("ecg")


def hand_phases(**kw):
    base = dict(ra=1, rate_up_bps=336.0, time_up_s=188.1, rb=1, rate_fb_bps=336.0,
                time_fb_s=0.762, rate_st_bps=350.336, time_st_s=0.731, tau_p=6.0252, pat_max=669)
    base.update(kw)
    from fogplace.app_traffic import PhaseParams
    return PhaseParams(**base)


def tiny_instance(patients=80, ps_per_node=1, profiles=None, phases=None):
    topo = load_topology(tiny_doc(patients))
    return make_instance(topo, ECG, "foa", profiles=profiles or load_profiles(),
                         ps_per_node=ps_per_node, phases=phases or hand_phases())


def test_zero_traffic_is_zero_energy():
    inst = tiny_instance()
    e = total_energy(PlacementSolution(), inst)
    assert e.total == 0.0 and all(v == 0.0 for v in e.terms.values())


def test_bs_upload_hand_value():
    prof = dict(load_profiles())
    prof["bs"] = DevicePowerProfile("bs", 333.0 + 0.5 * 1e5, 333.0, 1e5, idle_share=0.0042, pue=1.5)
    inst = tiny_instance(80, profiles=prof)
    sol = build_solution(inst, {"o1": 1}, {("c1", "b1", "o1"): 80}, {})
    want = (333 * 0.0042 + 40) * 188.1
    assert sol.flows["raw"][("c1", "o1", "c1", "b1")] == 80 * 336
    assert total_energy(sol, inst).terms["EBSP"] == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(7788, abs=1)


def test_onu_relay_hand_value():
    inst = tiny_instance()
    sol = PlacementSolution(flows={"raw": {("c1", "olt", "b1", "o1"): 26880.0},
                                   "feedback": {}, "storage": {}})
    want = (7.2 * 0.003 + 26880 * 0.8 / 3.75e9) * 188.1
    assert total_energy(sol, inst).terms["EONUP"] == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(4.06, abs=0.01)


def test_single_ps_at_olt_hand_value():
    inst = tiny_instance(669)
    sol = PlacementSolution(phi={"olt": 1}, tau_p={"olt": 6.0252})
    e = total_energy(sol, inst)
    want = (78 * (188.1 + 0.762 + 0.731) + 180 * 6.0252) * 2.5
    assert e.terms["EPS"] * 2.5 == pytest.approx(want, rel=1e-12)
    assert e.processing == pytest.approx(want, rel=1e-12)
    assert want == pytest.approx(39681, abs=1)


def test_switch_adds_energy():
    plain = tiny_instance(40, ps_per_node=1)
    sw = tiny_instance(40, ps_per_node=None)
    args = ({"olt": 1}, {("c1", "b1", "olt"): 40}, {("c1", "b1", "olt"): 40})
    e1 = total_energy(build_solution(plain, *args), plain)
    e2 = total_energy(build_solution(sw, *args), sw)
    assert e2.total > e1.total
    assert e2.fog - e1.fog == pytest.approx(e2.total - e1.total, rel=1e-12)
    assert min(e2.terms["EESP"], e2.terms["EESF"], e2.terms["EESS"]) > 0


def test_storage_is_charged_above_the_olt_only_in_the_storage_phase():
    inst = tiny_instance(40)
    sol = build_solution(inst, {"o1": 1}, {("c1", "b1", "o1"): 40}, {("c1", "b1", "o1"): 40})
    t = total_energy(sol, inst).terms
    assert t["ECASS"] > 0 and t["ECASP"] == 0 and t["ECSTS"] > 0
    assert t["EBSP"] > 0 and t["EBSF"] > 0


def test_terms_sum_to_layers():
    inst = random_instance(3)
    phi, raw, fb = random_assignment(inst, np.random.default_rng(0))
    e = total_energy(build_solution(inst, phi, raw, fb), inst)
    assert set(e.terms) == set(TERM_NAMES)
    assert e.total == pytest.approx(sum(e.layers.values()), rel=1e-12)
    assert e.network + e.processing == pytest.approx(e.total, rel=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_matches_route_walking_reference(seed):
    inst = random_instance(seed)
    phi, raw, fb = random_assignment(inst, np.random.default_rng(seed))
    sol = build_solution(inst, phi, raw, fb)
    e = total_energy(sol, inst)
    layers, proc = reference_energy(sol, inst)
    for name in ("access", "metro", "core", "cloud", "fog"):
        assert e.layers[name] == pytest.approx(layers.get(name, 0.0), rel=1e-12, abs=1e-12)
    assert e.processing == pytest.approx(proc, rel=1e-12)


@given(st.integers(0, 500), st.integers(1, 4))
def test_affine_in_flow_scale(seed, k):
    inst = random_instance(seed)
    phi, raw, fb = random_assignment(inst, np.random.default_rng(seed))
    sol = build_solution(inst, phi, raw, fb)

    def scaled(m):
        flows = {p: {key: f * m for key, f in sol.flows[p].items()} for p in sol.flows}
        return total_energy(replace(sol, flows=flows), inst)

    e1, e2, e3 = scaled(k), scaled(2 * k), scaled(3 * k)
    for t in TERM_NAMES:
        d1 = e2.terms[t] - e1.terms[t]
        d2 = e3.terms[t] - e2.terms[t]
        assert d2 == pytest.approx(d1, rel=1e-9, abs=1e-9 * max(1.0, abs(e3.terms[t])))
        assert e1.terms[t] >= 0


def test_halving_capacity_doubles_proportional_part():
    inst = tiny_instance(40)
    sol = build_solution(inst, {"o1": 1}, {("c1", "b1", "o1"): 40}, {("c1", "b1", "o1"): 40})
    prof = dict(inst.profiles)
    cls = prof["cs"]
    half = DevicePowerProfile("cs", cls.p_idle + (cls.p_max - cls.p_idle), cls.p_idle,
                              cls.c_max / 2, idle_share=cls.idle_share, pue=cls.pue)
    prof2 = dict(prof, cs=half)
    inst2 = replace(inst, profiles=prof2)
    idle = cls.p_idle * cls.idle_share * inst.phases.time_st_s
    a = total_energy(sol, inst).terms["ECSS"] - idle
    b = total_energy(sol, inst2).terms["ECSS"] - idle
    assert b == pytest.approx(2 * a, rel=1e-12)

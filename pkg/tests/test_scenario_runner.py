import io
import json
import math

import pytest

from conftest import tiny_doc
from fogplace.scenario_runner import (COLUMNS, DatasetError, Roster, Scenario, build_point,
                                      discrepancy_notes, emit_results, load_dataset,
                                      load_scenario, read_results, round_half_up,
                                      run_scenario, scale_patients)
from fogplace.topology import load_topology
from fogplace.toys import random_topology_doc

SHIPPED = ("ecg_base", "ecg_idle_sweep", "ecg_traffic_s1", "ecg_traffic_s2",
           "fall_patients_per_ps", "fall_ps_per_node")


def test_shipped_roster():
    r = load_dataset()
    assert len(r) == 37
    assert r.total("ecg") == 669 and r.total("fall") == 140
    c = r.get("Leeds Student Practice")
    assert (c.ecg, c.fall) == (68, 0)


def test_roster_matches_topology(wl):
    r = load_dataset()
    t = r.apply(wl)
    assert t.patients("ecg") == wl.patients("ecg")
    assert t.patients("fall") == wl.patients("fall")


def test_checksum_mismatch(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("clinic,patients_ecg,patients_fall\nA,1,2\n")
    assert load_dataset(p).total("ecg") == 1
    with pytest.raises(DatasetError, match="checksum"):
        load_dataset(p, expected_sha256="0" * 64)
    (tmp_path / "r.csv.sha256").write_text("f" * 64 + "\n")
    with pytest.raises(DatasetError, match="checksum"):
        load_dataset(p)


@pytest.mark.parametrize("body", [
    "clinic,ecg,fall\nA,1,2\n",
    "clinic,patients_ecg,patients_fall\nA,1,2\nA,3,4\n",
    "clinic,patients_ecg,patients_fall\nA,-1,2\n",
    "clinic,patients_ecg,patients_fall\nA,x,2\n",
])
def test_bad_rosters(tmp_path, body):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DatasetError):
        load_dataset(p)


def test_empty_roster_gives_empty_solutions(tmp_path, wl):
    p = tmp_path / "empty.csv"
    p.write_text("clinic,patients_ecg,patients_fall\n")
    r = load_dataset(p)
    assert len(r) == 0
    rows = run_scenario(Scenario("empty", solver="heuristic"), wl, roster=r)
    assert rows[0].patients == 0 and rows[0].placement == {}
    assert rows[0].foa.total == 0.0


def test_unknown_roster_clinic(wl):
    from fogplace.scenario_runner import ClinicCount
    with pytest.raises(DatasetError):
        Roster((ClinicCount("Nowhere", 1, 1),)).apply(wl)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_round_trip(name):
    sc = load_scenario(name)
    assert Scenario.from_dict(sc.to_dict()) == sc
    assert sc.baseline is not None


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("x", axis="none", points=(0.0, 0.1))
    with pytest.raises(ValueError):
        Scenario("x", axis="sideways")
    with pytest.raises(ValueError):
        Scenario("x", axis="idle", points=(0, 1), idle_classes={"bs": (0,)})
    with pytest.raises(ValueError):
        Scenario.from_dict({"name": "x", "colour": "red"})
    with pytest.raises(FileNotFoundError):
        load_scenario("no_such_scenario")


def test_only_the_axis_moves():
    sc = load_scenario("fall_patients_per_ps")
    pinned = [sc.at(i) for i in range(len(sc.points))]
    for p in pinned:
        d, base = p.to_dict(), sc.to_dict()
        d.pop("patients_per_ps"), base.pop("patients_per_ps")
        assert d == base
    assert [p.patients_per_ps for p in pinned] == list(sc.points)


def test_half_up_rounding():
    assert round_half_up(0.5) == 1 and round_half_up(2.5) == 3 and round_half_up(2.4999) == 2
    assert scale_patients({"a": 5, "b": 15}, 0.1) == {"a": 6, "b": 17}
    assert scale_patients({"a": 5}, 0.0) == {"a": 5}


def test_idle_sweep_profiles(wl):
    sc = load_scenario("ecg_idle_sweep")
    full = build_point(sc, len(sc.points) - 1, wl)
    assert full.profiles["bs"].p_idle == 0.0
    assert full.profiles["onu"].p_idle == 0.0
    assert full.profiles["onu"].p_max == 8.0
    base = build_point(sc, 0, wl)
    assert base.profiles["bs"].p_idle == 333.0


def test_traffic_sweep_grows_population(wl):
    sc = load_scenario("ecg_traffic_s2")
    a, b = build_point(sc, 0, wl), build_point(sc, len(sc.points) - 1, wl)
    assert b.total_patients > a.total_patients
    assert b.phases.rate_st_bps < a.phases.rate_st_bps


def test_fall_patients_per_ps_points(wl):
    sc = load_scenario("fall_patients_per_ps")
    caps = [build_point(sc, i, wl).app.max_patients_per_ps for i in range(len(sc.points))]
    assert caps == [28, 56, 84, 112, 140]


def small_sweep():
    return Scenario.from_dict({
        "name": "toy", "app": "ecg", "solver": "exact", "ps_per_node": 1, "cb_min": 6720.0,
        "baseline": {"mode": "ca", "ps_per_node": "variable"},
        "sweep": {"axis": "idle", "points": [0.0, 0.3, 0.6, 1.0]},
        "reference": {"network_saving_pct": 50.0},
    })


def roomy_topology(patients=20):
    # small populations mean a small pat_max and fast per-patient feedback
    doc = tiny_doc(patients)
    for ln in doc["links"]:
        ln["capacity_bps"] = max(ln["capacity_bps"], 1e7)
    return load_topology(doc)


@pytest.fixture(scope="module")
def toy_rows():
    topo = roomy_topology()
    return run_scenario(small_sweep(), topo), topo


def test_sweep_rows_and_savings(toy_rows):
    rows, _ = toy_rows
    assert len(rows) == 4
    assert [r.point for r in rows] == [0.0, 0.3, 0.6, 1.0]
    for r in rows:
        assert r.status == "optimal" and r.ca_status == "optimal"
        want = 100 * (r.ca.total - r.foa.total) / r.ca.total
        assert r.total_saving_pct == pytest.approx(want, rel=1e-12)
        rec = r.record()
        assert set(rec) == set(COLUMNS)
        assert rec["servers"] == sum(r.placement.values())


def test_emit_round_trip(toy_rows):
    rows, _ = toy_rows
    for fmt in ("csv", "json"):
        text = emit_results(rows, None, fmt)
        back = read_results(io.StringIO(text), fmt)
        assert len(back) == 4
        for rec, row in zip(back, rows):
            assert rec["foa_total_J"] == pytest.approx(row.foa.total, rel=1e-5)
            assert rec["placement"] == row.record()["placement"]


def test_emit_empty():
    assert emit_results([], None, "csv") == ",".join(COLUMNS) + "\n"
    assert json.loads(emit_results([], None, "json"))["rows"] == []
    with pytest.raises(ValueError):
        emit_results([], None, "xml")


def test_rerun_is_byte_identical(toy_rows):
    rows, topo = toy_rows
    again = run_scenario(small_sweep(), topo)
    for fmt in ("csv", "json"):
        assert emit_results(rows, None, fmt) == emit_results(again, None, fmt)


def test_workers_do_not_change_results(toy_rows):
    rows, topo = toy_rows
    par = run_scenario(small_sweep(), topo, workers=2)
    assert emit_results(par, None) == emit_results(rows, None)


def test_notes_name_the_topology_source(wl, toy_rows):
    rows, topo = toy_rows
    notes = discrepancy_notes(small_sweep(), rows, topo)
    assert len(notes) == 4 and all("reference 50.0" in n for n in notes)
    notes = discrepancy_notes(small_sweep(), rows, wl)
    assert "reconstruction" in notes[0]


def test_errors_stay_in_the_row():
    topo = roomy_topology()
    sc = Scenario("bad", solver="exact", patients_per_ps=0.01, ps_per_node=1, cb_min=6720.0)
    # one patient per PS and one PS per node cannot host 20 patients on 2 nodes
    rows = run_scenario(sc, topo)
    assert rows[0].status != "optimal"
    assert not rows[0].placement


def test_auto_solver_choice(wl):
    rows = run_scenario(Scenario("auto", cb_min=3360.0), roomy_topology(10))
    assert rows[0].solver == "exact (auto)" and rows[0].status == "optimal"
    from fogplace.scenario_runner import select_solver
    inst = build_point(Scenario("auto"), 0, wl)
    assert select_solver(inst, "auto")[0] == "heuristic"

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are repeated in the terminal summary either way.
"""
import io
import math
import time

import numpy as np
import pytest

from fogplace.app_traffic import get_app, processing_time
from fogplace.cli import _derive_one
from fogplace.energy_accounting import total_energy
from fogplace.eofc_heuristic import HeuristicError, run_eofc
from fogplace.exact_solver import assemble, placement_lower_bounds, solve_exact
from fogplace.instance import make_instance
from fogplace.lp_format import export_lp, model_values, read_lp
from fogplace.oracle import brute_force_oracle
from fogplace.scenario_runner import (discrepancy_notes, load_scenario, restrict_candidates,
                                      run_scenario, scale_patients)
from fogplace.solution import PlacementSolution, build_solution
from fogplace.topology import west_leeds
from fogplace.toys import random_instance
from fogplace.validation import validate

RESULTS = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print("\n" + line)
    return ok


def rel_ok(got, want, tol=0.005):
    return abs(got - want) <= tol * abs(want)


# published parameter tables, values as printed (kb/s and s where noted)
ECG_REF = {
    "foa": {"rate_up_bps": 1344, "time_up_s": 188.1, "rate_fb_bps": 336, "time_fb_s": 0.76,
            "rate_st_bps": 350, "time_st_s": 0.73},
    "ca": {"rate_up_bps": 1344, "time_up_s": 188.1, "rate_fb_bps": 672, "time_fb_s": 0.38,
           "rate_st_bps": 8070, "time_st_s": 0.032},
}
FALL_PPS_REF = {   # per patients-per-PS point 20..100%
    "foa": {"rate_up_bps": [15456, 15792, 16128, 16800, 17136],
            "time_up_s": [217.39, 212.77, 208.33, 200, 196.08],
            "rate_fb_bps": [1344] * 5, "time_fb_s": [1.524] * 5,
            "rate_st_bps": [1674] * 5, "time_st_s": [1.223] * 5},
    "ca": {"rate_up_bps": [15456, 15792, 16128, 16464, 17136],
           "time_up_s": [217.39, 212.77, 208.33, 204.08, 196.08],
           "rate_fb_bps": [3024] * 5, "time_fb_s": [0.68] * 5,
           "rate_st_bps": [38571] * 5, "time_st_s": [0.053] * 5},
}
FALL_PPN_REF = {   # per PS-per-node cap 1..5, 20% of patients per PS
    "rate_up_bps": [15456] * 5, "time_up_s": [217.39] * 5,
    "rate_fb_bps": [8064, 4032, 2688, 2016, 1344],
    "time_fb_s": [0.254, 0.508, 0.762, 1.016, 1.524],
    "rate_st_bps": [8370, 4185, 2790, 2092, 1674],
    "time_st_s": [0.245, 0.489, 0.734, 0.979, 1.223],
}
STORAGE_REF = {    # traffic +10..90%, variable PS count: (CA kb/s, CA s, FOA kb/s, FOA s)
    0.1: (7.317, 0.035, 0.317, 0.81), 0.2: (6.708, 0.038, 0.291, 0.88),
    0.3: (6.199, 0.041, 0.269, 0.95), 0.4: (5.775, 0.044, 0.250, 1.02),
    0.5: (5.346, 0.048, 0.232, 1.1), 0.6: (5.037, 0.051, 0.218, 1.17),
    0.7: (4.741, 0.054, 0.205, 1.25), 0.8: (4.492, 0.057, 0.194, 1.31),
    0.9: (4.245, 0.060, 0.184, 1.39),
}



@pytest.fixture(scope="module")
def wl():
    return west_leeds()


@pytest.fixture(scope="module")
def runs(wl):
    names = ("ecg_base", "ecg_idle_sweep", "ecg_traffic_s1", "ecg_traffic_s2",
             "fall_patients_per_ps", "fall_ps_per_node")
    out = {}
    for n in names:
        sc = load_scenario(n)
        out[n] = (sc, run_scenario(sc, wl))
    return out


def test_criterion_1_derivation_golden_vectors():
    t0 = time.perf_counter()
    bad = []

    def check(tag, ph, ref, i=None):
        for k, v in ref.items():
            want = v if i is None else v[i]
            got = getattr(ph, k)
            # printed durations carry 2-3 significant digits
            tol = 0.005 if not k.startswith("time") or want >= 1 else max(0.005, 0.0051 / want)
            if not rel_ok(got, want, tol):
                bad.append(f"{tag} {k}: {got:.6g} vs {want}")

    for mode in ("foa", "ca"):
        check(f"ecg {mode}", _derive_one("ecg", mode, 1, None, 669), ECG_REF[mode])
        for i, f in enumerate((0.2, 0.4, 0.6, 0.8, 1.0)):
            check(f"fall {mode} {f}", _derive_one("fall", mode, None, f, 140), FALL_PPS_REF[mode], i)
    for i in range(5):
        check(f"fall ppn {i + 1}", _derive_one("fall", "foa", i + 1, 0.2, 140), FALL_PPN_REF, i)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 1.0
    report(1, ok, f"{0 if not bad else len(bad)} mismatches, {dt * 1e3:.1f} ms"
           + ("" if not bad else f" first: {bad[0]}"))
    assert ok, bad


def test_criterion_2_processing_time():
    ecg = processing_time(get_app("ecg"), 669, 1)
    fall = get_app("fall").per_recording_proc_s
    ok = abs(ecg - 6.02) <= 0.01 and math.isclose(fall, 0.18, rel_tol=1e-12)
    report(2, ok, f"tau_p(669, 1) = {ecg:.4f} s, fall per recording = {fall:.4g} s")
    assert ok


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    n = agree = solved = within = 0
    below = []
    for seed in range(200):
        inst = random_instance(seed)
        ex, orc = solve_exact(inst), brute_force_oracle(inst)
        n += 1
        same = ex.status == orc.status and (
            orc.status != "optimal" or math.isclose(ex.objective, orc.objective, rel_tol=1e-9))
        agree += same
        if orc.status != "optimal":
            continue
        solved += 1
        try:
            h = run_eofc(inst)
        except HeuristicError:
            continue
        if h.objective < ex.objective * (1 - 1e-9):
            below.append(seed)
        within += h.objective <= ex.objective * 1.05
    dt = time.perf_counter() - t0
    ok = agree == n and not below and within >= 0.95 * solved and dt < 600
    report(3, ok, f"exact == oracle on {agree}/{n}; heuristic within 5% on {within}/{solved} "
           f"({100 * within / max(solved, 1):.1f}%), below exact on {len(below)}; {dt:.0f} s")
    assert ok


def test_criterion_4_olt_placement(wl):
    ecg = get_app("ecg")
    full = make_instance(wl, ecg, "foa")
    h = run_eofc(full)
    small = make_instance(restrict_candidates(wl, "ecg", 8), ecg, "foa")
    ex = solve_exact(small, time_limit=60)
    lbs = placement_lower_bounds(small)
    others = {d: b for d, b in lbs.items() if d != "olt"}
    # with a 60 s budget the search may stop early; the per-candidate LP bounds then
    # prove that no ONU can host a PS in any solution as cheap as the incumbent
    proven = ex.status == "optimal" or min(others.values()) > ex.objective
    ok = h.solution.phi == {"olt": 1} and ex.solution.phi == {"olt": 1} and proven
    report(4, ok, f"heuristic {h.solution.phi}; exact ({len(small.candidates)} candidates, "
           f"{ex.status}, gap {100 * ex.gap:.2f}%) {ex.solution.phi} at {ex.objective:.1f} J; "
           f"cheapest ONU bound {min(others.values()):.1f} J")
    assert ok


def test_criterion_5_directional_savings(runs, wl):
    ecg_sc, ecg_rows = runs["ecg_base"]
    fall_sc, fall_rows = runs["fall_patients_per_ps"]
    e = ecg_rows[0]
    checks = [
        e.foa.total < e.ca.total,
        all(r.foa.total < r.ca.total for r in fall_rows),
        abs(e.total_saving_pct - 35.7) <= 10,
        abs(e.network_saving_pct - 83.1) <= 10,
        abs(fall_rows[0].total_saving_pct - 38) <= 10,
        abs(fall_rows[-1].total_saving_pct - 52) <= 10,
    ]
    notes = discrepancy_notes(ecg_sc, ecg_rows, wl) + discrepancy_notes(fall_sc, fall_rows, wl)
    logged = any("reconstruction" in n for n in notes)
    ok = all(checks) and logged
    report(5, ok, f"ECG total {e.total_saving_pct:.1f}% (35.7), network "
           f"{e.network_saving_pct:.1f}% (83.1); fall {fall_rows[0].total_saving_pct:.1f}% -> "
           f"{fall_rows[-1].total_saving_pct:.1f}% (38 -> 52); discrepancy logged: {logged}")
    assert ok


def test_criterion_6_idle_sweep(runs):
    _, rows = runs["ecg_idle_sweep"]
    net = [r.network_saving_pct for r in rows]
    proc = [r.processing_increase_pct for r in rows]
    ok = (all(a > b for a, b in zip(net, net[1:])) and net[-1] < 1.0
          and all(p <= 0.6 for p in proc[:-1]) and abs(proc[-1]) < 1e-6)
    report(6, ok, "network saving " + " / ".join(f"{v:.1f}" for v in net)
           + "%; processing increase " + " / ".join(f"{v:.2f}" for v in proc) + "%")
    assert ok


def test_criterion_7_traffic_sweep(runs):
    bad = []
    base = west_leeds().patients("ecg")
    for s, (ca_r, ca_t, foa_r, foa_t) in STORAGE_REF.items():
        # growth is applied per clinic, so the total is not round(669 * (1 + s))
        pat = sum(scale_patients(base, s).values())
        for mode, r, t in (("ca", ca_r, ca_t), ("foa", foa_r, foa_t)):
            ph = _derive_one("ecg", mode, None, None, pat)
            # the published rates are truncated to three decimals, not rounded
            kbps = ph.rate_st_bps / 1e3
            if not (rel_ok(kbps, r) or math.floor(kbps * 1000 + 1e-9) == round(r * 1000)):
                bad.append(f"{mode} +{s:.0%} rate {ph.rate_st_bps / 1e3:.4g} vs {r}")
            # durations are printed to 2 significant digits
            if abs(ph.time_st_s - t) > max(0.005 * t, 0.0051):
                bad.append(f"{mode} +{s:.0%} time {ph.time_st_s:.4g} vs {t}")
    curves = {
        "S1 fog": [r.foa.total for r in runs["ecg_traffic_s1"][1]],
        "S2 fog": [r.foa.total for r in runs["ecg_traffic_s2"][1]],
        "S2 cloud": [r.ca.total for r in runs["ecg_traffic_s2"][1]],
    }
    mono = {k: all(b >= a for a, b in zip(v, v[1:])) for k, v in curves.items()}
    ok = not bad and all(mono.values())
    report(7, ok, f"storage columns: {len(bad)} mismatches; non-decreasing totals: "
           + ", ".join(f"{k} {v}" for k, v in mono.items()))
    assert ok, bad


def test_criterion_8_invariants(runs):
    checked = failed = 0
    for seed in range(40):
        inst = random_instance(10_000 + seed)
        reps = [solve_exact(inst), brute_force_oracle(inst)]
        try:
            reps.append(run_eofc(inst))
        except HeuristicError:
            pass
        for rep in reps:
            if rep.solution is None:
                continue
            checked += 1
            failed += not validate(rep.solution, inst).ok
    # every solution the scenario sweeps produced, re-checked from scratch
    wl = west_leeds()
    from fogplace.scenario_runner import build_point
    for sc, rows in runs.values():
        for i, r in enumerate(rows):
            for sol, base in ((r.solution, False), (r.ca_solution, True)):
                if sol is None:
                    continue
                checked += 1
                failed += not validate(sol, build_point(sc, i, wl, baseline=base)).ok
    inst = random_instance(1)
    zero = total_energy(PlacementSolution(), inst).total == 0.0
    sol = build_solution(inst, *_any_assignment(inst))
    e1 = total_energy(sol, inst)
    dbl = PlacementSolution(**{**sol.__dict__, "flows": {
        p: {k: 2 * f for k, f in v.items()} for p, v in sol.flows.items()}})
    e2 = total_energy(dbl, inst)
    idle = e1.network - (e2.network - e1.network)
    e3 = total_energy(PlacementSolution(**{**sol.__dict__, "flows": {
        p: {k: 3 * f for k, f in v.items()} for p, v in sol.flows.items()}}), inst)
    affine = math.isclose(e3.network, idle + 3 * (e1.network - idle), rel_tol=1e-9)
    ok = failed == 0 and checked > 0 and zero and affine
    report(8, ok, f"{checked - failed}/{checked} solver outputs valid; zero traffic -> zero "
           f"energy: {zero}; affine in flow scale: {affine}")
    assert ok


def _any_assignment(inst):
    topo = inst.topology
    d = inst.candidates[-1]
    raw = {(c, sorted(topo.serving_bs(c))[0], d): inst.patients[c] for c in inst.clinics}
    return {d: inst.ps_cap}, raw, dict(raw)


def test_criterion_9_lp_export_fidelity():
    worst, n, seed = 0.0, 0, 0
    while n < 20:
        inst = random_instance(20_000 + seed)
        seed += 1
        rep = solve_exact(inst)
        if rep.solution is None:
            continue
        m = assemble(inst)
        lp = read_lp(io.StringIO(export_lp(m, None)))
        got = lp.evaluate(model_values(m, rep.solution))
        want = total_energy(rep.solution, inst).total
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
        n += 1
    ok = worst <= 1e-9
    report(9, ok, f"{n} toy models, worst relative difference {worst:.2e}")
    assert ok

"""Test-side reference implementations, written without the package's
flow bookkeeping or coefficient tables."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np

from fogplace.app_traffic import processing_time

LAYER = {
    "BaseStation": "access", "Onu": "access", "Olt": "access",
    "CenterAggSwitch": "metro", "AggRouter": "metro", "CoreRouter": "core",
    "CloudRouter": "cloud", "CloudSwitch": "cloud", "ContentServer": "cloud",
    "CloudStorage": "cloud",
}
UPSTREAM = {"CenterAggSwitch", "AggRouter", "CoreRouter", "CloudRouter", "CloudSwitch"}


def charged(kind, phase, mode):
    if kind == "BaseStation":
        return phase in ("up", "fb")
    if kind in ("Onu", "Olt"):
        return True
    if kind in UPSTREAM and mode == "ca":
        return True
    return phase == "st"


def reference_energy(sol, inst):
    """Walk every route, count patients per device and phase, price them."""
    topo, ph = inst.topology, inst.phases
    count = {p: defaultdict(int) for p in ("up", "fb", "st")}
    for (c, j, d), n in sol.raw_bs.items():
        for v in inst.raw_route(c, j, d)[1:]:
            count["up"][v] += n
    for (c, j, d), n in sol.fb_bs.items():
        for v in inst.fb_route(c, j, d)[:-1]:
            count["fb"][v] += n
    load = defaultdict(int)
    for (c, d), n in sol.omega.items():
        load[d] += n
    for d, n in load.items():
        for v in inst.storage_route(d):
            count["st"][v] += n
    tau = {"up": ph.time_up_s, "fb": ph.time_fb_s, "st": ph.time_st_s}
    rate = {"up": ph.rate_up_bps, "fb": ph.rate_fb_bps, "st": ph.rate_st_bps}
    prbs = {"up": ph.ra, "fb": ph.rb}
    layers = defaultdict(float)
    for p in count:
        for v, n in count[p].items():
            kind = topo.kind(v).value
            if n == 0 or not charged(kind, p, inst.mode):
                continue
            pr = inst.profiles[topo.node(v).profile]
            if kind == "BaseStation":
                dyn = pr.slope * prbs[p] * n
            elif kind == "CloudStorage":
                dyn = pr.slope * n * rate[p] * tau[p]
            else:
                dyn = pr.slope * n * rate[p]
            layers[LAYER[kind]] += pr.pue * pr.redundancy * (pr.p_idle * pr.idle_share + dyn) * tau[p]
    ps = inst.profiles[inst.app.ps_profile]
    window = sum(tau.values())
    proc = 0.0
    for d, k in sol.phi.items():
        if k > 0:
            t = processing_time(inst.app, load.get(d, 0), k)
            proc += ps.pue * (ps.p_idle * ps.idle_share * k * window + ps.p_max * t)
    es_total = 0.0
    if inst.ps_per_node != 1:
        es = inst.profiles["es"]
        fb_at = defaultdict(int)
        for (c, j, d), n in sol.fb_bs.items():
            fb_at[d] += n
        for d, k in sol.phi.items():
            if k > 0:
                bits = (load.get(d, 0) * (ph.rate_up_bps * ph.time_up_s + ph.rate_st_bps * ph.time_st_s)
                        + fb_at[d] * ph.rate_fb_bps * ph.time_fb_s)
                es_total += es.pue * (es.p_idle * es.idle_share * window + es.slope * bits)
    layers["fog"] = proc + es_total
    return dict(layers), proc


def random_assignment(inst, rng):
    """Random per-patient (BS, fog) choices; ignores every capacity."""
    topo = inst.topology
    raw, fb = defaultdict(int), defaultdict(int)
    cands = inst.candidates
    for c in inst.clinics:
        bss = sorted(topo.serving_bs(c))
        for _ in range(inst.patients[c]):
            d = cands[int(rng.integers(len(cands)))]
            raw[(c, bss[int(rng.integers(len(bss)))], d)] += 1
            fb[(c, bss[int(rng.integers(len(bss)))], d)] += 1
    load = defaultdict(int)
    for (c, j, d), n in raw.items():
        load[d] += n
    per = max(1, inst.per_ps)
    phi = {d: max(1, math.ceil(n / per)) for d, n in load.items()}
    return phi, dict(raw), dict(fb)


def micro_enumerate(inst):
    """Minimum total energy over every per-patient assignment.

    Each patient independently picks an upload BS, a fog node and a feedback
    BS; PS counts are the fewest that fit; every resulting solution is
    checked by the validator. Only usable on a handful of patients.
    """
    from fogplace.energy_accounting import total_energy
    from fogplace.solution import build_solution
    from fogplace.validation import validate

    topo = inst.topology
    per = inst.per_ps
    cap = inst.ps_cap
    patients = [c for c in inst.clinics for _ in range(inst.patients[c])]
    choices = [[(j, d, k) for j in sorted(topo.serving_bs(c)) for d in inst.candidates
                for k in sorted(topo.serving_bs(c))] for c in patients]
    best = None
    seen = set()
    for pick in itertools.product(*choices):
        raw, fb, load = defaultdict(int), defaultdict(int), defaultdict(int)
        for c, (j, d, k) in zip(patients, pick):
            raw[(c, j, d)] += 1
            fb[(c, k, d)] += 1
            load[d] += 1
        key = (tuple(sorted(raw.items())), tuple(sorted(fb.items())))
        if key in seen:
            continue
        seen.add(key)
        phi = {d: math.ceil(n / per) for d, n in load.items()}
        if any(n > cap for n in phi.values()):
            continue
        sol = build_solution(inst, phi, raw, fb)
        if not validate(sol, inst).ok:
            continue
        e = total_energy(sol, inst).total
        if best is None or e < best:
            best = e
    return best


def micro_instance(seed, mode="foa", app_name="ecg"):
    """A random instance small enough for per-patient enumeration."""
    from dataclasses import replace

    from fogplace.app_traffic import get_app
    from fogplace.instance import make_instance
    from fogplace.topology import load_topology
    from fogplace.toys import random_topology_doc

    rng = np.random.default_rng(seed)
    doc = random_topology_doc(rng, n_clinics=(1, 2), n_bs=(1, 2), n_onu=(1, 2),
                              patients=(1, 2), app=app_name)
    topo = load_topology(doc)
    total = sum(topo.patients(app_name).values())
    base = get_app(app_name)
    app = replace(base, max_patients_per_ps=int(rng.integers(1, total + 1)))
    ppn = None if mode == "ca" else [1, 2, None][int(rng.integers(3))]
    pat_max = 669 if app_name == "ecg" else 140
    return make_instance(topo, app, mode, ps_per_node=ppn, pat_max=pat_max,
                         tau_p=processing_time(base, min(base.max_patients_per_ps, pat_max), 1))

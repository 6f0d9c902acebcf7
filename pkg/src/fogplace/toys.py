"""Small random GPON instances for cross-checking the solvers."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .app_traffic import get_app, processing_time
from .instance import make_instance
from .power_profiles import load_profiles
from .topology import load_topology

__all__ = ["random_topology_doc", "random_instance", "chain_doc"]

CHAIN = [("cas", "CenterAggSwitch"), ("ar", "AggRouter"), ("cr", "CoreRouter"),
         ("clr", "CloudRouter"), ("cls", "CloudSwitch"), ("cs", "ContentServer"),
         ("cst", "CloudStorage")]


def chain_doc(metro_bps: float = 3e7):
    nodes = [{"id": i, "kind": k, "profile": i} for i, k in CHAIN]
    links = []
    prev = "olt"
    for i, _ in CHAIN:
        links.append({"a": prev, "b": i, "capacity_bps": metro_bps})
        prev = i
    return nodes, links


def random_topology_doc(rng: np.random.Generator, n_clinics=(1, 3), n_bs=(1, 6),
                        n_onu=(1, 7), patients=(1, 60), app="ecg", tight_links=0.3):
    nc = int(rng.integers(n_clinics[0], n_clinics[1] + 1))
    nb = int(rng.integers(n_bs[0], n_bs[1] + 1))
    no = int(rng.integers(n_onu[0], n_onu[1] + 1))
    nodes, links = [], []
    for i in range(nc):
        p = int(rng.integers(patients[0], patients[1] + 1))
        nodes.append({"id": f"c{i}", "kind": "Clinic",
                      "patients_ecg": p if app == "ecg" else 0,
                      "patients_fall": p if app == "fall" else 0})
    for j in range(nb):
        nodes.append({"id": f"b{j}", "kind": "BaseStation", "profile": "bs"})
    for k in range(no):
        nodes.append({"id": f"o{k}", "kind": "Onu", "profile": "onu", "fog_candidate": True})
    nodes.append({"id": "olt", "kind": "Olt", "profile": "olt", "fog_candidate": True})
    cn, cl = chain_doc()
    nodes += cn
    lte = 360 * 336
    for i in range(nc):
        deg = int(rng.integers(1, min(3, nb) + 1))
        for j in sorted(rng.choice(nb, size=deg, replace=False)):
            links.append({"a": f"c{i}", "b": f"b{j}", "capacity_bps": lte})
    used = {ln["b"] for ln in links}
    for j in range(nb):
        if f"b{j}" not in used:
            links.append({"a": f"c{int(rng.integers(nc))}", "b": f"b{j}", "capacity_bps": lte})
    for j in range(nb):
        links.append({"a": f"b{j}", "b": f"o{int(rng.integers(no))}", "capacity_bps": lte})
    for k in range(no):
        cap = 468750.0
        if rng.random() < tight_links:
            cap = float(rng.integers(20, 120)) * 1344.0
        links.append({"a": f"o{k}", "b": "olt", "capacity_bps": cap})
    links += cl
    return {"nodes": nodes, "links": links}


def random_instance(seed: int, *, mode: str | None = None, app: str | None = None,
                    max_patients: int = 200, profiles=None, **kw):
    """A random in-bounds instance (<= 8 fog candidates, <= 6 BSs)."""
    rng = np.random.default_rng(seed)
    app = app or ("ecg" if rng.random() < 0.7 else "fall")
    mode = mode or ("foa" if rng.random() < 0.85 else "ca")
    a = get_app(app)
    hi = 60 if app == "ecg" else 12
    while True:
        doc = random_topology_doc(rng, app=app, patients=(1, hi), **kw)
        topo = load_topology(doc)
        total = sum(topo.patients(app).values())
        if total <= max_patients:
            break
    per_ps = int(rng.integers(max(1, total // 4), total + 1))
    a = replace(a, max_patients_per_ps=per_ps)
    ps_per_node = [1, 2, None][int(rng.integers(3))]
    if mode == "ca":
        ps_per_node = None
    profiles = profiles or load_profiles()
    # rates come from the full-population derivation, matching the West Leeds operating point
    base = get_app(app)
    pat_max = 669 if app == "ecg" else 140
    inst = make_instance(topo, a, mode, profiles=profiles, ps_per_node=ps_per_node,
                         pat_max=pat_max,
                         tau_p=processing_time(base, min(base.max_patients_per_ps, pat_max), 1))
    return inst

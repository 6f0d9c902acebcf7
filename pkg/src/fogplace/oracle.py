"""Brute-force reference optimum for small instances.

Every set of fog nodes is enumerated. For a fixed set the remaining choice
(how many servers at each node, which fog each patient uses and which BS
carries its upload and its feedback) is an integer program over joint
(clinic, upload BS, fog, feedback BS) patient counts, solved to proven
optimality. Sets are visited in order of a simple lower bound and skipped
once that bound cannot beat the best total found.

Prices are rebuilt here from the device profiles and every result is
re-scored by the flow-level evaluator, so nothing is shared with the
branch-and-bound solver beyond the routing rule.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .app_traffic import processing_time
from .energy_accounting import total_energy
from .exact_solver import SolveReport, SolverError
from .solution import PHASES, PlacementSolution
from .topology import NodeKind, ROUTE_KINDS, STORAGE_KINDS
from .validation import validate

__all__ = ["brute_force_oracle", "OracleError", "ORACLE_LIMITS"]

K = NodeKind

ORACLE_LIMITS = {"candidates": 8, "patients": 200, "base_stations": 6}

_NET = {K.BASE_STATION, K.ONU, K.OLT}
_UP = {K.CAS, K.AR, K.CR, K.CLR, K.CLS}
_STORE = {K.ONU, K.OLT, K.CAS, K.AR, K.CR, K.CLR, K.CLS, K.CS, K.CST}


class OracleError(ValueError):
    pass


class _Prices:
    """Per-patient and fixed energy (J, after PUE) rebuilt from the profiles."""

    def __init__(self, inst):
        self.inst = inst
        topo, ph, app = inst.topology, inst.phases, inst.app
        self.topo = topo
        self.taus = (ph.time_up_s, ph.time_fb_s, ph.time_st_s)
        self.rates = (ph.rate_up_bps, ph.rate_fb_bps, ph.rate_st_bps)
        flow_kinds = _NET | _UP if inst.mode == "ca" else _NET
        self.charged = (flow_kinds, flow_kinds, _STORE)
        window = sum(self.taus)
        ps = inst.profiles[app.ps_profile]
        # per-server and per-patient processing energy; tau_p is affine in
        # both counts so the split is exact
        t1 = processing_time(app, 1, 1)
        t_srv = processing_time(app, 0, 1)
        self.ps_server = ps.pue * (ps.p_idle * ps.idle_share * window + ps.p_max * t_srv)
        self.ps_patient = ps.pue * ps.p_max * (t1 - t_srv)
        if inst.switch:
            es = inst.profiles["es"]
            self.es_node = es.pue * es.p_idle * es.idle_share * window
            self.es_patient = es.pue * es.slope * sum(r * t for r, t in zip(self.rates, self.taus))
        else:
            self.es_node = self.es_patient = 0.0
        self._paths = {}

    def prof(self, v):
        return self.inst.profiles[self.topo.node(v).profile]

    def fixed(self, p, v):
        """Idle energy of node v for phase p (0 when not charged)."""
        if self.topo.kind(v) not in self.charged[p]:
            return 0.0
        pr = self.prof(v)
        return pr.pue * pr.redundancy * pr.p_idle * pr.idle_share * self.taus[p]

    def per_patient(self, p, v):
        kind = self.topo.kind(v)
        if kind not in self.charged[p]:
            return 0.0
        pr = self.prof(v)
        ph = self.inst.phases
        if kind == K.BASE_STATION:
            load = ph.ra if p == 0 else ph.rb
        elif kind == K.CST:
            load = self.rates[2] * self.taus[2]
        else:
            load = self.rates[p]
        slope = (pr.p_max - pr.p_idle) / pr.c_max
        return pr.pue * pr.redundancy * slope * load * self.taus[p]

    def path(self, a, b, kinds=ROUTE_KINDS):
        key = (a, b, kinds)
        if key not in self._paths:
            self._paths[key] = self.topo.min_hop_path(a, b, kinds)
        return self._paths[key]

    def storage_path(self, d):
        return self.path(d, self.topo.cloud_storage, STORAGE_KINDS)


def _check_bounds(inst):
    n_c = len(inst.candidates)
    n_p = inst.total_patients
    n_b = len(inst.topology.base_stations)
    lim = ORACLE_LIMITS
    if n_c > lim["candidates"] or n_p > lim["patients"] or n_b > lim["base_stations"]:
        raise OracleError(
            f"instance exceeds enumeration bound: {n_c} candidates, {n_p} patients, {n_b} BSs "
            f"(limits {lim['candidates']}, {lim['patients']}, {lim['base_stations']})")


def _per_server(inst) -> int:
    app = inst.app
    return min(app.max_patients_per_ps, math.floor(app.ps_storage_bits / app.analyzed_size_bits))


def _residual(inst, pr: _Prices, fogs: tuple, per_srv: int):
    """Optimal servers and patient routing for a fixed set of open fog nodes.

    Returns (total J, phi, joint counts) or None when infeasible.
    """
    topo, ph, app = inst.topology, inst.phases, inst.app
    clinics = inst.clinics
    pts = {s: inst.patients[s] for s in clinics}
    total = sum(pts.values())
    srv_cap = inst.ps_per_node if inst.ps_per_node is not None else math.ceil(total / per_srv)
    if len(fogs) * srv_cap * per_srv < total or len(fogs) > total:
        return None

    cols = []       # (s, j, d, jb)
    for s in clinics:
        bss = topo.serving_bs(s)
        for j in bss:
            for d in fogs:
                for jb in bss:
                    cols.append((s, j, d, jb))
    n_x = len(cols)
    phi0 = n_x
    n_phi = len(fogs)
    # activation flags per (phase, node) with an idle charge
    touch = defaultdict(list)       # (p, v) -> columns through v
    links = defaultdict(list)       # (p, u, v) -> columns
    cost = np.zeros(n_x)
    for i, (s, j, d, jb) in enumerate(cols):
        up = pr.path(j, d)
        down = pr.path(d, jb)
        c = pr.ps_patient + pr.es_patient
        for v in up:
            c += pr.per_patient(0, v)
            if pr.fixed(0, v) > 0:
                touch[(0, v)].append(i)
        for v in down:
            c += pr.per_patient(1, v)
            if pr.fixed(1, v) > 0:
                touch[(1, v)].append(i)
        for v in pr.storage_path(d):
            c += pr.per_patient(2, v)
        cost[i] = c
        for u, v in zip([s] + up, up):
            links[(0, u, v)].append(i)
        for u, v in zip(down, down[1:] + [s]):
            links[(1, u, v)].append(i)
    flags = sorted(touch)
    z0 = phi0 + n_phi
    n = z0 + len(flags)
    c_all = np.concatenate([cost, np.full(n_phi, pr.ps_server),
                            [pr.fixed(p, v) for p, v in flags]])
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    lo[phi0:z0] = 1
    hi[phi0:z0] = srv_cap
    hi[z0:] = 1

    A, rlo, rhi = [], [], []

    def row(coefs, a, b):
        A.append(coefs)
        rlo.append(a)
        rhi.append(b)

    by_clinic = defaultdict(list)
    by_fog = defaultdict(list)
    by_bs = [defaultdict(list), defaultdict(list)]
    for i, (s, j, d, jb) in enumerate(cols):
        by_clinic[s].append(i)
        by_fog[d].append(i)
        by_bs[0][j].append(i)
        by_bs[1][jb].append(i)
    for s in clinics:
        row({i: 1 for i in by_clinic[s]}, pts[s], pts[s])
    for k, d in enumerate(fogs):
        # each open node serves someone, within its servers' patient and
        # storage limits
        row({i: 1 for i in by_fog[d]}, 1, np.inf)
        row({**{i: 1 for i in by_fog[d]}, phi0 + k: -app.max_patients_per_ps}, -np.inf, 0)
        row({**{i: app.analyzed_size_bits for i in by_fog[d]}, phi0 + k: -app.ps_storage_bits},
            -np.inf, 0)
    for p, per in ((0, ph.ra), (1, ph.rb)):
        for j, idx in by_bs[p].items():
            row({i: per for i in idx}, -np.inf, app.max_prb)
    for (p, u, v), idx in links.items():
        row({i: pr.rates[p] for i in idx}, -np.inf, topo.capacity(u, v))
    st_link = defaultdict(list)
    for d in fogs:
        route = pr.storage_path(d)
        for u, v in zip(route, route[1:]):
            st_link[(u, v)].extend(by_fog[d])
    for (u, v), idx in st_link.items():
        row({i: pr.rates[2] for i in idx}, -np.inf, topo.capacity(u, v))
    for k, (p, v) in enumerate(flags):
        row({**{i: 1 for i in touch[(p, v)]}, z0 + k: -total}, -np.inf, 0)

    M = sparse.lil_matrix((len(A), n))
    for r, coefs in enumerate(A):
        for i, v in coefs.items():
            M[r, i] += v
    # storage chain idle and switch idle are fixed once the set is chosen
    st_nodes = {v for d in fogs for v in pr.storage_path(d)}
    const = sum(pr.fixed(2, v) for v in st_nodes) + pr.es_node * len(fogs)
    res = milp(c_all, constraints=LinearConstraint(M.tocsr(), rlo, rhi),
               integrality=np.ones(n), bounds=Bounds(lo, hi),
               options={"mip_rel_gap": 0.0, "presolve": True})
    if res.status == 2 or res.x is None:
        return None
    if res.status != 0:
        raise SolverError(f"oracle subproblem failed: {res.message}")
    x = np.round(res.x).astype(int)
    counts = {cols[i]: int(x[i]) for i in range(n_x) if x[i] > 0}
    phi = {d: int(x[phi0 + k]) for k, d in enumerate(fogs)}
    return float(c_all @ x) + const, phi, counts


def _build(inst, pr: _Prices, phi, counts) -> PlacementSolution:
    """Flow-level solution from joint patient counts."""
    topo, ph = inst.topology, inst.phases
    omega, raw_bs, fb_bs = defaultdict(int), defaultdict(int), defaultdict(int)
    for (s, j, d, jb), m in counts.items():
        omega[(s, d)] += m
        raw_bs[(s, j, d)] += m
        fb_bs[(s, jb, d)] += m
    flows = {p: defaultdict(float) for p in PHASES}
    for (s, j, d), m in raw_bs.items():
        path = [s] + pr.path(j, d)
        for u, v in zip(path, path[1:]):
            flows["raw"][(s, d, u, v)] += m * ph.rate_up_bps
    for (s, jb, d), m in fb_bs.items():
        path = pr.path(d, jb) + [s]
        for u, v in zip(path, path[1:]):
            flows["feedback"][(d, s, u, v)] += m * ph.rate_fb_bps
    load = defaultdict(int)
    for (_, d), m in omega.items():
        load[d] += m
    cst = topo.cloud_storage
    for d, m in load.items():
        path = pr.storage_path(d)
        for u, v in zip(path, path[1:]):
            flows["storage"][(d, cst, u, v)] += m * ph.rate_st_bps
    tau_p = {d: processing_time(inst.app, load.get(d, 0), k) for d, k in phi.items()}
    return PlacementSolution(dict(omega), dict(phi), dict(raw_bs), dict(fb_bs),
                             {p: dict(f) for p, f in flows.items()}, tau_p, inst.switch)


def _lower_bound(inst, pr: _Prices, fogs, per_srv, min_servers):
    pts = {s: inst.patients[s] for s in inst.clinics}
    lb = pr.ps_server * max(min_servers, len(fogs)) + pr.es_node * len(fogs)
    lb += sum(pts.values()) * (pr.ps_patient + pr.es_patient)
    st_nodes = {v for d in fogs for v in pr.storage_path(d)}
    lb += sum(pr.fixed(2, v) for v in st_nodes)
    st = min(sum(pr.per_patient(2, v) for v in pr.storage_path(d)) for d in fogs)
    for s, m in pts.items():
        bss = inst.topology.serving_bs(s)
        up = min(sum(pr.per_patient(0, v) for v in pr.path(j, d)) for j in bss for d in fogs)
        down = min(sum(pr.per_patient(1, v) for v in pr.path(d, j)) for j in bss for d in fogs)
        lb += m * (up + down + st)
    return lb


def _tie_key(phi, cands):
    return tuple(-phi.get(d, 0) for d in sorted(cands))


def brute_force_oracle(inst, check: bool = True) -> SolveReport:
    """True optimum by enumeration of open fog sets; raises OracleError
    outside the enumeration bound."""
    t0 = time.perf_counter()
    _check_bounds(inst)
    pr = _Prices(inst)
    cands = list(inst.candidates)
    total = inst.total_patients
    if total == 0:
        sol = _build(inst, pr, {}, {})
        return SolveReport(sol, 0.0, 0.0, 0.0, 0, "optimal", time.perf_counter() - t0,
                           "oracle", total_energy(sol, inst))
    per_srv = _per_server(inst)
    if per_srv <= 0:
        return SolveReport(None, math.inf, math.inf, math.inf, 0, "infeasible",
                           time.perf_counter() - t0, "oracle")
    min_servers = math.ceil(total / per_srv)
    sets = []
    for k in range(1, min(len(cands), total) + 1):
        for fogs in itertools.combinations(cands, k):
            sets.append((_lower_bound(inst, pr, fogs, per_srv, min_servers), fogs))
    sets.sort()
    best, best_val, best_key, visited = None, math.inf, None, 0
    for lb, fogs in sets:
        if lb > best_val + 1e-9 * abs(best_val):
            break
        visited += 1
        out = _residual(inst, pr, fogs, per_srv)
        if out is None:
            continue
        _, phi, counts = out
        sol = _build(inst, pr, phi, counts)
        # the evaluator has the final word on the price
        val = total_energy(sol, inst).total
        tol = 1e-9 * max(1.0, abs(val))
        key = _tie_key(phi, cands)
        if val < best_val - tol or (abs(val - best_val) <= tol and key < best_key):
            best, best_val, best_key = sol, min(val, best_val), key
    wall = time.perf_counter() - t0
    if best is None:
        return SolveReport(None, math.inf, math.inf, math.inf, visited, "infeasible", wall, "oracle")
    breakdown = total_energy(best, inst)
    if check:
        rep = validate(best, inst)
        if not rep.ok:
            raise SolverError(f"oracle solution failed validation:\n{rep}")
    return SolveReport(best, breakdown.total, breakdown.total, 0.0, visited, "optimal", wall,
                       "oracle", breakdown)

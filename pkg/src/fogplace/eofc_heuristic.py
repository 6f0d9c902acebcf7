"""EOFC: greedy real-time placement heuristic.

1. Clinics are taken smallest first. Each one is packed onto as few of its
   BSs as possible, preferring BSs already in use (fewest clinics in range
   first) and then unused ones (most clinics in range first). Upload and
   feedback get separate passes with separate ledgers.
2. Fog candidates are the ONUs behind the chosen BSs plus the OLT (the
   cloud switch in CA mode). Starting from the fewest nodes that can hold
   the required servers, every combination of k nodes is tried: BS loads,
   largest first, go to the nearest node with spare capacity. k grows while
   the best total keeps falling.
"""
from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import maximum_flow

from . import _kernels
from .energy_accounting import total_energy
from .exact_solver import SolveReport, SolverError
from .solution import PlacementSolution, build_solution
from .topology import NodeKind, ROUTE_KINDS, STORAGE_KINDS
from .validation import validate

__all__ = ["HeuristicError", "HeuristicState", "assign_clinics_to_bs", "place_servers",
           "evaluate_combination", "run_eofc", "DEFAULT_BUDGET"]

K = NodeKind
DEFAULT_BUDGET = 10_000
_REL_TIE = 1e-9


class HeuristicError(ValueError):
    pass


@dataclass
class HeuristicState:
    clinic_order: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)         # (clinic, bs) -> patients
    feedback: dict = field(default_factory=dict)
    prb_raw: dict = field(default_factory=dict)     # bs -> PRBs in use
    prb_fb: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    tried: dict = field(default_factory=dict)       # k -> combinations scored
    best_by_k: dict = field(default_factory=dict)   # k -> (energy, combination)
    best: PlacementSolution | None = None
    energy: float = math.inf


def _link_patients(topo, u, v, rate) -> int:
    return math.floor(topo.capacity(u, v) / rate + 1e-9)


def assign_clinics_to_bs(inst, direction: str = "raw") -> dict:
    """Patients of each clinic per BS, as {(clinic, bs): count}."""
    if direction not in ("raw", "feedback"):
        raise ValueError("direction is 'raw' or 'feedback'")
    p = 0 if direction == "raw" else 1
    topo = inst.topology
    rate = inst.rate(p)
    per = inst.phases.ra if p == 0 else inst.phases.rb
    pts = {s: inst.patients[s] for s in inst.clinics}
    # a BS is limited by its PRB budget and by its link to the ONU
    room = {}
    for j in topo.base_stations:
        onu = topo.parent_onu(j)
        hop = (j, onu) if p == 0 else (onu, j)
        room[j] = min(inst.app.max_prb // per, _link_patients(topo, *hop, rate))
    used = set()
    out = {}
    order = sorted(pts, key=lambda c: (pts[c], c))
    for pos, s in enumerate(order):
        need = pts[s]
        cap = {}
        for j in topo.serving_bs(s):
            hop = (s, j) if p == 0 else (j, s)
            c = min(room[j], _link_patients(topo, *hop, rate))
            if c > 0:
                cap[j] = c
        active = sorted((j for j in cap if j in used), key=lambda j: (topo.bs_degree(j), j))
        fresh = sorted((j for j in cap if j not in used), key=lambda j: (-topo.bs_degree(j), j))
        pref = active + fresh
        rest = [c for c in order[pos + 1:]]
        chosen = None
        for k in range(1, len(pref) + 1):
            for combo in itertools.combinations(pref, k):
                if sum(cap[j] for j in combo) < need:
                    continue
                take = _fill(combo, cap, need)
                after = dict(room)
                for j, n in take.items():
                    after[j] -= n
                # keep the packing only if the clinics still to come fit
                if _servable(inst, rest, after, p, rate):
                    chosen = take
                    break
            if chosen:
                break
        if chosen is None:
            raise HeuristicError(f"{direction}: BSs in range of {s} cannot carry {need} patients")
        for j, n in chosen.items():
            out[(s, j)] = n
            room[j] -= n
            used.add(j)
    return out


def _fill(combo, cap, need) -> dict:
    take = {}
    for j in combo:
        n = min(need, cap[j])
        if n:
            take[j] = n
            need -= n
    return take


def _servable(inst, clinics, room, p, rate) -> bool:
    """Max-flow test: can the listed clinics still be spread over the BSs?"""
    if not clinics:
        return True
    topo = inst.topology
    bss = sorted(room)
    n_c = len(clinics)
    src, sink = 0, n_c + len(bss) + 1
    at = {j: n_c + 1 + i for i, j in enumerate(bss)}
    rows, cols, caps = [], [], []
    for i, s in enumerate(clinics):
        rows.append(src)
        cols.append(i + 1)
        caps.append(inst.patients[s])
        for j in topo.serving_bs(s):
            hop = (s, j) if p == 0 else (j, s)
            c = _link_patients(topo, *hop, rate)
            if c > 0 and room.get(j, 0) > 0:
                rows.append(i + 1)
                cols.append(at[j])
                caps.append(c)
    for j in bss:
        if room[j] > 0:
            rows.append(at[j])
            cols.append(sink)
            caps.append(room[j])
    g = sparse.csr_matrix((np.array(caps, dtype=np.int32), (rows, cols)), shape=(sink + 1, sink + 1))
    flow = maximum_flow(g, src, sink).flow_value
    return flow >= sum(inst.patients[s] for s in clinics)


class _Scorer:
    """Routes patients for a node combination and prices the result."""

    def __init__(self, inst, raw, fb):
        self.inst = inst
        self.topo = topo = inst.topology
        self.raw = raw
        self.fb = fb
        t = inst.tables
        self.fixed, self.lin = t.phase_coeffs()
        self.idx = t.index
        self.tables = t
        self.rates = (inst.phases.rate_up_bps, inst.phases.rate_fb_bps, inst.phases.rate_st_bps)
        self.per_ps = inst.per_ps
        self.node_cap = inst.ps_cap * inst.per_ps
        self.order = sorted({s for s, _ in raw}, key=lambda c: (inst.patients[c], c))
        bs_load = defaultdict(int)
        for (_, j), n in raw.items():
            bs_load[j] += n
        self.bs_order = sorted(bs_load, key=lambda j: (-bs_load[j], j))
        self.bs_load = dict(bs_load)
        self._paths = {}

    def path(self, a, b, kinds=ROUTE_KINDS):
        key = (a, b, kinds)
        if key not in self._paths:
            self._paths[key] = self.topo.min_hop_path(a, b, kinds)
        return self._paths[key]

    def _fit(self, rem, path, p):
        fit = math.inf
        for e in zip(path, path[1:]):
            if e not in rem:
                rem[e] = _link_patients(self.topo, *e, self.rates[p])
            fit = min(fit, rem[e])
        return fit

    def route(self, combo):
        """Patient routing for the open nodes ``combo``; None if it does not fit."""
        topo = self.topo
        cap = {d: self.node_cap for d in combo}
        rem = [dict(), dict(), dict()]
        raw_bs = defaultdict(int)
        omega = defaultdict(int)
        for j in self.bs_order:
            near = sorted(combo, key=lambda d: (topo.hops(j, d), d))
            for s in self.order:
                m = self.raw.get((s, j), 0)
                for d in near:
                    if not m:
                        break
                    path = self.path(j, d)
                    take = min(m, cap[d], self._fit(rem[0], path, 0))
                    if take <= 0:
                        continue
                    for e in zip(path, path[1:]):
                        rem[0][e] -= take
                    cap[d] -= take
                    raw_bs[(s, j, d)] += take
                    omega[(s, d)] += take
                    m -= take
                if m:
                    return None
        load = defaultdict(int)
        for (_, d), n in omega.items():
            load[d] += n
        for d, n in load.items():
            path = self.path(d, topo.cloud_storage, STORAGE_KINDS)
            if self._fit(rem[2], path, 2) < n:
                return None
            for e in zip(path, path[1:]):
                rem[2][e] -= n
        fb_bs = defaultdict(int)
        for s in self.order:
            parts = [[jb, n] for (c, jb), n in sorted(self.fb.items(),
                                                      key=lambda kv: kv[0][1]) if c == s]
            for d in sorted(combo):
                need = omega.get((s, d), 0)
                for part in parts:
                    if not need:
                        break
                    jb, left = part
                    if not left:
                        continue
                    path = self.path(d, jb)
                    take = min(need, left, self._fit(rem[1], path, 1))
                    if take <= 0:
                        continue
                    for e in zip(path, path[1:]):
                        rem[1][e] -= take
                    part[1] -= take
                    fb_bs[(s, jb, d)] += take
                    need -= take
                if need:
                    return None
        phi = {d: math.ceil(n / self.per_ps) for d, n in load.items() if n > 0}
        return phi, dict(raw_bs), dict(fb_bs), dict(load)

    def loads(self, routed) -> np.ndarray:
        """Patients per phase and network node, (3, n)."""
        phi, raw_bs, fb_bs, load = routed
        idx = self.idx
        out = np.zeros((3, len(idx)))
        groups = (
            [(self.path(j, d), n) for (s, j, d), n in raw_bs.items()],
            [(self.path(d, jb), n) for (s, jb, d), n in fb_bs.items()],
            [(self.path(d, self.topo.cloud_storage, STORAGE_KINDS), n) for d, n in load.items()],
        )
        for p, items in enumerate(groups):
            if not items:
                continue
            starts = np.zeros(len(items) + 1, dtype=np.int64)
            starts[1:] = np.cumsum([len(path) for path, _ in items])
            nodes = np.fromiter((idx[v] for path, _ in items for v in path), dtype=np.int64,
                                count=int(starts[-1]))
            counts = np.array([float(n) for _, n in items])
            _kernels.accumulate_paths(out[p], starts, nodes, counts)
        return out

    def extra(self, routed) -> float:
        """Processing and switch energy, which do not depend on routes."""
        phi, _, _, load = routed
        t = self.tables
        total = sum(load.values())
        return (t.ps_fixed * sum(phi.values()) + t.ps_patient * total
                + t.es_fixed * len(phi) + t.es_patient * total)


def _candidates(inst, raw, fb) -> list:
    topo = inst.topology
    if inst.mode == "ca":
        return sorted(inst.candidates)
    onus = {topo.parent_onu(j) for _, j in list(raw) + list(fb)}
    return sorted(d for d in inst.candidates if d in onus or topo.kind(d) == K.OLT)


def _greedy_combo(inst, cands, raw, k):
    """OLT plus the ONUs behind the most upload traffic."""
    topo = inst.topology
    traffic = defaultdict(int)
    for (_, j), n in raw.items():
        traffic[topo.parent_onu(j)] += n
    olts = [d for d in cands if topo.kind(d) != K.ONU]
    onus = sorted((d for d in cands if topo.kind(d) == K.ONU), key=lambda d: (-traffic[d], d))
    return tuple(sorted((olts + onus)[:k]))


def evaluate_combination(inst, combo, raw=None, fb=None):
    """(solution, energy) for one node combination, or None if it does not fit."""
    raw = assign_clinics_to_bs(inst, "raw") if raw is None else raw
    fb = assign_clinics_to_bs(inst, "feedback") if fb is None else fb
    sc = _Scorer(inst, raw, fb)
    routed = sc.route(tuple(combo))
    if routed is None:
        return None
    sol = build_solution(inst, routed[0], routed[1], routed[2])
    return sol, total_energy(sol, inst).total


def place_servers(inst, raw: dict, fb: dict, budget: int = DEFAULT_BUDGET,
                  state: HeuristicState | None = None) -> PlacementSolution:
    state = state or HeuristicState()
    sc = _Scorer(inst, raw, fb)
    base = _candidates(inst, raw, fb)
    best = _search(inst, sc, base, raw, budget, state) if base else None
    if best is None and len(base) < len(inst.candidates):
        # the nodes behind the chosen BSs cannot host everyone: open the
        # search to every candidate
        state.tried.clear()
        state.best_by_k.clear()
        best = _search(inst, sc, sorted(inst.candidates), raw, budget, state)
    if best is None:
        raise HeuristicError("no candidate combination can host all patients")
    phi, raw_bs, fb_bs, _ = best[1]
    state.best = build_solution(inst, phi, raw_bs, fb_bs)
    state.energy = best[0]
    return state.best


def _search(inst, sc, cands, raw, budget, state):
    state.candidates = cands
    k0 = max(1, math.ceil(inst.min_servers / inst.ps_cap))
    best = None         # (energy, routed)
    for k in range(k0, len(cands) + 1):
        if math.comb(len(cands), k) <= budget:
            combos = list(itertools.combinations(cands, k))
        else:
            combos = [_greedy_combo(inst, cands, raw, k)]
        routed, patterns, extras = [], [], []
        for combo in combos:
            r = sc.route(combo)
            if r is None:
                continue
            routed.append(r)
            patterns.append(sc.loads(r))
            extras.append(sc.extra(r))
        state.tried[k] = len(combos)
        if not routed:
            if best is None:
                continue
            break
        energy = _kernels.batch_phase_energy(np.stack(patterns), sc.fixed, sc.lin) + np.array(extras)
        low = energy.min()
        pick = int(np.flatnonzero(energy <= low + _REL_TIE * abs(low))[0])
        state.best_by_k[k] = (float(energy[pick]), tuple(sorted(routed[pick][0])))
        if best is None or energy[pick] < best[0] - _REL_TIE * abs(best[0]):
            best = (float(energy[pick]), routed[pick])
            continue
        break
    return best


def run_eofc(inst, budget: int = DEFAULT_BUDGET, check: bool = True) -> SolveReport:
    t0 = time.perf_counter()
    state = HeuristicState()
    if inst.total_patients == 0:
        sol = build_solution(inst, {}, {}, {})
        return SolveReport(sol, 0.0, 0.0, 0.0, 0, "feasible", time.perf_counter() - t0,
                           "heuristic", total_energy(sol, inst))
    if inst.per_ps <= 0:
        raise HeuristicError("PS capacity is zero")
    state.clinic_order = sorted(inst.clinics, key=lambda c: (inst.patients[c], c))
    state.raw = assign_clinics_to_bs(inst, "raw")
    state.feedback = assign_clinics_to_bs(inst, "feedback")
    for (_, j), n in state.raw.items():
        state.prb_raw[j] = state.prb_raw.get(j, 0) + n * inst.phases.ra
    for (_, j), n in state.feedback.items():
        state.prb_fb[j] = state.prb_fb.get(j, 0) + n * inst.phases.rb
    sol = place_servers(inst, state.raw, state.feedback, budget, state)
    breakdown = total_energy(sol, inst)
    if check:
        rep = validate(sol, inst)
        if not rep.ok:
            raise SolverError(f"heuristic solution failed validation:\n{rep}")
        if abs(breakdown.total - state.energy) > 1e-9 * max(1.0, breakdown.total):
            raise SolverError(f"heuristic score {state.energy} disagrees with evaluator "
                              f"{breakdown.total}")
    # no lower bound is proven; energy is non-negative
    obj = breakdown.total
    return SolveReport(sol, obj, 0.0, 1.0 if obj > 0 else 0.0, sum(state.tried.values()),
                       "feasible", time.perf_counter() - t0, "heuristic", breakdown)

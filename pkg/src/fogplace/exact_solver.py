"""MILP assembly and an exact branch-and-bound solver.

The model follows the placement MILP: allocation, traffic definitions,
node totals, link capacities, big-M activations, the XOR linearisation for
storage-phase activation, base-station PRB budgets, PS capacities and the
processing-time definition. Routes are the min-hop routes of the instance
(the GPON tree and the metro/core chain leave no routing freedom once a
patient's BS and fog node are fixed), so traffic is expressed per
(clinic, BS, fog) patient count and flow conservation holds by construction.

LP relaxations are solved with HiGHS (highspy, or scipy.optimize.linprog when
highspy is missing); the branching, bounding and incumbent logic is our own.
"""
from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .energy_accounting import total_energy
from .solution import PlacementSolution, build_solution
from .topology import NodeKind
from .validation import validate

__all__ = [
    "MilpModel",
    "SolveReport",
    "SolverError",
    "assemble",
    "solve_exact",
    "solution_from_values",
    "lp_name",
    "placement_lower_bounds",
]

log = logging.getLogger(__name__)
K = NodeKind

ABS_TOL = 1e-6      # J, optimality tolerance
INT_TOL = 1e-6


class SolverError(ValueError):
    pass


_BAD = re.compile(r"[^A-Za-z0-9_.]")


def lp_name(symbol: str, *ids: str) -> str:
    """Stable LP-safe variable name ``symbol_id1_id2``."""
    return "_".join([symbol] + [_BAD.sub(".", i) for i in ids])


@dataclass
class MilpModel:
    inst: object
    names: list = field(default_factory=list)
    vtype: list = field(default_factory=list)     # "C", "I" or "B"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: dict = field(default_factory=dict)       # col -> J per unit
    rows: list = field(default_factory=list)      # (name, {col: coef}, sense, rhs)
    col: dict = field(default_factory=dict)       # (symbol, ids...) -> col

    def var(self, key: tuple, vtype: str, lb: float, ub: float) -> int:
        if key in self.col:
            raise SolverError(f"duplicate variable {key}")
        j = len(self.names)
        self.names.append(lp_name(*key))
        self.vtype.append(vtype)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.col[key] = j
        return j

    def row(self, name: str, coefs: dict, sense: str, rhs: float) -> None:
        self.rows.append((name, {k: v for k, v in coefs.items() if v != 0}, sense, float(rhs)))

    def cost(self, key: tuple, c: float) -> None:
        j = self.col[key]
        self.obj[j] = self.obj.get(j, 0.0) + c

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.obj.items():
            c[j] = v
        return c

    def matrix(self):
        data, ri, ci = [], [], []
        for r, (_, coefs, _, _) in enumerate(self.rows):
            for j, v in coefs.items():
                ri.append(r)
                ci.append(j)
                data.append(v)
        return sparse.csr_matrix((data, (ri, ci)), shape=(self.n_rows, self.n_vars))

    def evaluate(self, values: dict) -> float:
        """Objective at a name -> value mapping (missing names are zero)."""
        return sum(c * values.get(self.names[j], 0.0) for j, c in self.obj.items())


@dataclass
class SolveReport:
    solution: PlacementSolution | None
    objective: float
    bound: float
    gap: float
    node_count: int
    status: str
    wall_s: float = 0.0
    solver: str = ""
    breakdown: object = None

    def to_dict(self) -> dict:
        return {
            "status": self.status, "objective_J": self.objective, "bound_J": self.bound,
            "gap": self.gap, "nodes": self.node_count, "solver": self.solver,
            "wall_s": self.wall_s,
            "solution": self.solution.to_dict() if self.solution else None,
        }


def _types(inst):
    """(clinic, bs, fog) combinations a patient may use."""
    topo = inst.topology
    return [(s, j, d) for s in inst.clinics for j in topo.serving_bs(s) for d in inst.candidates]


def assemble(inst) -> MilpModel:
    """Build the placement MILP for ``inst``."""
    topo, ph, app = inst.topology, inst.phases, inst.app
    m = MilpModel(inst)
    cands = inst.candidates
    if inst.clinics and not cands:
        raise SolverError("unconnected candidate set")
    pts = {s: inst.patients[s] for s in inst.clinics}
    total = sum(pts.values())
    cap = inst.ps_cap
    types = _types(inst)
    # reachability of every candidate from every serving BS
    for s, j, d in types:
        try:
            inst.raw_route(s, j, d)
            inst.storage_route(d)
        except Exception as exc:
            raise SolverError(f"unconnected candidate {d}: {exc}") from None

    rates = (ph.rate_up_bps, ph.rate_fb_bps, ph.rate_st_bps)
    taus = (ph.time_up_s, ph.time_fb_s, ph.time_st_s)
    if inst.big_m is not None:
        need = total * max(rates)
        if not inst.big_m > need:
            raise SolverError(f"big_m too small: {inst.big_m} <= largest phase traffic {need}")

    # placement ------------------------------------------------------------
    for d in cands:
        m.var(("Y", d), "B", 0, 1)
        m.var(("phi", d), "I", 0, cap)
        m.var(("taup", d), "C", 0, math.inf)
    for s in inst.clinics:
        for d in cands:
            m.var(("omega", s, d), "I", 0, pts[s])
    for s, j, d in types:
        m.var(("xa", s, j, d), "I", 0, pts[s])
    for s, j, d in types:
        m.var(("xb", s, j, d), "I", 0, pts[s])
    bss = sorted({j for _, j, _ in types})
    for s in inst.clinics:
        for j in topo.serving_bs(s):
            m.var(("Pa", s, j), "I", 0, pts[s])
            m.var(("Pb", s, j), "I", 0, pts[s])
    for j in bss:
        m.var(("betaa", j), "I", 0, app.max_prb)
        m.var(("betab", j), "I", 0, app.max_prb)

    C = m.col
    for s in inst.clinics:
        for d in cands:
            m.row(f"c32_{lp_name('', s, d)[1:]}", {C[("omega", s, d)]: 1, C[("Y", d)]: -pts[s]}, "<=", 0)
        m.row(f"c33_{lp_name('', s)[1:]}", {C[("omega", s, d)]: 1 for d in cands}, "=", pts[s])
        for d in cands:
            for sym, tag in (("xa", "c34"), ("xb", "c35")):
                coefs = {C[(sym, s, j, d)]: 1 for j in topo.serving_bs(s)}
                coefs[C[("omega", s, d)]] = -1
                m.row(f"{tag}_{lp_name('', s, d)[1:]}", coefs, "=", 0)
    for d in cands:
        m.row(f"cY1_{lp_name('', d)[1:]}", {C[("phi", d)]: 1, C[("Y", d)]: -cap}, "<=", 0)
        m.row(f"cY2_{lp_name('', d)[1:]}", {C[("phi", d)]: 1, C[("Y", d)]: -1}, ">=", 0)
        served = {C[("omega", s, d)]: 1 for s in inst.clinics}
        m.row(f"c63_{lp_name('', d)[1:]}", {**served, C[("phi", d)]: -app.max_patients_per_ps}, "<=", 0)
        m.row(f"c65_{lp_name('', d)[1:]}",
              {**{k: app.analyzed_size_bits for k in served}, C[("phi", d)]: -app.ps_storage_bits},
              "<=", 0)
        if app.per_frame_proc_s is not None:
            coefs = {k: -app.per_recording_proc_s for k in served}
        else:
            coefs = {k: -app.proc_slope for k in served}
            coefs[C[("phi", d)]] = -app.proc_intercept
        coefs[C[("taup", d)]] = 1
        m.row(f"c64_{lp_name('', d)[1:]}", coefs, "=", 0)

    # base stations ---------------------------------------------------------
    for s in inst.clinics:
        for j in topo.serving_bs(s):
            for sym, x, tag in (("Pa", "xa", "c55"), ("Pb", "xb", "c59")):
                coefs = {C[(x, s, j, d)]: -1 for d in cands}
                coefs[C[(sym, s, j)]] = 1
                m.row(f"{tag}_{lp_name('', s, j)[1:]}", coefs, "=", 0)
        for sym, tag in (("Pa", "c56"), ("Pb", "c60")):
            m.row(f"{tag}_{lp_name('', s)[1:]}", {C[(sym, s, j)]: 1 for j in topo.serving_bs(s)},
                  "=", pts[s])
    for j in bss:
        users = [s for s in inst.clinics if j in topo.serving_bs(s)]
        for beta, sym, per, tag in (("betaa", "Pa", ph.ra, "c57"), ("betab", "Pb", ph.rb, "c61")):
            coefs = {C[(sym, s, j)]: -per for s in users}
            coefs[C[(beta, j)]] = 1
            m.row(f"{tag}_{lp_name('', j)[1:]}", coefs, "=", 0)
            m.row(f"c{int(tag[1:]) + 1}_{lp_name('', j)[1:]}", {C[(beta, j)]: 1}, "<=", app.max_prb)

    # node totals and link loads -----------------------------------------------
    # phase 0: incoming upload, phase 1: outgoing feedback
    node_terms = [dict(), dict()]
    link_terms = [dict(), dict(), dict()]
    node_pat = [dict(), dict()]
    for s, j, d in types:
        up = inst.raw_route(s, j, d)
        for v in up[1:]:
            node_terms[0].setdefault(v, {})[C[("xa", s, j, d)]] = rates[0]
            node_pat[0].setdefault(v, set()).add(s)
        for e in zip(up, up[1:]):
            link_terms[0].setdefault(e, {})[C[("xa", s, j, d)]] = rates[0]
        down = inst.fb_route(s, j, d)
        for v in down[:-1]:
            node_terms[1].setdefault(v, {})[C[("xb", s, j, d)]] = rates[1]
            node_pat[1].setdefault(v, set()).add(s)
        for e in zip(down, down[1:]):
            link_terms[1].setdefault(e, {})[C[("xb", s, j, d)]] = rates[1]
    st_out, st_in, st_pat = {}, {}, {}
    for d in cands:
        route = inst.storage_route(d)
        cols = {C[("omega", s, d)]: rates[2] for s in inst.clinics}
        for v in route[:-1]:
            st_out.setdefault(v, {}).update(cols)
        for v in route[1:]:
            st_in.setdefault(v, {}).update(cols)
        for v in route:
            st_pat.setdefault(v, set()).update(inst.clinics)
        for e in zip(route, route[1:]):
            link_terms[2].setdefault(e, {}).update(cols)

    def big_m(patients, rate):
        return inst.big_m if inst.big_m is not None else max(rate * patients, 1.0)

    for p, (sym, zsym, tag) in enumerate((("P", "za", "c40"), ("F", "zb", "c41"))):
        for v in [n for n in inst.network_nodes if n in node_terms[p]]:
            m.var((sym, v), "C", 0, math.inf)
            m.var((zsym, v), "B", 0, 1)
            coefs = {k: -c for k, c in node_terms[p][v].items()}
            coefs[C[(sym, v)]] = 1
            m.row(f"{tag}_{lp_name('', v)[1:]}", coefs, "=", 0)
            M = big_m(sum(pts[s] for s in node_pat[p][v]), rates[p])
            m.row(f"c{46 + 2 * p}_{lp_name('', v)[1:]}", {C[(sym, v)]: 1, C[(zsym, v)]: -M}, "<=", 0)
            m.row(f"c{47 + 2 * p}_{lp_name('', v)[1:]}", {C[(sym, v)]: 1, C[(zsym, v)]: -1}, ">=", 0)
    for v in [n for n in inst.network_nodes if n in st_pat]:
        m.var(("S", v), "C", 0, math.inf)
        for z in ("thc", "vthc", "zc", "nu"):
            m.var((z, v), "B", 0, 1)
        M = big_m(sum(pts[s] for s in st_pat[v]), rates[2])
        # S_i: incoming plus own-source storage traffic
        coefs = {}
        for k, c in st_in.get(v, {}).items():
            coefs[k] = coefs.get(k, 0.0) - c
        if v in cands:
            for s in inst.clinics:
                k = C[("omega", s, v)]
                coefs[k] = coefs.get(k, 0.0) - rates[2]
        coefs[C[("S", v)]] = 1
        m.row(f"c42_{lp_name('', v)[1:]}", coefs, "=", 0)
        for z, terms, tag in (("thc", st_out.get(v, {}), "c50"), ("vthc", st_in.get(v, {}), "c52")):
            if terms:
                m.row(f"{tag}_{lp_name('', v)[1:]}", {**terms, C[(z, v)]: -M}, "<=", 0)
                m.row(f"c{int(tag[1:]) + 1}_{lp_name('', v)[1:]}", {**terms, C[(z, v)]: -1}, ">=", 0)
            else:
                m.ub[C[(z, v)]] = 0.0
        m.row(f"c54_{lp_name('', v)[1:]}",
              {C[("thc", v)]: 1, C[("vthc", v)]: 1, C[("zc", v)]: -2, C[("nu", v)]: 1}, "=", 0)

    for p, tag in enumerate(("c43", "c44", "c45")):
        for (u, v), terms in sorted(link_terms[p].items()):
            m.row(f"{tag}_{lp_name('', u, v)[1:]}", terms, "<=", topo.capacity(u, v))

    # objective -------------------------------------------------------------
    charged = inst.tables.part
    idx = inst.tables.index
    for v in inst.network_nodes:
        prof = inst.profile_of(v)
        idle = prof.p_idle * prof.idle_share
        w = prof.pue * prof.redundancy
        kind = topo.kind(v)
        for p, (sym, zsym, beta) in enumerate((("P", "za", "betaa"), ("F", "zb", "betab"))):
            if (sym, v) not in C or not charged[p, idx[v]]:
                continue
            m.cost((zsym, v), w * idle * taus[p])
            if kind == K.BASE_STATION:
                m.cost((beta, v), w * prof.slope * taus[p])
            else:
                m.cost((sym, v), w * prof.slope * taus[p])
        if ("S", v) in C and charged[2, idx[v]]:
            m.cost(("zc", v), w * idle * taus[2])
            scale = taus[2] if kind == K.CST else 1.0
            m.cost(("S", v), w * prof.slope * scale * taus[2])
    ps = inst.profiles[app.ps_profile]
    window = sum(taus)
    es = inst.profiles["es"]
    for d in cands:
        m.cost(("phi", d), ps.pue * ps.p_idle * ps.idle_share * window)
        m.cost(("taup", d), ps.pue * ps.p_max)
        if inst.switch:
            m.cost(("Y", d), es.pue * es.p_idle * es.idle_share * window)
            per = es.pue * es.slope * sum(r * t for r, t in zip(rates, taus))
            for s in inst.clinics:
                m.cost(("omega", s, d), per)
    return m


def solution_from_values(model: MilpModel, values) -> PlacementSolution:
    """Rebuild a flow-level solution from variable values (array or name map)."""
    if not isinstance(values, dict):
        values = {n: float(v) for n, v in zip(model.names, values)}
    inst = model.inst
    get = lambda key: values.get(model.names[model.col[key]], 0.0)
    phi = {d: int(round(get(("phi", d)))) for d in inst.candidates}
    raw, fb = {}, {}
    for s, j, d in _types(inst):
        a = int(round(get(("xa", s, j, d))))
        b = int(round(get(("xb", s, j, d))))
        if a:
            raw[(s, j, d)] = a
        if b:
            fb[(s, j, d)] = b
    sol = build_solution(inst, phi, raw, fb)
    acts = {}
    for z in ("za", "zb", "thc", "vthc", "zc", "nu"):
        acts[z] = {key[1]: int(round(values.get(model.names[c], 0.0)))
                   for key, c in model.col.items() if key[0] == z}
    sol.activations = acts
    return sol




# ---------------------------------------------------------------------------
# branch and bound on the compact form
#
# Node totals, PRB counts, processing times and the storage XOR flags are
# affine in the patient counts, so they are substituted out. Activation
# flags only need "flag >= traffic indicator" because they carry cost.
# Everything is in patient units, which keeps the relaxations well scaled.

try:
    import highspy
except ImportError:     # pragma: no cover - exercised only without highspy
    highspy = None


class _Compact:
    def __init__(self, inst):
        self.inst = inst
        t = inst.tables
        fixed, lin = t.phase_coeffs()
        idx = t.index
        topo = inst.topology
        pts = {s: inst.patients[s] for s in inst.clinics}
        cands = inst.candidates
        cap = inst.ps_cap
        ph = inst.phases
        self.keys, lb, ub, cost, isint = [], [], [], [], []

        def var(key, lo, hi, c, integer=True):
            self.keys.append(key)
            lb.append(lo)
            ub.append(hi)
            cost.append(c)
            isint.append(integer)
            return len(self.keys) - 1

        col = {}
        st_lin = {d: sum(lin[2, idx[v]] for v in inst.storage_route(d)) for d in cands}
        for d in cands:
            col[("Y", d)] = var(("Y", d), 0, 1, t.es_fixed)
            col[("phi", d)] = var(("phi", d), 0, cap, t.ps_fixed)
        for s in inst.clinics:
            for d in cands:
                col[("omega", s, d)] = var(("omega", s, d), 0, pts[s],
                                           st_lin[d] + t.ps_patient + t.es_patient)
        self.types = _types(inst)
        rates = (ph.rate_up_bps, ph.rate_fb_bps, ph.rate_st_bps)

        def limit(p, u, v):
            return math.floor(topo.capacity(u, v) / rates[p] + 1e-9)

        # column bounds tightened by the BS budget and every link on the route
        routes, col_ub = {}, {}
        for s, j, d in self.types:
            up = inst.raw_route(s, j, d)[1:]
            down = inst.fb_route(s, j, d)[:-1]
            routes[(s, j, d)] = (up, down)
            for p, path in enumerate(([s] + up, down + [s])):
                col_ub[(p, s, j, d)] = min([pts[s], inst.bs_cap(p)]
                                           + [limit(p, u, v) for u, v in zip(path, path[1:])])
        for p, x in enumerate(("xa", "xb")):
            for s, j, d in self.types:
                path = routes[(s, j, d)][p]
                col[(x, s, j, d)] = var((x, s, j, d), 0, col_ub[(p, s, j, d)],
                                        sum(lin[p, idx[v]] for v in path))
        self.n_struct = len(self.keys)
        # activation flags for nodes with an idle charge
        users = [dict(), dict()]
        # most patients a node can see in a phase: its clinics' totals, and
        # for a BS its PRB budget
        reach = [dict(), dict()]
        for key, (up, down) in routes.items():
            for p, path in enumerate((up, down)):
                for v in path:
                    if fixed[p, idx[v]] > 0:
                        users[p].setdefault(v, []).append(col[("x" + "ab"[p],) + key])
                        reach[p].setdefault(v, set()).add(key[0])
        self.node_cap = {}
        st_users = {}
        for d in cands:
            for v in inst.storage_route(d):
                if fixed[2, idx[v]] > 0:
                    st_users.setdefault(v, []).append(col[("Y", d)])
        self.requires = {}
        for p, name in enumerate(("za", "zb")):
            for v in inst.network_nodes:
                if v in users[p]:
                    z = var((name, v), 0, 1, fixed[p, idx[v]])
                    col[(name, v)] = z
                    self.requires[z] = users[p][v]
                    cap_v = sum(pts[c] for c in reach[p][v])
                    if topo.kind(v) == K.BASE_STATION:
                        cap_v = min(cap_v, inst.bs_cap(p))
                    self.node_cap[z] = cap_v
        st_share = {}
        for v in inst.network_nodes:
            if v in st_users:
                z = var(("zc", v), 0, 1, fixed[2, idx[v]])
                col[("zc", v)] = z
                self.requires[z] = st_users[v]
                st_share[z] = [col[("omega", s, d)] for d in cands for s in inst.clinics
                               if v in inst.storage_route(d)]
        self.col = col
        self.lb = np.array(lb, float)
        self.ub = np.array(ub, float)
        self.cost = np.array(cost, float)
        self.is_int = np.array(isint)

        rows = []     # (coefs dict, lo, hi)
        inf = math.inf
        for s in inst.clinics:
            for d in cands:
                rows.append(({col[("omega", s, d)]: 1, col[("Y", d)]: -pts[s]}, -inf, 0))
            rows.append(({col[("omega", s, d)]: 1 for d in cands}, pts[s], pts[s]))
            for d in cands:
                for x in ("xa", "xb"):
                    r = {col[(x, s, j, d)]: 1 for j in topo.serving_bs(s)}
                    r[col[("omega", s, d)]] = -1
                    rows.append((r, 0, 0))
        per_ps = inst.per_ps
        for d in cands:
            rows.append(({col[("phi", d)]: 1, col[("Y", d)]: -cap}, -inf, 0))
            rows.append(({col[("phi", d)]: 1, col[("Y", d)]: -1}, 0, inf))
            r = {col[("omega", s, d)]: 1 for s in inst.clinics}
            r[col[("phi", d)]] = -per_ps
            rows.append((r, -inf, 0))
        if inst.total_patients:
            rows.append(({col[("phi", d)]: 1 for d in cands}, inst.min_servers, inf))
        for p, x in enumerate(("xa", "xb")):
            per_bs = {}
            for s, j, d in self.types:
                per_bs.setdefault(j, {})[col[(x, s, j, d)]] = 1
            for j, r in sorted(per_bs.items()):
                rows.append((r, -inf, inst.bs_cap(p)))
        links = [dict(), dict(), dict()]
        for key, (up, down) in routes.items():
            s = key[0]
            for p, path in enumerate(([s] + up, down + [s])):
                for e in zip(path, path[1:]):
                    links[p].setdefault(e, {})[col[("x" + "ab"[p],) + key]] = 1
        for d in cands:
            route = inst.storage_route(d)
            for e in zip(route, route[1:]):
                links[2].setdefault(e, {}).update({col[("omega", s, d)]: 1 for s in inst.clinics})
        for p in range(3):
            for (u, v), r in sorted(links[p].items()):
                lim = limit(p, u, v)
                if lim < sum(self.ub[c] for c in r):
                    rows.append((r, -inf, lim))
        for z, need in self.requires.items():
            for c in need:
                rows.append(({c: 1, z: -self.ub[c]}, -inf, 0))
            if self.keys[z][0] != "zc":
                v = self.keys[z][1]
                p = 0 if self.keys[z][0] == "za" else 1
                by_clinic = {}
                for c in need:
                    by_clinic.setdefault(self.keys[c][1], []).append(c)
                for s, group in sorted(by_clinic.items()):
                    cap_s = min(pts[s], sum(self.ub[c] for c in group))
                    if topo.kind(v) == K.BASE_STATION:
                        cap_s = min(cap_s, inst.bs_cap(p), limit(p, *((s, v) if p == 0 else (v, s))))
                    if len(group) > 1:
                        rows.append(({**{c: 1 for c in group}, z: -cap_s}, -inf, 0))
                big = min(sum(self.ub[c] for c in need), self.node_cap[z])
                rows.append(({**{c: 1 for c in need}, z: -big}, -inf, 0))
            else:
                # storage leaves every loaded fog, so the share of patients
                # whose fog routes through the node bounds its flag
                rows.append(({**{c: 1 for c in st_share[z]}, z: -inst.total_patients}, -inf, 0))
        self.rows = rows

        topo_olt = topo.nodes_of(K.OLT)

        def dist(d):
            if not topo_olt or d in topo_olt:
                return 0
            return min(topo.hops(d, o) for o in topo_olt)

        order = [col[("Y", d)] for d in sorted(cands, key=lambda d: (dist(d), d))]
        order += [col[("phi", d)] for d in cands]
        # which BSs carry traffic decides most of the remaining gap
        bs_flags = [c for k, c in col.items()
                    if k[0] in ("za", "zb") and topo.kind(k[1]) == K.BASE_STATION]
        order += bs_flags
        for g in ("omega", "xa", "xb", "za", "zb", "zc"):
            order += [c for k, c in col.items() if k[0] == g and c not in bs_flags]
        self.order = np.array(order, dtype=int)

    # -- LP engine --------------------------------------------------------
    def open(self):
        n = len(self.keys)
        A = sparse.lil_matrix((len(self.rows), n))
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for i, (r, a, b) in enumerate(self.rows):
            for c, v in r.items():
                A[i, c] = v
            lo[i], hi[i] = a, b
        self.A = A.tocsc()
        self.row_lo, self.row_hi = lo, hi
        if highspy is None:
            return
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = len(self.rows)
        lp.col_cost_ = self.cost
        lp.col_lower_ = self.lb
        lp.col_upper_ = self.ub
        big = highspy.kHighsInf
        lp.row_lower_ = np.where(np.isinf(lo), -big, lo)
        lp.row_upper_ = np.where(np.isinf(hi), big, hi)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = self.A.indptr
        lp.a_matrix_.index_ = self.A.indices
        lp.a_matrix_.value_ = self.A.data
        h.passModel(lp)
        self.h = h
        self.all_cols = np.arange(n, dtype=np.int32)

    def relax(self, lb, ub):
        if highspy is None:
            return self._relax_scipy(lb, ub)
        h = self.h
        h.changeColsBounds(len(lb), self.all_cols, lb, ub)
        h.run()
        st = h.getModelStatus()
        if st == highspy.HighsModelStatus.kInfeasible:
            return None, math.inf
        if st != highspy.HighsModelStatus.kOptimal:
            # retry from scratch once before giving up
            h.clearSolver()
            h.run()
            st = h.getModelStatus()
            if st == highspy.HighsModelStatus.kInfeasible:
                return None, math.inf
            if st != highspy.HighsModelStatus.kOptimal:
                raise SolverError(f"LP relaxation failed: {h.modelStatusToString(st)}")
        x = np.array(h.getSolution().col_value)
        return x, float(self.cost @ x)

    def _relax_scipy(self, lb, ub):
        A = self.A.tocsr()
        ub_rows = ~np.isinf(self.row_hi)
        lo_rows = ~np.isinf(self.row_lo)
        eq = ub_rows & lo_rows & (self.row_lo == self.row_hi)
        le = ub_rows & ~eq
        ge = lo_rows & ~eq
        A_ub = sparse.vstack([A[le], -A[ge]])
        b_ub = np.concatenate([self.row_hi[le], -self.row_lo[ge]])
        res = linprog(self.cost, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq], b_eq=self.row_hi[eq],
                      bounds=np.column_stack([lb, ub]), method="highs")
        if res.status == 2:
            return None, math.inf
        if res.status != 0:
            raise SolverError(f"LP relaxation failed: {res.message}")
        return res.x, float(res.fun)

    # -- solutions --------------------------------------------------------
    def complete(self, x):
        """Round the structural part and switch on exactly the needed flags."""
        y = x.copy()
        y[: self.n_struct] = np.round(x[: self.n_struct])
        for z, need in self.requires.items():
            y[z] = 1.0 if any(y[c] > 0.5 for c in need) else 0.0
        return y, float(self.cost @ y)

    def to_solution(self, y):
        inst = self.inst
        phi, raw, fb = {}, {}, {}
        for key, c in self.col.items():
            v = int(round(y[c]))
            if not v:
                continue
            if key[0] == "phi":
                phi[key[1]] = v
            elif key[0] == "xa":
                raw[key[1:]] = v
            elif key[0] == "xb":
                fb[key[1:]] = v
        return build_solution(inst, phi, raw, fb)


def placement_lower_bounds(inst) -> dict:
    """LP lower bound on the energy of any solution with a PS at each candidate.

    A candidate whose bound exceeds a known solution's energy hosts no PS
    in any optimum.
    """
    cp = _Compact(inst)
    cp.open()
    out = {}
    for d in inst.candidates:
        lb = cp.lb.copy()
        for key in (("Y", d), ("phi", d)):
            lb[cp.col[key]] = max(lb[cp.col[key]], 1.0)
        out[d] = cp.relax(lb, cp.ub.copy())[1]
    return out


def _tie_key(sol, cands):
    return tuple(-sol.phi.get(d, 0) for d in sorted(cands))


def solve_exact(model, time_limit: float | None = None, node_limit: int | None = None,
                incumbent: PlacementSolution | None = None, check: bool = True) -> SolveReport:
    """Exact depth-first branch and bound.

    ``model`` is an assembled :class:`MilpModel` or an instance. Branching
    goes placement first (Y by hop distance from the OLT, up-branch first,
    then phi), then allocations, BS assignments and activation flags. A
    subtree is pruned when its relaxation cannot beat the incumbent by more
    than 1e-7 J. Ties within 1e-9 relative are broken towards PSs on
    lower node ids.
    """
    t0 = time.perf_counter()
    inst = model.inst if isinstance(model, MilpModel) else model
    if inst.total_patients == 0:
        sol = build_solution(inst, {}, {}, {})
        return SolveReport(sol, 0.0, 0.0, 0.0, 0, "optimal", time.perf_counter() - t0,
                           "exact", total_energy(sol, inst))
    if inst.per_ps <= 0 or inst.ps_cap * len(inst.candidates) * inst.per_ps < inst.total_patients:
        return SolveReport(None, math.inf, math.inf, math.inf, 0, "infeasible",
                           time.perf_counter() - t0, "exact")
    cp = _Compact(inst)
    cp.open()
    cands = inst.candidates
    best_y, best_obj, best_key = None, math.inf, None
    if incumbent is not None:
        best_obj = total_energy(incumbent, inst).total
        best_key = _tie_key(incumbent, cands)

    def offer(y, obj):
        nonlocal best_y, best_obj, best_key
        tol = 1e-9 * max(1.0, abs(obj))
        if obj < best_obj - tol:
            best_y, best_obj = y, obj
            best_key = _tie_key(cp.to_solution(y), cands)
        elif abs(obj - best_obj) <= tol:
            key = _tie_key(cp.to_solution(y), cands)
            if best_key is None or key < best_key:
                best_y, best_obj, best_key = y, min(obj, best_obj), key

    # each entry carries its parent's LP value, a valid bound for the subtree
    stack = [(cp.lb.copy(), cp.ub.copy(), -math.inf)]
    nodes = 0
    status = "optimal"
    struct = cp.order[cp.order < cp.n_struct]
    phi_col = {d: cp.col[("phi", d)] for d in cands}
    while stack:
        if (time_limit is not None and time.perf_counter() - t0 > time_limit) or \
                (node_limit is not None and nodes >= node_limit):
            status = "limit"
            break
        lb, ub, _ = stack.pop()
        nodes += 1
        x, bound = cp.relax(lb, ub)
        if x is None:
            continue
        if bound >= best_obj - 1e-7:
            # a subtree that can only tie is kept while it could still win the tie-break
            if bound > best_obj + 1e-9 * max(1.0, abs(best_obj)) or best_key is None:
                continue
            if tuple(-ub[phi_col[d]] for d in sorted(cands)) >= best_key:
                continue
        frac = None
        for j in cp.order:
            if abs(x[j] - round(x[j])) > INT_TOL:
                frac = j
                break
        if frac is None or all(abs(x[j] - round(x[j])) <= INT_TOL for j in struct):
            offer(*cp.complete(x))
        if frac is None:
            # an integral node may still hide an equal-energy placement that
            # wins the tie-break: split on the first PS count below its cap
            if bound > best_obj + 1e-9 * max(1.0, abs(best_obj)) or \
                    tuple(-ub[phi_col[d]] for d in sorted(cands)) >= best_key:
                continue
            frac = next(phi_col[d] for d in sorted(cands)
                        if round(x[phi_col[d]]) < ub[phi_col[d]])
            v = round(x[frac]) + 0.5
        else:
            v = x[frac]
        lo_ub = ub.copy()
        lo_ub[frac] = math.floor(v)
        hi_lb = lb.copy()
        hi_lb[frac] = math.ceil(v)
        down, up = (lb, lo_ub, bound), (hi_lb, ub, bound)
        # the child pushed last is explored first
        if cp.keys[frac][0] == "Y" or v - math.floor(v) >= 0.5:
            stack += [down, up]
        else:
            stack += [up, down]
    wall = time.perf_counter() - t0
    bound = best_obj
    if status == "limit":
        bound = min([best_obj] + [b for _, _, b in stack])
    if best_y is None:
        if incumbent is not None and best_obj < math.inf:
            sol = incumbent
        else:
            st = "infeasible" if status == "optimal" else "limit"
            return SolveReport(None, math.inf, bound, math.inf, nodes, st, wall, "exact")
    else:
        sol = cp.to_solution(best_y)
    breakdown = total_energy(sol, inst)
    if check:
        rep = validate(sol, inst)
        if not rep.ok:
            raise SolverError(f"exact solution failed validation:\n{rep}")
        if abs(breakdown.total - best_obj) > 1e-9 * max(1.0, best_obj):
            raise SolverError(f"objective {best_obj} disagrees with evaluator {breakdown.total}")
    obj = breakdown.total
    gap = 0.0 if status == "optimal" else max(0.0, (obj - bound) / max(abs(obj), 1e-12))
    return SolveReport(sol, obj, min(bound, obj), gap, nodes, status, wall, "exact", breakdown)

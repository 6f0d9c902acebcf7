"""Independent feasibility checker for placement solutions.

Works from the flow-level description only. It never calls the routing or
solution-building helpers the solvers use, so a bug there shows up here.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .app_traffic import processing_time
from .topology import NodeKind

__all__ = ["ValidationReport", "InvariantError", "validate", "check_solution"]

K = NodeKind


class InvariantError(AssertionError):
    pass


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, tag: str, msg: str) -> None:
        self.violations.append(f"[{tag}] {msg}")

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(self.violations)


def _close(a: float, b: float, scale: float = 1.0) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(scale))


def _is_int(x) -> bool:
    return float(x) == int(round(float(x))) and x >= 0


def validate(sol, inst) -> ValidationReport:
    rep = ValidationReport()
    topo, ph, app = inst.topology, inst.phases, inst.app
    cands = set(inst.candidates)
    clinics = inst.clinics
    pts = {c: inst.patients.get(c, 0) for c in clinics}
    rates = {"raw": ph.rate_up_bps, "feedback": ph.rate_fb_bps, "storage": ph.rate_st_bps}

    # placement (32, 63, 65), processing time (64)
    phi = {d: n for d, n in sol.phi.items() if n != 0}
    for d, n in phi.items():
        if d not in cands:
            rep.add("32", f"PS placed at non-candidate {d}")
        if not _is_int(n):
            rep.add("32", f"phi[{d}] = {n} is not a non-negative integer")
        if inst.ps_per_node is not None and n > inst.ps_per_node:
            rep.add("32", f"phi[{d}] = {n} exceeds per-node cap {inst.ps_per_node}")
    if sol.switch != inst.switch:
        rep.add("28", "switch wiring does not match the instance")
    load = defaultdict(int)
    per_clinic = defaultdict(int)
    for (s, d), w in sol.omega.items():
        if not _is_int(w):
            rep.add("33", f"omega[{s},{d}] = {w} is not a non-negative integer")
        if w > 0 and d not in phi:
            rep.add("32", f"omega[{s},{d}] > 0 but no PS at {d}")
        if s not in pts and w > 0:
            rep.add("33", f"omega for unknown or empty clinic {s}")
        load[d] += w
        per_clinic[s] += w
    for s, n in pts.items():
        if per_clinic.get(s, 0) != n:
            rep.add("33", f"clinic {s}: {per_clinic.get(s, 0)} of {n} patients allocated")
    for d, n in phi.items():
        if load.get(d, 0) > inst.app.max_patients_per_ps * n:
            rep.add("63", f"fog {d}: {load[d]} patients > Omega_max * {n}")
        if load.get(d, 0) * app.analyzed_size_bits > app.ps_storage_bits * n:
            rep.add("65", f"fog {d}: storage exceeds Lambda_max * {n}")
        want = processing_time(app, load.get(d, 0), n)
        if not _close(sol.tau_p.get(d, -1.0), want, want):
            rep.add("64", f"fog {d}: tau_p {sol.tau_p.get(d)} != {want}")

    # flow feasibility per commodity (34-39) and link capacity (43-45)
    demand = {
        "raw": {(s, d): w * rates["raw"] for (s, d), w in sol.omega.items() if w > 0},
        "feedback": {(d, s): w * rates["feedback"] for (s, d), w in sol.omega.items() if w > 0},
        "storage": {(d, topo.cloud_storage): n * rates["storage"] for d, n in load.items() if n > 0},
    }
    for phase in ("raw", "feedback", "storage"):
        flows = sol.flows.get(phase, {})
        net = defaultdict(float)
        link_load = defaultdict(float)
        for (src, dst, u, v), f in flows.items():
            if f < 0:
                rep.add("37", f"{phase}: negative flow on {u}->{v}")
            try:
                topo.link(u, v)
            except KeyError:
                rep.add("37", f"{phase}: flow on non-link {u}->{v}")
                continue
            if (src, dst) not in demand[phase] and f > 0:
                rep.add("34", f"{phase}: flow for commodity {src}->{dst} without demand")
            # clinics only originate or terminate traffic
            for w in (u, v):
                if topo.kind(w) == K.CLINIC and w not in (src, dst):
                    rep.add("37", f"{phase}: commodity {src}->{dst} relays through clinic {w}")
            net[(src, dst, u)] -= f
            net[(src, dst, v)] += f
            link_load[(u, v)] += f
        for (src, dst), amount in demand[phase].items():
            if not _close(net.get((src, dst, dst), 0.0), amount, amount):
                rep.add("37", f"{phase}: {src}->{dst} delivers {net.get((src, dst, dst), 0.0)} of {amount}")
            if not _close(-net.get((src, dst, src), 0.0), amount, amount):
                rep.add("37", f"{phase}: {src}->{dst} emits {-net.get((src, dst, src), 0.0)} of {amount}")
        for (src, dst, w), r in net.items():
            if w not in (src, dst) and not _close(r, 0.0, rates[phase]):
                rep.add("37", f"{phase}: conservation residual {r} at {w} for {src}->{dst}")
        for (u, v), f in link_load.items():
            cap = topo.capacity(u, v)
            if f > cap * (1 + 1e-12):
                rep.add("43", f"{phase}: link {u}->{v} carries {f} > {cap}")

    # base-station patient counts and PRB budgets (55-62)
    for phase, tag, per, rate in (("raw", "55", ph.ra, ph.rate_up_bps),
                                  ("feedback", "59", ph.rb, ph.rate_fb_bps)):
        bs_pat = defaultdict(float)
        clinic_pat = defaultdict(float)
        for (src, dst, u, v), f in sol.flows.get(phase, {}).items():
            s, j = (u, v) if phase == "raw" else (v, u)
            if topo.kind(s) == K.CLINIC and topo.kind(j) == K.BASE_STATION:
                bs_pat[j] += f / rate
                clinic_pat[s] += f / rate
        for j, n in bs_pat.items():
            if abs(n - round(n)) > 1e-9:
                rep.add(tag, f"{phase}: BS {j} carries a fractional patient count {n}")
            if per * round(n) > app.max_prb:
                rep.add(str(int(tag) + 3), f"{phase}: BS {j} uses {per * round(n)} PRBs > {app.max_prb}")
        for s, n in pts.items():
            if abs(clinic_pat.get(s, 0.0) - n) > 1e-9:
                rep.add(str(int(tag) + 1), f"{phase}: clinic {s} has {clinic_pat.get(s, 0.0)} of {n} patients on BSs")

    # activation flags, when the producer reports them (46-54)
    acts = sol.activations
    if acts:
        P, F, Sin, Sout = (defaultdict(float) for _ in range(4))
        for (_, _, _, v), f in sol.flows.get("raw", {}).items():
            P[v] += f
        for (_, _, u, _), f in sol.flows.get("feedback", {}).items():
            F[u] += f
        for (_, _, u, v), f in sol.flows.get("storage", {}).items():
            Sout[u] += f
            Sin[v] += f
        for node in inst.network_nodes:
            want = {
                "za": int(P[node] > 0), "zb": int(F[node] > 0),
                "thc": int(Sout[node] > 0), "vthc": int(Sin[node] > 0),
            }
            want["zc"] = int(want["thc"] or want["vthc"])
            want["nu"] = int(want["thc"] != want["vthc"])
            for flag, w in want.items():
                got = acts.get(flag, {}).get(node)
                if got is not None and int(round(got)) != w:
                    rep.add("46", f"activation {flag}[{node}] = {got}, flows imply {w}")
            th, vt = acts.get("thc", {}).get(node), acts.get("vthc", {}).get(node)
            zc, nu = acts.get("zc", {}).get(node), acts.get("nu", {}).get(node)
            if None not in (th, vt, zc, nu) and round(th) + round(vt) != 2 * round(zc) - round(nu):
                rep.add("54", f"node {node}: theta + vartheta != 2 zeta - nu")
    return rep


def check_solution(sol, inst) -> None:
    rep = validate(sol, inst)
    if not rep.ok:
        raise InvariantError(str(rep))

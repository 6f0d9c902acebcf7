"""Energy of a placement solution, evaluated from its flows.

Each shared device is charged ``idle * idle_share`` while it carries
health traffic in a phase, plus its load times the profile slope, for the
phase duration. Phases run at different times so no overlap credit is given.
Activation flags are recomputed from the flows; nothing the solver reports
about activations is trusted here.

Term names follow the usual notation: ``EBSP`` is base-station energy in
the upload phase, ``EONUF`` ONU energy in the feedback phase, ``ECSTS``
cloud-storage energy in the storage phase and so on. Terms are stored before
PUE; layer totals are after PUE.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

from .topology import NodeKind

__all__ = [
    "EnergyBreakdown",
    "node_traffic",
    "access_energy",
    "metro_energy",
    "core_energy",
    "cloud_energy",
    "fog_energy",
    "total_energy",
    "TERM_NAMES",
]

K = NodeKind

# symbol stem and layer per device kind
_STEM = {
    K.BASE_STATION: ("BS", "access"),
    K.ONU: ("ONU", "access"),
    K.OLT: ("OLT", "access"),
    K.CAS: ("CAS", "metro"),
    K.AR: ("AR", "metro"),
    K.CR: ("CR", "core"),
    K.CLR: ("CLR", "cloud"),
    K.CLS: ("CLS", "cloud"),
    K.CS: ("CS", "cloud"),
    K.CST: ("CST", "cloud"),
}

# phase letters charged per kind; upload/feedback above the OLT only when
# processing happens in the cloud
_FOA = {
    K.BASE_STATION: "PF", K.ONU: "PFS", K.OLT: "PFS",
    K.CAS: "S", K.AR: "S", K.CR: "S", K.CLR: "S", K.CLS: "S", K.CS: "S", K.CST: "S",
}
_CA = dict(_FOA, **{K.CAS: "PFS", K.AR: "PFS", K.CR: "PFS", K.CLR: "PFS", K.CLS: "PFS"})
_CHARGED = {"foa": _FOA, "ca": _CA}

TERM_NAMES = tuple(
    [f"E{_STEM[k][0]}{p}" for k in _STEM for p in _CA[k]] + ["EPS", "EESP", "EESF", "EESS"]
)
LAYERS = ("access", "metro", "core", "cloud", "fog")


@dataclass
class EnergyBreakdown:
    terms: dict = field(default_factory=lambda: {t: 0.0 for t in TERM_NAMES})
    layers: dict = field(default_factory=lambda: {l: 0.0 for l in LAYERS})
    processing: float = 0.0     # PS energy after PUE

    @property
    def access(self) -> float:
        return self.layers["access"]

    @property
    def metro(self) -> float:
        return self.layers["metro"]

    @property
    def core(self) -> float:
        return self.layers["core"]

    @property
    def cloud(self) -> float:
        return self.layers["cloud"]

    @property
    def fog(self) -> float:
        return self.layers["fog"]

    @property
    def total(self) -> float:
        return sum(self.layers[l] for l in LAYERS)

    @property
    def network(self) -> float:
        """Everything except the processing servers (switches included)."""
        return self.total - self.processing

    def to_dict(self) -> dict:
        d = dict(self.terms)
        d.update({l.upper(): v for l, v in self.layers.items()})
        d["PROCESSING"] = self.processing
        d["NETWORK"] = self.network
        d["TOTAL"] = self.total
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def node_traffic(sol) -> tuple[dict, dict, dict]:
    """Per-node phase totals (P_i incoming upload, F_i outgoing feedback,
    S_i incoming plus self-originated storage), bits/s."""
    P = defaultdict(float)
    F = defaultdict(float)
    S = defaultdict(float)
    for (_, _, _, v), f in sol.flows.get("raw", {}).items():
        P[v] += f
    for (_, _, u, _), f in sol.flows.get("feedback", {}).items():
        F[u] += f
    for (src, _, u, v), f in sol.flows.get("storage", {}).items():
        S[v] += f
        if u == src:
            S[u] += f
    return P, F, S


def _device_terms(sol, inst):
    """Yield (term name, layer, energy before PUE, pue) per charged device/phase."""
    topo, ph, mode = inst.topology, inst.phases, inst.mode
    P, F, S = node_traffic(sol)
    taus = {"P": ph.time_up_s, "F": ph.time_fb_s, "S": ph.time_st_s}
    loads = {"P": P, "F": F, "S": S}
    charged = _CHARGED[mode]
    for node in topo.nodes:
        if node.kind == K.CLINIC:
            continue
        stem, layer = _STEM[node.kind]
        prof = inst.profiles[node.profile]
        idle = prof.p_idle * prof.idle_share
        for letter in charged[node.kind]:
            traffic = loads[letter].get(node.id, 0.0)
            if traffic <= 0.0:
                continue
            tau = taus[letter]
            if node.kind == K.BASE_STATION:
                rate = ph.rate_up_bps if letter == "P" else ph.rate_fb_bps
                prbs = (ph.ra if letter == "P" else ph.rb) * round(traffic / rate)
                power = idle + prof.slope * prbs
            elif node.kind == K.CST:
                # stored volume in bits against a capacity in bits
                power = idle + prof.slope * traffic * tau
            else:
                power = idle + prof.slope * traffic
            yield f"E{stem}{letter}", layer, prof.redundancy * power * tau, prof.pue


def _fog_terms(sol, inst):
    ph = inst.phases
    window = ph.time_up_s + ph.time_fb_s + ph.time_st_s
    ps = inst.profiles[inst.app.ps_profile]
    eps = 0.0
    for d, n in sol.phi.items():
        if n > 0:
            eps += ps.p_idle * ps.idle_share * n * window + ps.p_max * sol.tau_p.get(d, 0.0)
    yield "EPS", "fog", eps, ps.pue
    if not sol.switch:
        return
    es = inst.profiles["es"]
    term = defaultdict(float)
    orig = defaultdict(float)
    for (_, dst, _, v), f in sol.flows.get("raw", {}).items():
        if v == dst:
            term[dst] += f
    for name, phase, tau in (("EESF", "feedback", ph.time_fb_s), ("EESS", "storage", ph.time_st_s)):
        orig.clear()
        for (src, _, u, _), f in sol.flows.get(phase, {}).items():
            if u == src:
                orig[src] += f
        e = sum(es.slope * orig.get(d, 0.0) * tau
                + es.p_idle * es.idle_share * tau for d, n in sol.phi.items() if n > 0)
        yield name, "fog", e, es.pue
    e = sum(es.slope * term.get(d, 0.0) * ph.time_up_s
            + es.p_idle * es.idle_share * ph.time_up_s for d, n in sol.phi.items() if n > 0)
    yield "EESP", "fog", e, es.pue


def total_energy(sol, inst) -> EnergyBreakdown:
    out = EnergyBreakdown()
    for name, layer, e, pue in _device_terms(sol, inst):
        out.terms[name] += e
        out.layers[layer] += e * pue
    for name, layer, e, pue in _fog_terms(sol, inst):
        out.terms[name] += e
        out.layers[layer] += e * pue
        if name == "EPS":
            out.processing = e * pue
    return out


def access_energy(sol, inst) -> float:
    return total_energy(sol, inst).access


def metro_energy(sol, inst) -> float:
    return total_energy(sol, inst).metro


def core_energy(sol, inst) -> float:
    return total_energy(sol, inst).core


def cloud_energy(sol, inst) -> float:
    return total_energy(sol, inst).cloud


def fog_energy(sol, inst) -> float:
    return total_energy(sol, inst).fog

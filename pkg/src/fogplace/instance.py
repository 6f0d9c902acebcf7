"""Problem instance: topology + application + derived phases + device profiles.

``Instance.tables`` flattens the per-device energy coefficients into arrays
so both solvers can price a candidate solution without walking flows. The
independent evaluator in :mod:`fogplace.energy_accounting` does not use them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .app_traffic import (AppProfile, PhaseParams, capacity_shares, derive_phases,
                          pat_max_for)
from .power_profiles import DevicePowerProfile, load_profiles
from .topology import NodeKind, Topology, ROUTE_KINDS, STORAGE_KINDS, load_topology

__all__ = ["Instance", "make_instance", "PHASE_KINDS", "Tables", "InstanceError",
           "instance_to_doc", "instance_from_doc"]

K = NodeKind

# node kinds charged in each phase (upload, feedback, storage) per mode
PHASE_KINDS = {
    "foa": (
        frozenset({K.BASE_STATION, K.ONU, K.OLT}),
        frozenset({K.BASE_STATION, K.ONU, K.OLT}),
        frozenset({K.ONU, K.OLT, K.CAS, K.AR, K.CR, K.CLR, K.CLS, K.CS, K.CST}),
    ),
    "ca": (
        frozenset({K.BASE_STATION, K.ONU, K.OLT, K.CAS, K.AR, K.CR, K.CLR, K.CLS}),
        frozenset({K.BASE_STATION, K.ONU, K.OLT, K.CAS, K.AR, K.CR, K.CLR, K.CLS}),
        frozenset({K.ONU, K.OLT, K.CAS, K.AR, K.CR, K.CLR, K.CLS, K.CS, K.CST}),
    ),
}


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Tables:
    """Array form of the energy model over network (non-clinic) nodes."""
    nodes: tuple            # node ids, topology order
    index: Mapping          # id -> position
    idle: np.ndarray        # attributed idle power (W)
    weight: np.ndarray      # pue * redundancy
    unit: np.ndarray        # (3, n) load units per patient and phase
    slope: np.ndarray       # W per load unit
    part: np.ndarray        # (3, n) 1 if node is charged in the phase
    tau: np.ndarray         # (3,) phase durations
    ps_fixed: float         # J per PS
    ps_patient: float       # J per patient processed
    es_fixed: float         # J per fog node with a switch
    es_patient: float       # J per patient through the switch

    def phase_coeffs(self):
        """(fixed, per-patient) J per node and phase, zero where not charged."""
        fixed = self.part * self.weight * self.idle * self.tau[:, None]
        lin = self.part * self.weight * self.slope * self.unit * self.tau[:, None]
        return fixed, lin


@dataclass
class Instance:
    topology: Topology
    app: AppProfile
    phases: PhaseParams
    profiles: Mapping[str, DevicePowerProfile]
    mode: str = "foa"
    ps_per_node: int | None = 1
    patients: Mapping[str, int] | None = None
    big_m: float | None = None

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in PHASE_KINDS:
            raise InstanceError(f"unknown mode {self.mode!r}")
        if self.ps_per_node is not None and self.ps_per_node < 1:
            raise InstanceError("ps_per_node must be >= 1 or None (variable)")
        if self.patients is None:
            self.patients = self.topology.patients(self.app.name)
        for c, n in self.patients.items():
            if self.topology.kind(c) != K.CLINIC or n < 0:
                raise InstanceError(f"bad patient entry {c}: {n}")
        missing = {self.topology.node(v).profile for v in self.network_nodes} - set(self.profiles)
        missing |= {self.app.ps_profile, "es"} - set(self.profiles)
        if missing:
            raise InstanceError(f"missing device profiles: {sorted(missing)}")
        if not self.candidates:
            raise InstanceError("no fog candidates for this mode")

    # basic sets -----------------------------------------------------------
    @cached_property
    def clinics(self) -> list[str]:
        """Clinics with at least one patient, topology order."""
        return [c for c in self.topology.clinics if self.patients.get(c, 0) > 0]

    @cached_property
    def candidates(self) -> list[str]:
        return self.topology.fog_candidates(self.mode)

    @cached_property
    def network_nodes(self) -> list[str]:
        return [n.id for n in self.topology.nodes if n.kind != K.CLINIC]

    @property
    def total_patients(self) -> int:
        return sum(self.patients.get(c, 0) for c in self.clinics)

    @property
    def switch(self) -> bool:
        """PSs share a node through an Ethernet switch when the PS count may exceed one."""
        return self.ps_per_node != 1

    @property
    def per_ps(self) -> int:
        return self.app.patients_per_server

    @cached_property
    def ps_cap(self) -> int:
        """Upper bound on PSs at one node."""
        if self.ps_per_node is not None:
            return self.ps_per_node
        if self.per_ps <= 0:
            return 1
        return max(1, math.ceil(self.total_patients / self.per_ps))

    @property
    def min_servers(self) -> int:
        if self.total_patients == 0:
            return 0
        if self.per_ps <= 0:
            raise InstanceError("infeasible: PS capacity is zero")
        return math.ceil(self.total_patients / self.per_ps)

    def bs_cap(self, phase: int) -> int:
        """Patients one BS can carry in the upload (0) or feedback (1) phase."""
        per = self.phases.ra if phase == 0 else self.phases.rb
        return self.app.max_prb // per

    def rate(self, phase: int) -> float:
        p = self.phases
        return (p.rate_up_bps, p.rate_fb_bps, p.rate_st_bps)[phase]

    def profile_of(self, node_id: str) -> DevicePowerProfile:
        return self.profiles[self.topology.node(node_id).profile]

    # routes ---------------------------------------------------------------
    def raw_route(self, clinic: str, bs: str, fog: str) -> list[str]:
        return [clinic] + self.topology.min_hop_path(bs, fog, ROUTE_KINDS)

    def fb_route(self, clinic: str, bs: str, fog: str) -> list[str]:
        return self.topology.min_hop_path(fog, bs, ROUTE_KINDS) + [clinic]

    def storage_route(self, fog: str) -> list[str]:
        return self.topology.min_hop_path(fog, self.topology.cloud_storage, STORAGE_KINDS)

    def hops(self, bs: str, fog: str) -> int:
        return self.topology.hops(bs, fog, ROUTE_KINDS)

    # coefficient tables ----------------------------------------------------
    @cached_property
    def tables(self) -> Tables:
        topo, ph = self.topology, self.phases
        nodes = tuple(self.network_nodes)
        n = len(nodes)
        idle = np.zeros(n)
        weight = np.zeros(n)
        slope = np.zeros(n)
        unit = np.zeros((3, n))
        part = np.zeros((3, n))
        tau = np.array([ph.time_up_s, ph.time_fb_s, ph.time_st_s])
        kinds = PHASE_KINDS[self.mode]
        for i, v in enumerate(nodes):
            kind = topo.kind(v)
            prof = self.profile_of(v)
            idle[i] = prof.attributed_idle
            weight[i] = prof.pue * prof.redundancy
            slope[i] = prof.slope
            if kind == K.BASE_STATION:
                unit[:, i] = (ph.ra, ph.rb, 0.0)
            elif kind == K.CST:
                # stored volume over the storage window, in bits
                unit[:, i] = (ph.rate_up_bps, ph.rate_fb_bps, ph.rate_st_bps * ph.time_st_s)
            else:
                unit[:, i] = (ph.rate_up_bps, ph.rate_fb_bps, ph.rate_st_bps)
            for p in range(3):
                part[p, i] = 1.0 if kind in kinds[p] else 0.0
        ps = self.profiles[self.app.ps_profile]
        es = self.profiles["es"]
        window = ph.time_up_s + ph.time_fb_s + ph.time_st_s
        if self.app.per_frame_proc_s is not None:
            ps_fixed = ps.pue * ps.p_idle * ps.idle_share * window
            ps_patient = ps.pue * ps.p_max * self.app.per_recording_proc_s
        else:
            ps_fixed = ps.pue * (ps.p_idle * ps.idle_share * window + ps.p_max * self.app.proc_intercept)
            ps_patient = ps.pue * ps.p_max * self.app.proc_slope
        if self.switch:
            es_fixed = es.pue * es.attributed_idle * window
            es_patient = es.pue * es.slope * (ph.rate_up_bps * ph.time_up_s
                                              + ph.rate_fb_bps * ph.time_fb_s
                                              + ph.rate_st_bps * ph.time_st_s)
        else:
            es_fixed = es_patient = 0.0
        return Tables(nodes, {v: i for i, v in enumerate(nodes)}, idle, weight, unit, slope,
                      part, tau, ps_fixed, ps_patient, es_fixed, es_patient)

    def with_phases(self, phases: PhaseParams) -> "Instance":
        return Instance(self.topology, self.app, phases, self.profiles, self.mode,
                        self.ps_per_node, dict(self.patients), self.big_m)


def make_instance(topology: Topology, app: AppProfile, mode: str = "foa", *,
                  profiles=None, ps_per_node: int | None = 1,
                  patients: Mapping[str, int] | None = None,
                  phases: PhaseParams | None = None,
                  cb_min: float | None = None, cc_min: float | None = None,
                  pat_max: int | None = None, tau_p: float | None = None,
                  big_m: float | None = None) -> Instance:
    """Build an instance, deriving phase parameters unless given."""
    if profiles is None or not isinstance(profiles, Mapping):
        profiles = load_profiles(profiles)
    pts = dict(patients) if patients is not None else topology.patients(app.name)
    if phases is None:
        cb, cc = capacity_shares(app, mode)
        cb = cb if cb_min is None else cb_min
        cc = cc if cc_min is None else cc_min
        if pat_max is None:
            pat_max = pat_max_for(app, sum(pts.values()), ps_per_node)
        phases = derive_phases(app, cb, cc, pat_max, tau_p)
    return Instance(topology, app, phases, profiles, mode, ps_per_node, pts, big_m)


def instance_to_doc(inst: Instance) -> dict:
    """Self-contained JSON form: everything needed to re-check a solution."""
    app = asdict(inst.app)
    app["capacity"] = dict(inst.app.capacity)
    return {
        "mode": inst.mode,
        "ps_per_node": inst.ps_per_node,
        "app": app,
        "phases": asdict(inst.phases),
        "patients": dict(sorted(inst.patients.items())),
        "profiles": {k: inst.profiles[k].to_dict() for k in sorted(inst.profiles)},
        "topology": inst.topology.to_doc(),
        "big_m": inst.big_m,
    }


def instance_from_doc(doc: Mapping) -> Instance:
    fields = dict(doc["app"])
    name = fields.pop("name")
    app = AppProfile(name=name, **fields)
    return Instance(load_topology(doc["topology"]), app, PhaseParams(**doc["phases"]),
                    load_profiles(doc["profiles"]), doc.get("mode", "foa"),
                    doc.get("ps_per_node", 1), dict(doc["patients"]), doc.get("big_m"))

"""Placement solutions and their construction from patient assignments.

A solution is stored at flow level (bits/s per commodity and directed link,
for each of the three phases) so it can be checked and priced without
trusting whoever produced it.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .app_traffic import processing_time

__all__ = ["PlacementSolution", "build_solution", "PHASES"]

PHASES = ("raw", "feedback", "storage")


def _k(t) -> str:
    return "|".join(t)


def _unk(s: str) -> tuple:
    return tuple(s.split("|"))


@dataclass
class PlacementSolution:
    omega: dict = field(default_factory=dict)       # (clinic, fog) -> patients
    phi: dict = field(default_factory=dict)         # fog -> PS count
    raw_bs: dict = field(default_factory=dict)      # (clinic, bs, fog) -> patients, upload
    fb_bs: dict = field(default_factory=dict)       # (clinic, bs, fog) -> patients, feedback
    flows: dict = field(default_factory=lambda: {p: {} for p in PHASES})
    tau_p: dict = field(default_factory=dict)       # fog -> processing time (s)
    switch: bool = False
    activations: dict | None = None                 # optional solver-side flags

    @property
    def placement(self) -> dict:
        """Y_d for every fog node that hosts at least one PS."""
        return {d: 1 for d, n in self.phi.items() if n > 0}

    @property
    def servers(self) -> int:
        return sum(self.phi.values())

    def fog_load(self) -> dict:
        out = defaultdict(int)
        for (_, d), n in self.omega.items():
            out[d] += n
        return dict(out)

    def placement_vector(self, candidates) -> tuple:
        return tuple(self.phi.get(d, 0) for d in candidates)

    def to_dict(self) -> dict:
        return {
            "omega": {_k(k): v for k, v in sorted(self.omega.items())},
            "phi": dict(sorted(self.phi.items())),
            "raw_bs": {_k(k): v for k, v in sorted(self.raw_bs.items())},
            "fb_bs": {_k(k): v for k, v in sorted(self.fb_bs.items())},
            "flows": {p: {_k(k): v for k, v in sorted(self.flows.get(p, {}).items())}
                      for p in PHASES},
            "tau_p": dict(sorted(self.tau_p.items())),
            "switch": self.switch,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PlacementSolution":
        return cls(
            omega={_unk(k): int(v) for k, v in doc.get("omega", {}).items()},
            phi={k: int(v) for k, v in doc.get("phi", {}).items()},
            raw_bs={_unk(k): int(v) for k, v in doc.get("raw_bs", {}).items()},
            fb_bs={_unk(k): int(v) for k, v in doc.get("fb_bs", {}).items()},
            flows={p: {_unk(k): float(v) for k, v in doc.get("flows", {}).get(p, {}).items()}
                   for p in PHASES},
            tau_p={k: float(v) for k, v in doc.get("tau_p", {}).items()},
            switch=bool(doc.get("switch", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _add_path(store: dict, src: str, dst: str, path, rate: float) -> None:
    for u, v in zip(path, path[1:]):
        key = (src, dst, u, v)
        store[key] = store.get(key, 0.0) + rate


def build_solution(inst, phi: Mapping[str, int], raw_bs: Mapping, fb_bs: Mapping) -> PlacementSolution:
    """Expand per-patient assignments into a full flow-level solution.

    ``raw_bs`` / ``fb_bs`` map (clinic, bs, fog) to patient counts; routes are
    the instance's min-hop routes.
    """
    ph = inst.phases
    raw_bs = {k: int(v) for k, v in raw_bs.items() if v > 0}
    fb_bs = {k: int(v) for k, v in fb_bs.items() if v > 0}
    omega = defaultdict(int)
    for (s, _, d), n in raw_bs.items():
        omega[(s, d)] += n
    flows = {p: {} for p in PHASES}
    for (s, j, d), n in sorted(raw_bs.items()):
        _add_path(flows["raw"], s, d, inst.raw_route(s, j, d), n * ph.rate_up_bps)
    for (s, j, d), n in sorted(fb_bs.items()):
        _add_path(flows["feedback"], d, s, inst.fb_route(s, j, d), n * ph.rate_fb_bps)
    load = defaultdict(int)
    for (_, d), n in omega.items():
        load[d] += n
    cst = inst.topology.cloud_storage
    for d in sorted(load):
        _add_path(flows["storage"], d, cst, inst.storage_route(d), load[d] * ph.rate_st_bps)
    phi = {d: int(n) for d, n in phi.items() if n > 0}
    tau_p = {d: processing_time(inst.app, load.get(d, 0), n) for d, n in sorted(phi.items())}
    return PlacementSolution(dict(omega), phi, raw_bs, fb_bs, flows, tau_p, inst.switch)

"""Application profiles and the rate/duration derivation chain.

Each monitoring round has three phases: upload of the raw recording,
feedback of the analysed result to the clinic and storage of the result in
the cloud. Rates on the LTE-M hop are quantised to whole PRBs of 336 b/s.

The chain runs feedback first (its duration eats into the budget), then
upload, then storage::

    delta_f = cb_min / pat_max        Rb = max(1, floor(delta_f / 336))
    tau_max = tau_t - tau_m - tau_b - tau_p
    delta_min = D / tau_max           Ra = max(1, ceil(delta_min / 336))
    delta_c = cc_min / pat_max        tau_c = alpha / delta_c
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

__all__ = [
    "TrafficError",
    "AppProfile",
    "PhaseParams",
    "processing_time",
    "derive_feedback",
    "derive_upload",
    "derive_storage",
    "derive_phases",
    "load_apps",
    "get_app",
    "capacity_shares",
    "pat_max_for",
]

PRB_BPS = 336.0


class TrafficError(ValueError):
    pass


@dataclass(frozen=True)
class AppProfile:
    name: str
    raw_size_bits: float
    analyzed_size_bits: float
    budget_s: float = 240.0
    record_s: float = 30.0
    proc_slope: float | None = None
    proc_intercept: float | None = None
    per_frame_proc_s: float | None = None
    frame_rate: float | None = None
    max_patients_per_ps: int = 1
    ps_storage_bits: float = 4e12
    prb_rate_bps: float = PRB_BPS
    max_prb: int = 360
    ps_profile: str = "ps"
    capacity: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not (self.raw_size_bits > self.analyzed_size_bits > 0):
            raise TrafficError(f"{self.name}: need raw_size_bits > analyzed_size_bits > 0")
        if not (self.budget_s > self.record_s > 0):
            raise TrafficError(f"{self.name}: need budget_s > record_s > 0")
        linear = self.proc_slope is not None or self.proc_intercept is not None
        frames = self.per_frame_proc_s is not None
        if linear == frames:
            raise TrafficError(
                f"{self.name}: give either proc_slope/proc_intercept or per_frame_proc_s")
        if linear and (self.proc_slope is None or self.proc_intercept is None):
            raise TrafficError(f"{self.name}: proc_slope and proc_intercept go together")
        if self.max_patients_per_ps < 0:
            raise TrafficError(f"{self.name}: max_patients_per_ps must be >= 0")

    @property
    def per_recording_proc_s(self) -> float | None:
        """Serial processing time of one recording (frame-based apps only)."""
        if self.per_frame_proc_s is None:
            return None
        return self.record_s * (self.frame_rate or 1.0) * self.per_frame_proc_s

    @property
    def patients_per_server(self) -> int:
        """Effective per-PS patient cap: the tighter of Omega_max and storage."""
        by_disk = math.floor(self.ps_storage_bits / self.analyzed_size_bits)
        return min(self.max_patients_per_ps, by_disk)

    def with_patients_per_ps(self, n: int) -> "AppProfile":
        from dataclasses import replace
        return replace(self, max_patients_per_ps=int(n))


@dataclass(frozen=True)
class PhaseParams:
    ra: int
    rate_up_bps: float
    time_up_s: float
    rb: int
    rate_fb_bps: float
    time_fb_s: float
    rate_st_bps: float
    time_st_s: float
    tau_p: float = 0.0
    pat_max: int = 0

    @property
    def total_phase_s(self) -> float:
        return self.time_up_s + self.time_fb_s + self.time_st_s

    def as_row(self) -> dict:
        return {
            "Ra": self.ra, "delta_a_bps": self.rate_up_bps, "tau_a_s": self.time_up_s,
            "Rb": self.rb, "delta_b_bps": self.rate_fb_bps, "tau_b_s": self.time_fb_s,
            "delta_c_bps": self.rate_st_bps, "tau_c_s": self.time_st_s,
            "tau_p_s": self.tau_p, "pat_max": self.pat_max,
        }


def processing_time(app: AppProfile, patients: float, servers: int) -> float:
    if patients < 0:
        raise TrafficError("patients must be >= 0")
    if patients > 0 and servers < 1:
        raise TrafficError("patients > 0 need at least one server")
    if app.per_frame_proc_s is not None:
        return app.per_recording_proc_s * patients
    return app.proc_slope * patients + app.proc_intercept * servers


def derive_feedback(app: AppProfile, cb_min: float, pat_max: int):
    """Feedback PRBs, rate and duration for the worst-case patient count.

    Rb is the largest whole PRB count that keeps pat_max patients within the
    feedback share cb_min, with a floor of one PRB.
    """
    if cb_min <= 0 or pat_max < 1:
        raise TrafficError("need cb_min > 0 and pat_max >= 1")
    delta_f = cb_min / pat_max
    # tiny epsilon guards exact multiples against float noise
    rb = max(1, math.floor(delta_f / app.prb_rate_bps + 1e-12))
    rate = rb * app.prb_rate_bps
    return rb, rate, app.analyzed_size_bits / rate


def derive_upload(app: AppProfile, tau_b: float, tau_p: float):
    tau_max = app.budget_s - app.record_s - tau_b - tau_p
    if tau_max <= 0:
        raise TrafficError("timing budget exhausted")
    delta_min = app.raw_size_bits / tau_max
    ra = max(1, math.ceil(delta_min / app.prb_rate_bps - 1e-12))
    rate = ra * app.prb_rate_bps
    return ra, rate, app.raw_size_bits / rate


def derive_storage(app: AppProfile, cc_min: float, pat_max: int):
    if cc_min <= 0 or pat_max < 1:
        raise TrafficError("need cc_min > 0 and pat_max >= 1")
    rate = cc_min / pat_max
    return rate, app.analyzed_size_bits / rate


def pat_max_for(app: AppProfile, total_patients: int, ps_per_node: int | None) -> int:
    """Worst-case patients sharing one fog node's links.

    With a PS cap per node it is the node's PS capacity (never more than the
    population); with a variable PS count one node may serve everybody.
    """
    total = max(1, int(total_patients))
    if ps_per_node is None:
        return total
    return max(1, min(total, app.max_patients_per_ps * ps_per_node))


def derive_phases(app: AppProfile, cb_min: float, cc_min: float, pat_max: int,
                  tau_p: float | None = None) -> PhaseParams:
    """Run the full chain.

    ``tau_p`` defaults to the processing time of one fully loaded PS, i.e.
    min(Omega_max, pat_max) patients on a single server.
    """
    if tau_p is None:
        tau_p = processing_time(app, min(app.max_patients_per_ps, pat_max), 1)
    rb, rate_fb, tau_b = derive_feedback(app, cb_min, pat_max)
    ra, rate_up, tau_a = derive_upload(app, tau_b, tau_p)
    rate_st, tau_c = derive_storage(app, cc_min, pat_max)
    return PhaseParams(ra, rate_up, tau_a, rb, rate_fb, tau_b, rate_st, tau_c,
                       tau_p=tau_p, pat_max=int(pat_max))


def capacity_shares(app: AppProfile, mode: str) -> tuple[float, float]:
    """(cb_min, cc_min) preset for ``mode`` ("foa" or "ca")."""
    try:
        caps = app.capacity[mode.lower()]
    except KeyError:
        raise TrafficError(f"{app.name}: no capacity preset for mode {mode!r}") from None
    return float(caps["cb_min_bps"]), float(caps["cc_min_bps"])


def _parse_apps(doc: Mapping) -> dict[str, AppProfile]:
    out = {}
    for name, fields in doc.get("apps", doc).items():
        fields = dict(fields)
        try:
            out[name] = AppProfile(name=name, **fields)
        except TypeError as exc:
            raise TrafficError(f"app {name!r}: {exc}") from None
    return out


def load_apps(source=None) -> dict[str, AppProfile]:
    if source is None:
        text = resources.files("fogplace").joinpath("data/apps.json").read_text()
        return _parse_apps(json.loads(text))
    if isinstance(source, Mapping):
        return _parse_apps(source)
    with open(source) as fh:
        return _parse_apps(json.load(fh))


def get_app(name: str, source=None) -> AppProfile:
    apps = load_apps(source)
    if name not in apps:
        raise TrafficError(f"unknown app {name!r}; known: {sorted(apps)}")
    return apps[name]

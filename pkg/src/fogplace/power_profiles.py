"""Linear power-vs-load device models.

Every device draws a fixed idle power plus a part proportional to its load.
Shared equipment only charges a fraction ``idle_share`` of its idle power to
the health application. Site overheads (PUE) are carried on the profile but
applied by the energy module, never here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

__all__ = [
    "ProfileError",
    "DevicePowerProfile",
    "device_power",
    "energy_per_bit",
    "scale_idle",
    "load_profiles",
    "default_profiles",
]

# load units understood by the energy module
UNITS = ("bps", "prb", "bits", "utilization")


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class DevicePowerProfile:
    id: str
    p_max: float
    p_idle: float
    c_max: float
    idle_share: float = 1.0
    pue: float = 1.0
    unit: str = "bps"
    redundancy: int = 1

    def __post_init__(self):
        if not (0.0 <= self.p_idle <= self.p_max):
            raise ProfileError(f"{self.id}: need 0 <= p_idle <= p_max")
        if not self.c_max > 0:
            raise ProfileError(f"{self.id}: c_max must be positive")
        if not (0.0 < self.idle_share <= 1.0):
            raise ProfileError(f"{self.id}: idle_share must be in (0, 1]")
        if self.pue < 1.0:
            raise ProfileError(f"{self.id}: pue must be >= 1")
        if self.unit not in UNITS:
            raise ProfileError(f"{self.id}: unknown unit {self.unit!r}")
        if self.redundancy < 1:
            raise ProfileError(f"{self.id}: redundancy must be >= 1")

    @property
    def slope(self) -> float:
        """Power per unit of load (W per bit/s, per PRB, per bit, ...)."""
        return (self.p_max - self.p_idle) / self.c_max

    @property
    def attributed_idle(self) -> float:
        return self.p_idle * self.idle_share

    def to_dict(self) -> dict:
        return {
            "p_max": self.p_max,
            "p_idle": self.p_idle,
            "c_max": self.c_max,
            "idle_share": self.idle_share,
            "pue": self.pue,
            "unit": self.unit,
            "redundancy": self.redundancy,
        }


def device_power(profile: DevicePowerProfile, load: float) -> float:
    """Power drawn at ``load`` (same unit as ``c_max``)."""
    if load < 0 or load > profile.c_max:
        raise ProfileError(
            f"{profile.id}: load {load} outside [0, {profile.c_max}]")
    return profile.p_idle + load * profile.slope


def energy_per_bit(profile: DevicePowerProfile) -> float:
    if profile.unit != "bps":
        raise ProfileError(f"{profile.id} is not a bit-rate device")
    return profile.slope


def scale_idle(profile: DevicePowerProfile, factor: float,
               keep_slope: bool = False) -> DevicePowerProfile:
    """Return a copy with idle power reduced by ``factor`` (0 keeps it, 1 removes it).

    p_max stays put, so power at any load can only fall. ``keep_slope``
    lowers p_max by the same amount instead, leaving the per-unit slope as is.
    """
    if not (0.0 <= factor <= 1.0):
        raise ProfileError(f"idle reduction factor {factor} outside [0, 1]")
    cut = profile.p_idle * factor
    p_max = profile.p_max - cut if keep_slope else profile.p_max
    return replace(profile, p_idle=profile.p_idle - cut, p_max=p_max)


def _parse_catalog(doc: Mapping) -> dict[str, DevicePowerProfile]:
    raw = doc.get("profiles", doc)
    out: dict[str, DevicePowerProfile] = {}
    for pid, fields in raw.items():
        if not isinstance(fields, Mapping):
            raise ProfileError(f"profile {pid!r} must be an object")
        fields = dict(fields)
        # "idle_fraction" is accepted for devices whose idle is a share of p_max
        frac = fields.pop("idle_fraction", None)
        if "p_idle" not in fields:
            if frac is None:
                raise ProfileError(f"profile {pid!r}: p_idle or idle_fraction required")
            fields["p_idle"] = frac * fields["p_max"]
        try:
            out[pid] = DevicePowerProfile(id=pid, **fields)
        except TypeError as exc:
            raise ProfileError(f"profile {pid!r}: {exc}") from None
    return out


def default_profiles() -> dict[str, DevicePowerProfile]:
    text = resources.files("fogplace").joinpath("data/profiles.json").read_text()
    return _parse_catalog(json.loads(text))


def load_profiles(source=None, overrides: Mapping | None = None) -> dict[str, DevicePowerProfile]:
    """Load a profile catalog.

    ``source`` may be a path, a JSON string, a mapping or None (shipped defaults).
    ``overrides`` maps profile id to a dict of replacement fields.
    """
    if source is None:
        cat = default_profiles()
    elif isinstance(source, Mapping):
        cat = _parse_catalog(source)
    else:
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        try:
            cat = _parse_catalog(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ProfileError(f"cannot parse profile catalog: {exc}") from None
    for pid, fields in (overrides or {}).items():
        if pid not in cat:
            raise ProfileError(f"override for unknown profile {pid!r}")
        cat[pid] = replace(cat[pid], **fields)
    return cat

"""Clinic roster ingestion, scenario sweeps and result tables.

A scenario pins every knob except one sweep axis (idle reduction, traffic
scale, patients per PS or PSs per node) and solves the fog placement at each
point, optionally next to a cloud baseline. Savings are recomputed from the
two energy breakdowns whenever they are read.

Results CSV columns (one row per sweep point, in point order)::

    scenario, axis, point, solver, status, gap, patients, pat_max,
    ra, rate_up_bps, time_up_s, rb, rate_fb_bps, time_fb_s,
    rate_st_bps, time_st_s, tau_p_s, placement, servers,
    foa_network_J, foa_processing_J, foa_total_J,
    ca_status, ca_network_J, ca_processing_J, ca_total_J,
    network_saving_pct, processing_increase_pct, total_saving_pct

``placement`` is ``node:count`` pairs joined by ``;``. Floats carry six
significant digits. Wall-clock times are left out so reruns are
byte-identical; they stay available on :class:`ResultRow`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from importlib import resources
from typing import Mapping, Sequence

from .app_traffic import TrafficError, get_app
from .energy_accounting import EnergyBreakdown
from .eofc_heuristic import HeuristicError, run_eofc
from .exact_solver import SolveReport, SolverError, solve_exact
from .instance import Instance, InstanceError, make_instance
from .oracle import ORACLE_LIMITS, OracleError, brute_force_oracle
from .power_profiles import load_profiles, scale_idle
from .topology import Node, NodeKind, Topology, west_leeds

__all__ = [
    "DatasetError", "ClinicCount", "Roster", "load_dataset",
    "Scenario", "load_scenario", "ResultRow", "run_scenario", "build_point",
    "emit_results", "read_results", "COLUMNS", "AXES", "round_half_up",
    "scale_patients", "restrict_candidates", "discrepancy_notes", "select_solver",
]

log = logging.getLogger(__name__)

AXES = ("none", "idle", "traffic", "patients_per_ps", "ps_per_node")
SOLVERS = ("auto", "exact", "heuristic", "oracle")

COLUMNS = (
    "scenario", "axis", "point", "solver", "status", "gap", "patients", "pat_max",
    "ra", "rate_up_bps", "time_up_s", "rb", "rate_fb_bps", "time_fb_s",
    "rate_st_bps", "time_st_s", "tau_p_s", "placement", "servers",
    "foa_network_J", "foa_processing_J", "foa_total_J",
    "ca_status", "ca_network_J", "ca_processing_J", "ca_total_J",
    "network_saving_pct", "processing_increase_pct", "total_saving_pct",
)

_DISCREPANCY = ("clinic-BS adjacency and link capacities of the shipped West Leeds "
                "topology are a seeded reconstruction (scripts/gen_west_leeds.py); "
                "the published study does not list them")


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------- dataset

@dataclass(frozen=True)
class ClinicCount:
    name: str
    ecg: int
    fall: int

    def patients(self, app: str) -> int:
        return self.ecg if app == "ecg" else self.fall


@dataclass(frozen=True)
class Roster:
    clinics: tuple = ()

    def __len__(self) -> int:
        return len(self.clinics)

    def total(self, app: str) -> int:
        return sum(c.patients(app) for c in self.clinics)

    def get(self, name: str) -> ClinicCount:
        for c in self.clinics:
            if c.name == name:
                return c
        raise KeyError(name)

    def apply(self, topology: Topology) -> Topology:
        """Topology copy carrying this roster's counts.

        Rows are matched to clinic nodes by the names in the topology's
        ``meta.clinic_names`` map, falling back to node ids. Clinics the
        roster does not mention get zero patients.
        """
        names = dict(topology.meta.get("clinic_names", {}))
        by_name = {v: k for k, v in names.items()}
        counts = {c: (0, 0) for c in topology.clinics}
        for row in self.clinics:
            cid = by_name.get(row.name, row.name)
            if cid not in counts:
                raise DatasetError(f"roster clinic {row.name!r} is not in the topology")
            counts[cid] = (row.ecg, row.fall)
        nodes = []
        for n in topology.nodes:
            if n.id in counts:
                d = n.__dict__.copy()
                d["patients_ecg"], d["patients_fall"] = counts[n.id]
                n = Node(**d)
            nodes.append(n)
        return Topology(nodes, topology.links, topology.meta)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_dataset(path=None, expected_sha256: str | None = None) -> Roster:
    """Read a ``clinic,patients_ecg,patients_fall`` roster.

    Without ``path`` the shipped West Leeds roster is read. A checksum is
    enforced when given, or when a ``<file>.sha256`` sidecar exists.
    """
    if path is None:
        ref = resources.files("fogplace").joinpath("data/west_leeds_clinics.csv")
        data = ref.read_bytes()
        side = resources.files("fogplace").joinpath("data/west_leeds_clinics.csv.sha256")
        sidecar = side.read_text() if side.is_file() else None
    else:
        p = Path(path)
        if not p.is_file():
            raise DatasetError(f"no such dataset: {p}")
        data = p.read_bytes()
        sp = p.with_name(p.name + ".sha256")
        sidecar = sp.read_text() if sp.is_file() else None
    want = expected_sha256 or (sidecar.split()[0] if sidecar and sidecar.strip() else None)
    if want and _sha256(data) != want.lower():
        raise DatasetError("dataset checksum mismatch")
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError:
        raise DatasetError("dataset is not UTF-8") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["clinic", "patients_ecg", "patients_fall"]:
        raise DatasetError("header must be clinic,patients_ecg,patients_fall")
    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        if not rec or not any(x.strip() for x in rec):
            continue
        if len(rec) != 3:
            raise DatasetError(f"line {lineno}: expected 3 fields, got {len(rec)}")
        name = rec[0].strip()
        try:
            ecg, fall = int(rec[1]), int(rec[2])
        except ValueError:
            raise DatasetError(f"line {lineno}: patient counts must be integers") from None
        if not name or ecg < 0 or fall < 0:
            raise DatasetError(f"line {lineno}: bad row {rec}")
        if name in seen:
            raise DatasetError(f"line {lineno}: duplicate clinic {name!r}")
        seen.add(name)
        rows.append(ClinicCount(name, ecg, fall))
    return Roster(tuple(rows))


# --------------------------------------------------------------- scenario

def _ppn(v):
    if v is None or v == "variable":
        return None
    v = int(v)
    if v < 1:
        raise ValueError("ps_per_node must be >= 1 or 'variable'")
    return v


@dataclass(frozen=True)
class Scenario:
    """One sweep. Pinned values apply at every point except on ``axis``.

    ``patients_per_ps`` is a fraction of the roster total (None keeps the
    application default). ``idle_classes`` maps a profile id to one idle
    reduction per sweep point and replaces the axis value for that device.
    ``baseline`` holds the fields that differ for the cloud comparison run.
    """
    name: str
    app: str = "ecg"
    mode: str = "foa"
    solver: str = "auto"
    ps_per_node: int | None = 1
    patients_per_ps: float | None = None
    traffic_scale: float = 0.0
    idle_reduction: float = 0.0
    idle_classes: Mapping = field(default_factory=dict)
    cb_min: float | None = None
    cc_min: float | None = None
    axis: str = "none"
    points: tuple = (0.0,)
    baseline: Mapping | None = None
    reference: Mapping = field(default_factory=dict)
    time_limit: float | None = None

    def __post_init__(self):
        if self.app not in ("ecg", "fall"):
            raise ValueError(f"unknown app {self.app!r}")
        if self.mode not in ("foa", "ca"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.points:
            raise ValueError("a scenario needs at least one sweep point")
        if self.axis == "none" and len(self.points) != 1:
            raise ValueError("axis 'none' takes exactly one point")
        for pid, vals in self.idle_classes.items():
            if len(vals) != len(self.points):
                raise ValueError(f"idle_classes[{pid!r}] needs one value per point")
        if self.baseline and set(self.baseline) - {"mode", "ps_per_node", "cb_min", "cc_min"}:
            raise ValueError("baseline may only override mode, ps_per_node, cb_min, cc_min")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        d = dict(doc)
        sweep = d.pop("sweep", None) or {"axis": "none", "points": [0.0]}
        d["axis"] = sweep["axis"]
        d["points"] = tuple(sweep["points"])
        d["ps_per_node"] = _ppn(d.get("ps_per_node", 1))
        d["idle_classes"] = {k: tuple(v) for k, v in d.get("idle_classes", {}).items()}
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scenario fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "app": self.app, "mode": self.mode, "solver": self.solver,
            "ps_per_node": "variable" if self.ps_per_node is None else self.ps_per_node,
            "patients_per_ps": self.patients_per_ps, "traffic_scale": self.traffic_scale,
            "idle_reduction": self.idle_reduction,
            "idle_classes": {k: list(v) for k, v in self.idle_classes.items()},
            "cb_min": self.cb_min, "cc_min": self.cc_min,
            "sweep": {"axis": self.axis, "points": list(self.points)},
            "baseline": dict(self.baseline) if self.baseline else None,
            "reference": dict(self.reference), "time_limit": self.time_limit,
        }

    def at(self, i: int) -> "Scenario":
        """Copy with the axis value of point ``i`` pinned."""
        v = self.points[i]
        if self.axis == "idle":
            return replace(self, idle_reduction=float(v))
        if self.axis == "traffic":
            return replace(self, traffic_scale=float(v))
        if self.axis == "patients_per_ps":
            return replace(self, patients_per_ps=float(v))
        if self.axis == "ps_per_node":
            return replace(self, ps_per_node=_ppn(v))
        return self


def load_scenario(source) -> Scenario:
    if isinstance(source, Mapping):
        return Scenario.from_dict(source)
    p = Path(source)
    if not p.is_file():
        shipped = resources.files("fogplace").joinpath(f"data/scenarios/{p.name}")
        if not shipped.is_file():
            shipped = resources.files("fogplace").joinpath(f"data/scenarios/{p.name}.json")
        if not shipped.is_file():
            raise FileNotFoundError(source)
        return Scenario.from_dict(json.loads(shipped.read_text()))
    return Scenario.from_dict(json.loads(p.read_text()))


# ------------------------------------------------------------ point setup

def round_half_up(x) -> int:
    return math.floor(Fraction(x) + Fraction(1, 2))


def scale_patients(counts: Mapping[str, int], scale: float) -> dict:
    """Grow every clinic by ``scale`` (0.1 = +10%), rounding each half-up."""
    f = 1 + Fraction(str(scale))
    return {c: round_half_up(n * f) for c, n in counts.items()}


def restrict_candidates(topology: Topology, app: str, limit: int = 8) -> Topology:
    """Keep the OLT and the ONUs whose BSs reach the most patients.

    Cloud-side candidates are left alone. Used to build reduced instances for
    the exact solver.
    """
    onus = [n.id for n in topology.nodes if n.kind == NodeKind.ONU and n.fog_candidate]
    reach = {}
    for o in onus:
        bss = [b for b in topology.neighbors(o) if topology.kind(b) == NodeKind.BASE_STATION]
        cl = {c for b in bss for c in topology.neighbors(b) if topology.kind(c) == NodeKind.CLINIC}
        reach[o] = sum(topology.node(c).patients(app) for c in cl)
    keep = set(sorted(onus, key=lambda o: (-reach[o], o))[:max(0, limit - 1)])
    nodes = []
    for n in topology.nodes:
        if n.kind == NodeKind.ONU and n.fog_candidate and n.id not in keep:
            d = n.__dict__.copy()
            d["fog_candidate"] = False
            n = Node(**d)
        nodes.append(n)
    return Topology(nodes, topology.links, topology.meta)


def _profiles_at(sc: Scenario, i: int, profiles):
    base = profiles if isinstance(profiles, Mapping) else load_profiles(profiles)
    pinned = sc.at(i).idle_reduction
    out = {}
    for pid, prof in base.items():
        vals = sc.idle_classes.get(pid)
        factor = vals[i] if vals is not None else pinned
        out[pid] = scale_idle(prof, float(factor)) if factor else prof
    return out


def build_point(sc: Scenario, i: int, topology: Topology, profiles=None,
                baseline: bool = False) -> Instance:
    """Instance for sweep point ``i`` (the cloud baseline when asked)."""
    pt = sc.at(i)
    if baseline:
        over = dict(sc.baseline or {})
        if "ps_per_node" in over:
            over["ps_per_node"] = _ppn(over["ps_per_node"])
        pt = replace(pt, **over)
    app = get_app(sc.app)
    base = topology.patients(sc.app)
    if pt.patients_per_ps is not None:
        n = max(1, round_half_up(Fraction(str(pt.patients_per_ps)) * sum(base.values())))
        app = app.with_patients_per_ps(n)
    counts = scale_patients(base, pt.traffic_scale) if pt.traffic_scale else dict(base)
    topo = topology.with_patients(sc.app, counts)
    return make_instance(topo, app, pt.mode, profiles=_profiles_at(sc, i, profiles),
                         ps_per_node=pt.ps_per_node, patients=counts,
                         cb_min=pt.cb_min, cc_min=pt.cc_min)


def select_solver(inst: Instance, requested: str) -> tuple[str, bool]:
    """(solver, auto_selected). "auto" means exact within the oracle bounds."""
    if requested != "auto":
        return requested, False
    fits = (len(inst.candidates) <= ORACLE_LIMITS["candidates"]
            and inst.total_patients <= ORACLE_LIMITS["patients"]
            and len(inst.topology.base_stations) <= ORACLE_LIMITS["base_stations"])
    return ("exact" if fits else "heuristic"), True


def _solve(inst: Instance, solver: str, time_limit) -> SolveReport:
    if solver == "exact":
        return solve_exact(inst, time_limit=time_limit)
    if solver == "oracle":
        return brute_force_oracle(inst)
    return run_eofc(inst)


_SOLVE_ERRORS = (SolverError, HeuristicError, OracleError, InstanceError, TrafficError)


# ---------------------------------------------------------------- results

@dataclass
class ResultRow:
    scenario: str
    axis: str
    point: float
    solver: str
    status: str
    gap: float = math.nan
    wall_s: float = 0.0
    patients: int = 0
    phases: Mapping = field(default_factory=dict)
    placement: Mapping = field(default_factory=dict)
    foa: EnergyBreakdown | None = None
    ca: EnergyBreakdown | None = None
    ca_status: str = ""
    ca_wall_s: float = 0.0
    solution: object = field(default=None, repr=False, compare=False)
    ca_solution: object = field(default=None, repr=False, compare=False)

    @staticmethod
    def _pct(num, den):
        return 100.0 * num / den if den else math.nan

    @property
    def network_saving_pct(self) -> float:
        if self.foa is None or self.ca is None:
            return math.nan
        return self._pct(self.ca.network - self.foa.network, self.ca.network)

    @property
    def processing_increase_pct(self) -> float:
        if self.foa is None or self.ca is None:
            return math.nan
        return self._pct(self.foa.processing - self.ca.processing, self.ca.processing)

    @property
    def total_saving_pct(self) -> float:
        if self.foa is None or self.ca is None:
            return math.nan
        return self._pct(self.ca.total - self.foa.total, self.ca.total)

    def record(self) -> dict:
        ph = self.phases
        nan = math.nan
        foa, ca = self.foa, self.ca
        return {
            "scenario": self.scenario, "axis": self.axis, "point": self.point,
            "solver": self.solver, "status": self.status, "gap": self.gap,
            "patients": self.patients, "pat_max": ph.get("pat_max", 0),
            "ra": ph.get("ra", 0), "rate_up_bps": ph.get("rate_up_bps", nan),
            "time_up_s": ph.get("time_up_s", nan), "rb": ph.get("rb", 0),
            "rate_fb_bps": ph.get("rate_fb_bps", nan), "time_fb_s": ph.get("time_fb_s", nan),
            "rate_st_bps": ph.get("rate_st_bps", nan), "time_st_s": ph.get("time_st_s", nan),
            "tau_p_s": ph.get("tau_p", nan),
            "placement": ";".join(f"{k}:{v}" for k, v in sorted(self.placement.items())),
            "servers": sum(self.placement.values()),
            "foa_network_J": foa.network if foa else nan,
            "foa_processing_J": foa.processing if foa else nan,
            "foa_total_J": foa.total if foa else nan,
            "ca_status": self.ca_status,
            "ca_network_J": ca.network if ca else nan,
            "ca_processing_J": ca.processing if ca else nan,
            "ca_total_J": ca.total if ca else nan,
            "network_saving_pct": self.network_saving_pct,
            "processing_increase_pct": self.processing_increase_pct,
            "total_saving_pct": self.total_saving_pct,
        }


def _run_one(sc: Scenario, i: int, topology: Topology, profiles, with_baseline: bool):
    pt = sc.points[i]
    row = ResultRow(sc.name, sc.axis, pt, sc.solver, "error")
    try:
        inst = build_point(sc, i, topology, profiles)
    except _SOLVE_ERRORS as exc:
        row.status = f"error: {exc}"
        return row
    row.phases = asdict(inst.phases)
    row.patients = inst.total_patients
    solver, auto = select_solver(inst, sc.solver)
    row.solver = f"{solver} (auto)" if auto else solver
    try:
        rep = _solve(inst, solver, sc.time_limit)
        row.status, row.gap, row.wall_s = rep.status, rep.gap, rep.wall_s
        if rep.solution is not None:
            row.placement = {d: n for d, n in rep.solution.phi.items() if n > 0}
            row.foa = rep.breakdown
            row.solution = rep.solution
    except _SOLVE_ERRORS as exc:
        row.status = f"error: {exc}"
    if with_baseline:
        try:
            binst = build_point(sc, i, topology, profiles, baseline=True)
            bsolver, bauto = select_solver(binst, sc.solver)
            brep = _solve(binst, bsolver, sc.time_limit)
            row.ca_status, row.ca_wall_s = brep.status, brep.wall_s
            row.ca = brep.breakdown if brep.solution is not None else None
            row.ca_solution = brep.solution
        except _SOLVE_ERRORS as exc:
            row.ca_status = f"error: {exc}"
    return row


def run_scenario(scenario: Scenario, topology: Topology | None = None, profiles=None, *,
                 roster: Roster | None = None, workers: int = 1) -> list[ResultRow]:
    """One :class:`ResultRow` per sweep point, in point order.

    A point whose solve fails keeps its error in ``status`` and the sweep
    goes on. ``workers`` > 1 solves points in separate processes.
    """
    topo = topology if topology is not None else west_leeds()
    if roster is not None:
        topo = roster.apply(topo)
    if profiles is not None and not isinstance(profiles, Mapping):
        profiles = load_profiles(profiles)
    with_baseline = scenario.baseline is not None
    idx = range(len(scenario.points))
    if workers > 1 and len(scenario.points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_one, *zip(*[(scenario, i, topo, profiles, with_baseline)
                                                for i in idx])))
    else:
        rows = [_run_one(scenario, i, topo, profiles, with_baseline) for i in idx]
    for line in discrepancy_notes(scenario, rows, topo):
        log.info(line)
    return rows


def discrepancy_notes(scenario: Scenario, rows: Sequence[ResultRow],
                      topology: Topology | None = None) -> list[str]:
    """Lines comparing a run with its reference figures and naming the cause."""
    notes = []
    meta = topology.meta if topology is not None else {}
    if "generator" in meta or not scenario.reference:
        src = _DISCREPANCY if "generator" in meta else "custom topology"
        notes.append(f"{scenario.name}: topology source: {src}")
    for key, ref in sorted(scenario.reference.items()):
        vals = ref if isinstance(ref, (list, tuple)) else [ref] * len(rows)
        for row, want in zip(rows, vals):
            if want is None:
                continue
            got = getattr(row, key, math.nan)
            notes.append(f"{scenario.name} @ {row.axis}={row.point}: {key} {got:.1f} "
                         f"vs reference {want} ({got - want:+.1f} pp)")
    return notes


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".6g")
    return str(v)


def _json_val(v):
    if isinstance(v, float):
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(format(v, ".6g"))
    return v


def emit_results(rows: Sequence[ResultRow], sink, fmt: str = "csv") -> str:
    """Write rows as CSV or JSON ("json"/"structured"); returns the text."""
    recs = [r.record() for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for rec in recs:
            w.writerow([_fmt(rec[c]) for c in COLUMNS])
        text = buf.getvalue()
    elif fmt in ("json", "structured"):
        doc = {"columns": list(COLUMNS),
               "rows": [{c: _json_val(rec[c]) for c in COLUMNS} for rec in recs]}
        text = json.dumps(doc, indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    elif sink is not None:
        sink.write(text)
    return text


_INT_COLS = {"patients", "pat_max", "ra", "rb", "servers"}
_STR_COLS = {"scenario", "axis", "solver", "status", "placement", "ca_status"}


def _parse(col, v):
    if col in _STR_COLS:
        return "" if v is None else v
    if v is None or v == "":
        return math.nan
    if col in _INT_COLS:
        return int(v)
    return float(v)


def read_results(source, fmt: str = "csv") -> list[dict]:
    """Parse emitted results back into records (missing numbers become NaN)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    if fmt == "csv":
        rd = csv.DictReader(io.StringIO(text))
        return [{c: _parse(c, rec[c]) for c in COLUMNS} for rec in rd]
    doc = json.loads(text)
    return [{c: _parse(c, rec[c]) for c in COLUMNS} for rec in doc["rows"]]

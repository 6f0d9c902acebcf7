"""Command line entry point: ``fogplace run | verify | derive``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from .app_traffic import capacity_shares, derive_phases, get_app, pat_max_for
from .energy_accounting import total_energy
from .exact_solver import assemble
from .instance import instance_from_doc, instance_to_doc
from .lp_format import export_lp
from .power_profiles import load_profiles
from .scenario_runner import (build_point, discrepancy_notes, emit_results, load_dataset,
                              load_scenario, round_half_up, run_scenario)
from .solution import PlacementSolution
from .topology import load_topology_file, west_leeds
from .validation import validate

log = logging.getLogger("fogplace")

_DERIVE_ROWS = (
    ("pat_max", "pat_max", "{:d}"),
    ("Ra", "ra", "{:d}"),
    ("delta_a (b/s)", "rate_up_bps", "{:.6g}"),
    ("tau_a (s)", "time_up_s", "{:.6g}"),
    ("Rb", "rb", "{:d}"),
    ("delta_b (b/s)", "rate_fb_bps", "{:.6g}"),
    ("tau_b (s)", "time_fb_s", "{:.6g}"),
    ("delta_c (b/s)", "rate_st_bps", "{:.6g}"),
    ("tau_c (s)", "time_st_s", "{:.6g}"),
    ("tau_p (s)", "tau_p", "{:.6g}"),
)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fogplace",
                                 description="Energy-aware fog server placement for health monitoring.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario sweep and write result tables")
    r.add_argument("--scenario", required=True,
                   help="scenario JSON file or the name of a shipped scenario")
    r.add_argument("--topology", help="topology JSON (default: shipped West Leeds)")
    r.add_argument("--profiles", help="device power profile JSON (default: shipped)")
    r.add_argument("--dataset", help="clinic roster CSV applied to the topology")
    r.add_argument("--solver", choices=("exact", "heuristic", "oracle", "auto"),
                   help="override the scenario's solver")
    r.add_argument("--time-limit", type=float, help="exact solver time limit per solve (s)")
    r.add_argument("--workers", type=int, default=1, help="sweep points solved in parallel")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--export-lp", metavar="DIR", help="also write each point's MILP as LP text")

    v = sub.add_parser("verify", help="independently check a solution against an instance")
    v.add_argument("--solution", required=True)
    v.add_argument("--instance", required=True)

    d = sub.add_parser("derive", help="print derived phase parameters")
    d.add_argument("--app", choices=("ecg", "fall"), required=True)
    d.add_argument("--mode", choices=("foa", "ca"), required=True)
    d.add_argument("--ps-per-node", default=None,
                   help="PS cap per node or 'variable' (default: 1 for ecg, variable for fall)")
    d.add_argument("--patients-per-ps", type=float, default=None,
                   help="Omega_max as a fraction of all patients")
    d.add_argument("--patients", type=int, default=None,
                   help="total patients (default: shipped roster)")
    d.add_argument("--sweep", choices=("patients_per_ps", "ps_per_node"),
                   help="print one column per sweep point instead")
    d.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    return ap


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    if args.solver:
        sc = replace(sc, solver=args.solver)
    if args.time_limit is not None:
        sc = replace(sc, time_limit=args.time_limit)
    topo = load_topology_file(args.topology) if args.topology else west_leeds()
    if args.dataset:
        topo = load_dataset(args.dataset).apply(topo)
    profiles = load_profiles(args.profiles) if args.profiles else load_profiles()
    out = Path(args.out)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    (out / "solutions").mkdir(parents=True, exist_ok=True)

    rows = run_scenario(sc, topo, profiles, workers=args.workers)
    emit_results(rows, out / "results.csv", "csv")
    emit_results(rows, out / "results.json", "json")
    notes = discrepancy_notes(sc, rows, topo)
    (out / "notes.txt").write_text("".join(line + "\n" for line in notes))
    (out / "scenario.json").write_text(json.dumps(sc.to_dict(), indent=1) + "\n")

    lp_dir = Path(args.export_lp) if args.export_lp else None
    if lp_dir:
        lp_dir.mkdir(parents=True, exist_ok=True)
    for i, row in enumerate(rows):
        sides = [("foa", False, row.solution)]
        if sc.baseline is not None:
            sides.append(("ca", True, row.ca_solution))
        for tag, base, sol in sides:
            try:
                inst = build_point(sc, i, topo, profiles, baseline=base)
            except ValueError as exc:
                log.warning("point %d (%s): %s", i, tag, exc)
                continue
            stem = f"p{i:02d}_{tag}"
            (out / "instances" / f"{stem}.json").write_text(
                json.dumps(instance_to_doc(inst), indent=1) + "\n")
            if sol is not None:
                (out / "solutions" / f"{stem}.json").write_text(sol.dumps() + "\n")
            if lp_dir:
                export_lp(assemble(inst), lp_dir / f"{sc.name}_{stem}.lp")
    for row in rows:
        print(f"{sc.axis}={row.point:<6g} {row.solver:<17} {row.status:<9} "
              f"FOA {row.foa.total if row.foa else float('nan'):12.6g} J  "
              f"saving {row.total_saving_pct:7.3g}%")
    print(f"wrote {out / 'results.csv'}")
    return 0 if all(not r.status.startswith("error") for r in rows) else 1


def _cmd_verify(args) -> int:
    inst = instance_from_doc(json.loads(Path(args.instance).read_text()))
    sol = PlacementSolution.from_dict(json.loads(Path(args.solution).read_text()))
    rep = validate(sol, inst)
    e = total_energy(sol, inst)
    print(rep)
    print(f"placement: {dict(sorted(sol.phi.items()))}")
    print(f"energy (J): network {e.network:.10g} processing {e.processing:.10g} total {e.total:.10g}")
    return 0 if rep.ok else 1


def _derive_one(app_name, mode, ppn, frac, total):
    app = get_app(app_name)
    if frac is not None:
        app = app.with_patients_per_ps(max(1, round_half_up(Fraction(str(frac)) * total)))
    cb, cc = capacity_shares(app, mode)
    return derive_phases(app, cb, cc, pat_max_for(app, total, ppn))


def _ppn_arg(v, app):
    if v is None:
        return 1 if app == "ecg" else None
    return None if v == "variable" else int(v)


def _cmd_derive(args) -> int:
    total = args.patients
    if total is None:
        total = sum(west_leeds().patients(args.app).values())
    ppn = _ppn_arg(args.ps_per_node, args.app)
    if args.sweep == "patients_per_ps":
        cols = [(f"{int(f * 100)}%", _derive_one(args.app, args.mode, ppn, f, total))
                for f in (0.2, 0.4, 0.6, 0.8, 1.0)]
    elif args.sweep == "ps_per_node":
        cols = [(f"{k} PS", _derive_one(args.app, args.mode, k, args.patients_per_ps, total))
                for k in range(1, 6)]
    else:
        cols = [(args.mode.upper(), _derive_one(args.app, args.mode, ppn, args.patients_per_ps, total))]
    if args.json:
        print(json.dumps({name: ph.as_row() for name, ph in cols}, indent=1))
        return 0
    print(f"{args.app} {args.mode.upper()} ({total} patients)")
    print(f"{'':16}" + "".join(f"{name:>12}" for name, _ in cols))
    for label, attr, fmt in _DERIVE_ROWS:
        print(f"{label:16}" + "".join(f"{fmt.format(getattr(ph, attr)):>12}" for _, ph in cols))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = {"run": _cmd_run, "verify": _cmd_verify, "derive": _cmd_derive}[args.cmd]
    return cmd(args)


if __name__ == "__main__":
    sys.exit(main())

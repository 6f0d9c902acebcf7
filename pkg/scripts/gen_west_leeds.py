#!/usr/bin/env python3
"""Generate the shipped West Leeds topology and clinic roster.

The real clinic/BS coordinates are not published, so clinic and BS
positions are drawn once from a seeded generator inside a 10 km x 10 km box
and each clinic is linked to its nearest BSs. Link shares follow the 0.3%
health allocation: LTE-M hops carry at most the 360-PRB health budget,
ONU-OLT links 0.3% of a 2.5 Gb/s GPON line over a 16-way split, metro and
core links 0.3% of 10 Gb/s.
"""
import argparse
import csv
import json
import re
from pathlib import Path

import numpy as np

ROSTER = [
    ('Craven Road Medical Practice', 20, 3),
    ('Hyde Park Surgery', 18, 1),
    ('Laurel Bank Surgery', 13, 1),
    ('Burley Park Medical Centre', 23, 4),
    ('Gildersome Health Centre', 6, 2),
    ('Leigh View Medical Practice', 29, 6),
    ('Hillfoot Surgery', 13, 2),
    ('Pudsey Health Centre', 13, 4),
    ('Dr. S M Chen & Partner', 8, 2),
    ('Hawthorn Surgery', 10, 3),
    ('High Field Surgery', 14, 3),
    ('Vesper Road Surgery', 11, 2),
    ('Manor Park Surgery', 27, 7),
    ('Dr. G Leeds & Partners', 25, 4),
    ('Guiselley and Yeadon Medical Practice', 21, 6),
    ('Yeadon Tarn Medical Practice', 12, 4),
    ('Dr. KJ Manock & Partners', 44, 11),
    ("Dr. JA Browne's Practice", 28, 6),
    ('Dr. JJ McPeakes Practice', 6, 2),
    ('Leeds Student Practice', 68, 0),
    ('Burton Croft Surgery', 20, 4),
    ('Kirkstall Lane Medical Centre', 15, 1),
    ('Thornton Medical Centre', 16, 5),
    ('The Dekeyser Group Practice', 30, 8),
    ('West Lodge Surgery', 32, 13),
    ('Dr. KW McGechaen & Partner', 8, 2),
    ('Robin Lane Medical Centre', 24, 6),
    ('Beech Tree Medical Centre', 4, 1),
    ('Priory View Medical Centre', 16, 6),
    ('Abbey Grange Medical Centre', 16, 4),
    ('Fieldhead Surgery', 10, 1),
    ('The Highfield Medical Centre', 9, 2),
    ("Dr. F Gupta's Practice", 6, 1),
    ('Park Road & Menston', 19, 6),
    ('Rawdon Surgery', 14, 4),
    ('Whitehall Surgery', 16, 2),
    ("Dr. N Saddiq's Practice", 5, 1),
]

LTE_BPS = 360 * 336             # health PRB budget of one BS
GPON_BPS = 2.5e9 * 0.003 / 16   # 468,750 b/s
METRO_BPS = 10e9 * 0.003


def slug(name):
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def build(seed=2015, n_bs=26, k_near=6):
    rng = np.random.default_rng(seed)
    clinic_xy = rng.uniform(0, 10, size=(len(ROSTER), 2))
    bs_xy = rng.uniform(0, 10, size=(n_bs, 2))
    dist = np.linalg.norm(clinic_xy[:, None, :] - bs_xy[None, :, :], axis=2)
    adj = set()
    for i in range(len(ROSTER)):
        for j in np.argsort(dist[i], kind="stable")[:k_near]:
            adj.add((i, int(j)))
    for j in range(n_bs):
        if not any(jj == j for _, jj in adj):
            adj.add((int(np.argmin(dist[:, j])), j))

    clinic_ids = [f"cl{i + 1:02d}-{slug(n)}" for i, (n, _, _) in enumerate(ROSTER)]
    nodes, links = [], []
    for cid, (name, ecg, fall) in zip(clinic_ids, ROSTER):
        nodes.append({"id": cid, "kind": "Clinic", "patients_ecg": ecg, "patients_fall": fall})
    for j in range(n_bs):
        nodes.append({"id": f"bs{j + 1:02d}", "kind": "BaseStation", "profile": "bs"})
    for j in range(n_bs):
        nodes.append({"id": f"onu{j + 1:02d}", "kind": "Onu", "profile": "onu", "fog_candidate": True})
    nodes.append({"id": "olt", "kind": "Olt", "profile": "olt", "fog_candidate": True})
    chain = [("cas", "CenterAggSwitch"), ("ar", "AggRouter"), ("cr", "CoreRouter"),
             ("clr", "CloudRouter"), ("cls", "CloudSwitch"), ("cs", "ContentServer"),
             ("cst", "CloudStorage")]
    for nid, kind in chain:
        nodes.append({"id": nid, "kind": kind, "profile": nid})
    for i, j in sorted(adj):
        links.append({"a": clinic_ids[i], "b": f"bs{j + 1:02d}", "capacity_bps": LTE_BPS})
    for j in range(n_bs):
        links.append({"a": f"bs{j + 1:02d}", "b": f"onu{j + 1:02d}", "capacity_bps": LTE_BPS})
        links.append({"a": f"onu{j + 1:02d}", "b": "olt", "capacity_bps": GPON_BPS})
    prev = "olt"
    for nid, _ in chain:
        links.append({"a": prev, "b": nid, "capacity_bps": METRO_BPS})
        prev = nid
    meta = {
        "name": "West Leeds (reconstructed)",
        "generator": f"scripts/gen_west_leeds.py --seed {seed} --bs {n_bs} --nearest {k_near}",
        "note": "Clinic/BS adjacency and link capacities are a seeded reconstruction; "
                "the real adjacency and per-link capacities are not published.",
        "clinic_names": {cid: n for cid, (n, _, _) in zip(clinic_ids, ROSTER)},
    }
    return {"meta": meta, "nodes": nodes, "links": links}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2015)
    ap.add_argument("--bs", type=int, default=26)
    ap.add_argument("--nearest", type=int, default=6)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/fogplace/data"))
    args = ap.parse_args()
    doc = build(args.seed, args.bs, args.nearest)
    out = Path(args.out)
    (out / "west_leeds.json").write_text(json.dumps(doc, indent=1) + "\n")
    with open(out / "west_leeds_clinics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clinic", "patients_ecg", "patients_fall"])
        for name, ecg, fall in ROSTER:
            w.writerow([name, ecg, fall])
    print(f"wrote {out}/west_leeds.json ({len(doc['nodes'])} nodes, {len(doc['links'])} links)")


if __name__ == "__main__":
    main()

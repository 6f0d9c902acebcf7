"""Time the heuristic's scoring kernels, compiled vs numpy fallback.

    python benchmarks/bench_kernels.py [--patterns 2000] [--nodes 97] [--repeat 5]

Also times one full heuristic solve of the West Leeds fall sweep point with
one PS per node (the largest combination search shipped) in both modes by
re-running itself with FOGPLACE_DISABLE_NUMBA set.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def kernel_times(patterns, nodes, repeat):
    from fogplace import _kernels
    rng = np.random.default_rng(0)
    loads = rng.integers(0, 3, size=(patterns, 3, nodes)).astype(float)
    fixed = rng.random((3, nodes))
    lin = rng.random((3, nodes))
    paths = 400
    lengths = rng.integers(2, 9, size=paths)
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    idx = rng.integers(0, nodes, size=int(starts[-1])).astype(np.int64)
    counts = rng.integers(1, 30, size=paths).astype(float)
    out = {}
    funcs = {"numpy": (_kernels.batch_phase_energy_py, _kernels.accumulate_paths_py)}
    if _kernels.NUMBA_ENABLED:
        funcs["numba"] = (_kernels.batch_phase_energy, _kernels.accumulate_paths)
    for name, (energy, acc) in funcs.items():
        energy(loads, fixed, lin)            # compile outside the clock
        acc(np.zeros(nodes), starts, idx, counts)
        t1 = min(timeit.repeat(lambda: energy(loads, fixed, lin), number=5, repeat=repeat)) / 5
        t2 = min(timeit.repeat(lambda: acc(np.zeros(nodes), starts, idx, counts),
                               number=20, repeat=repeat)) / 20
        out[name] = {"batch_phase_energy_s": t1, "accumulate_paths_s": t2}
    a = funcs["numpy"][0](loads, fixed, lin)
    if "numba" in funcs:
        b = funcs["numba"][0](loads, fixed, lin)
        out["max_rel_diff"] = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
    return out


def solve_time():
    import time
    from fogplace import _kernels
    from fogplace.eofc_heuristic import run_eofc
    from fogplace.scenario_runner import build_point, load_scenario
    from fogplace.topology import west_leeds
    sc = load_scenario("fall_ps_per_node")
    inst = build_point(sc, 0, west_leeds())
    run_eofc(inst)                           # warm caches and compilation
    t0 = time.perf_counter()
    rep = run_eofc(inst)
    return {"numba": _kernels.NUMBA_ENABLED, "solve_s": time.perf_counter() - t0,
            "objective_J": rep.objective}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--patterns", type=int, default=2000)
    ap.add_argument("--nodes", type=int, default=97)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.solve_only:
        print(json.dumps(solve_time()))
        return
    print(json.dumps(kernel_times(args.patterns, args.nodes, args.repeat), indent=1))
    for flag in ("0", "1"):
        env = dict(os.environ, FOGPLACE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, __file__, "--solve-only"], env=env,
                             capture_output=True, text=True, check=True)
        print(res.stdout.strip())


if __name__ == "__main__":
    main()

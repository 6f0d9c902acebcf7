"""Hot loops of the heuristic's combination scoring.

Set FOGPLACE_DISABLE_NUMBA=1 to run the plain numpy versions instead of the
compiled ones. Both compute the same sums; only the summation order differs.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["NUMBA_ENABLED", "batch_phase_energy", "batch_phase_energy_py",
           "accumulate_paths", "accumulate_paths_py"]


def batch_phase_energy_py(loads: np.ndarray, fixed: np.ndarray, lin: np.ndarray) -> np.ndarray:
    """Energy of m load patterns.

    loads is (m, 3, n) patients per phase and node; fixed and lin are (3, n)
    idle and per-patient joules. A node pays its idle share in a phase only
    when it carries someone then.
    """
    used = loads > 0
    return (used * fixed).sum(axis=(1, 2)) + (loads * lin).sum(axis=(1, 2))


def accumulate_paths_py(out: np.ndarray, starts: np.ndarray, nodes: np.ndarray,
                        counts: np.ndarray) -> None:
    """Add counts[i] to out at every node of path i (CSR layout)."""
    np.add.at(out, nodes[: starts[-1]], np.repeat(counts, np.diff(starts)))


def _compile():
    from numba import njit

    @njit(cache=True)
    def batch_phase_energy(loads, fixed, lin):
        m, P, n = loads.shape
        out = np.zeros(m)
        for k in range(m):
            acc = 0.0
            for p in range(P):
                for v in range(n):
                    x = loads[k, p, v]
                    if x > 0:
                        acc += fixed[p, v] + x * lin[p, v]
            out[k] = acc
        return out

    @njit(cache=True)
    def accumulate_paths(out, starts, nodes, counts):
        for i in range(counts.shape[0]):
            c = counts[i]
            for q in range(starts[i], starts[i + 1]):
                out[nodes[q]] += c

    return batch_phase_energy, accumulate_paths


NUMBA_ENABLED = os.environ.get("FOGPLACE_DISABLE_NUMBA", "").strip().lower() in ("", "0", "false", "no")
if NUMBA_ENABLED:
    try:
        batch_phase_energy, accumulate_paths = _compile()
    except ImportError:     # numba missing: fall back quietly
        NUMBA_ENABLED = False
if not NUMBA_ENABLED:
    batch_phase_energy = batch_phase_energy_py
    accumulate_paths = accumulate_paths_py

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fogplace import _kernels

numba = pytest.importorskip("numba")
fast_energy, fast_paths = _kernels._compile()


@given(st.integers(1, 6), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_batch_energy_agrees(m, n, seed):
    rng = np.random.default_rng(seed)
    loads = rng.integers(0, 4, size=(m, 3, n)).astype(float)
    fixed = rng.random((3, n)) * 100
    lin = rng.random((3, n))
    a = fast_energy(loads, fixed, lin)
    b = _kernels.batch_phase_energy_py(loads, fixed, lin)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@given(arrays(np.int64, st.integers(0, 8), elements=st.integers(1, 5)), st.integers(0, 2**32 - 1))
def test_path_accumulation_agrees(lengths, seed):
    rng = np.random.default_rng(seed)
    n = 10
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    nodes = rng.integers(0, n, size=int(starts[-1])).astype(np.int64)
    counts = rng.integers(1, 50, size=len(lengths)).astype(float)
    a, b = np.zeros(n), np.zeros(n)
    fast_paths(a, starts, nodes, counts)
    _kernels.accumulate_paths_py(b, starts, nodes, counts)
    np.testing.assert_array_equal(a, b)


_SCRIPT = """
import json
from fogplace import _kernels
from fogplace.eofc_heuristic import run_eofc
from fogplace.toys import random_instance
out = {}
for s in range(6):
    r = run_eofc(random_instance(s))
    out[s] = [r.objective, r.solution.to_dict()["phi"]]
print(json.dumps({"numba": _kernels.NUMBA_ENABLED, "runs": out}))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("FOGPLACE_DISABLE_NUMBA", None)
    if disable:
        env["FOGPLACE_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout)


def test_switch_selects_the_fallback_and_results_match():
    fast, slow = _run(False), _run(True)
    assert fast["numba"] is True and slow["numba"] is False
    for s, (obj, phi) in fast["runs"].items():
        assert slow["runs"][s][1] == phi
        assert slow["runs"][s][0] == pytest.approx(obj, rel=1e-12)

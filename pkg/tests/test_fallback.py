"""The pure-Python fallback produces bit-identical kernel results."""

import json
import os
import subprocess
import sys

import numpy as np

from stickyflow import kernels
from stickyflow._jit import NUMBA_ENABLED
from stickyflow.chain import split_cumulative
from stickyflow.params import AtomicMeasure, p_n_from_theta, theta_from_nu

WORKLOAD = """
import json
import numpy as np
from stickyflow import kernels
from stickyflow.chain import split_cumulative
from stickyflow.params import AtomicMeasure, p_n_from_theta, theta_from_nu

theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 3)
cum = split_cumulative(p_n_from_theta(theta, 400), 3)
t = np.empty(30); off = np.empty(30)
states = np.empty((30, 3), dtype=np.int64)
ev = np.empty(30, dtype=np.int64)
cap = np.empty(30, dtype=np.bool_)
kernels.batch_until_gap(np.uint64(5), 0, 30, np.zeros(3, dtype=np.int64), cum,
                        np.int64(4), 10**9, t, off, states, ev, cap)
mu = AtomicMeasure.from_pairs([(0.25, 1/3), (0.75, 2/3)])
pos = np.empty((40, 2), dtype=np.int64)
kernels.batch_particles_endstate(np.uint64(8), 0, 40,
                                 np.array([0, 1], dtype=np.int64), 4.0,
                                 mu.xs, mu.cumulative_weights(), pos)
print(json.dumps({"t": t.tolist(), "states": states.tolist(),
                  "pos": pos.tolist()}))
"""


def _run_workload(no_numba: bool) -> dict:
    env = dict(os.environ)
    env["STICKYFLOW_NO_NUMBA"] = "1" if no_numba else "0"
    proc = subprocess.run([sys.executable, "-c", WORKLOAD],
                          capture_output=True, text=True, env=env, check=True)
    return json.loads(proc.stdout)


def test_fallback_bit_identical_to_numba():
    jit = _run_workload(no_numba=False)
    fallback = _run_workload(no_numba=True)
    assert jit == fallback


def test_current_mode_matches_subprocess_reference():
    # whatever mode this test session runs in, it agrees with both paths
    theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 3)
    cum = split_cumulative(p_n_from_theta(theta, 400), 3)
    t = np.empty(30)
    off = np.empty(30)
    states = np.empty((30, 3), dtype=np.int64)
    ev = np.empty(30, dtype=np.int64)
    cap = np.empty(30, dtype=np.bool_)
    kernels.batch_until_gap(np.uint64(5), 0, 30, np.zeros(3, dtype=np.int64),
                            cum, np.int64(4), 10**9, t, off, states, ev, cap)
    ref = _run_workload(no_numba=not NUMBA_ENABLED)
    assert t.tolist() == ref["t"]
    assert states.tolist() == ref["states"]

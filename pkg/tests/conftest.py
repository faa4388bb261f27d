"""Shared fixtures and independent oracles.

The oracles below deliberately avoid the package's own machinery: Born-rule
amplitudes are summed index by index, small LPs are solved by enumerating
vertices, and the detection program is re-derived with explicit full-frequency
variables and handed to HiGHS.
"""

import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from detloophole.model import ExperimentSpec
from detloophole.presets import get_preset


@pytest.fixture
def archetypal():
    return ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2"), ("B1", "B2")))


@pytest.fixture(scope="session")
def preset_data():
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = get_preset(name).load()
        return cache[name]

    return load


def born_amplitude(state, bases, dims, setting, outcome):
    """<r_1 ... r_N| U_{s_1} x ... x U_{s_N} |psi>, summed term by term."""
    state = np.asarray(state).reshape(dims)
    total = 0j
    for idx in itertools.product(*(range(d) for d in dims)):
        term = state[idx]
        for i, (k, r) in enumerate(zip(setting, outcome)):
            term *= bases[i][k][r, idx[i]]
        total += term
    return total


def vertex_max(c, A, b):
    """max c.x over {A x <= b, x >= 0} by enumerating every vertex; None if empty."""
    c, A, b = (np.asarray(v, dtype=float) for v in (c, A, b))
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = None
    for active in itertools.combinations(range(m + n), n):
        M = G[list(active)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(active)])
        if np.all(G @ x <= h + 1e-9):
            val = float(c @ x)
            if best is None or val > best[0] + 1e-12:
                best = (val, x)
    return best


def reference_detection_lp(spec, q, maximize, fixed):
    """Critical efficiency from an independent formulation solved by HiGHS.

    Variables: category weights, full frequencies for every (setting, outcome),
    tally probabilities, per-slot detection probabilities and the objective t.
    """
    slots = [(i, k) for i, m in enumerate(spec.measurements) for k in range(len(m))]
    radix = [len(spec.detect_results[i][k]) + 1 for i, k in slots]
    cats = list(itertools.product(*(range(r) for r in radix)))
    settings = list(itertools.product(*(range(len(m)) for m in spec.measurements)))
    n_x = len(cats)
    cols = {}

    def col(key):
        if key not in cols:
            cols[key] = n_x + len(cols)
        return cols[key]

    outcomes = {}
    for s in settings:
        sizes = [len(spec.detect_results[i][k]) + 1 for i, k in enumerate(s)]
        outcomes[s] = list(itertools.product(*(range(z) for z in sizes)))
        for r in outcomes[s]:
            col(("qt", s, r))
        col(("v", s))
    for t in range(len(slots)):
        col(("pdet", t))
    col(("t",))
    n = n_x + len(cols)

    A_eq, b_eq, A_ub, b_ub = [], [], [], []

    def row():
        return np.zeros(n)

    r0 = row()
    r0[:n_x] = 1
    A_eq.append(r0)
    b_eq.append(1)
    slot_pos = {sl: t for t, sl in enumerate(slots)}
    for s in settings:
        for r in outcomes[s]:
            a = row()
            for c, j in enumerate(cats):
                if tuple(j[slot_pos[(i, k)]] for i, k in enumerate(s)) == r:
                    a[c] = 1
            a[cols[("qt", s, r)]] = -1
            A_eq.append(a)
            b_eq.append(0)
        for d, val in q[s].items():
            a = row()
            a[cols[("qt", s, d)]] = 1
            a[cols[("v", s)]] = -val
            A_eq.append(a)
            b_eq.append(0)
    for t, (i, k) in enumerate(slots):
        a = row()
        for c, j in enumerate(cats):
            if j[t] < radix[t] - 1:
                a[c] = 1
        a[cols[("pdet", t)]] = -1
        A_eq.append(a)
        b_eq.append(0)
        name = spec.observers[i]
        if name in maximize:
            a = row()
            a[cols[("t",)]] = 1
            a[cols[("pdet", t)]] = -1
            A_ub.append(a)
            b_ub.append(0)
        if name in fixed:
            a = row()
            a[cols[("pdet", t)]] = -1
            A_ub.append(a)
            b_ub.append(-fixed[name])
    cost = np.zeros(n)
    cost[cols[("t",)]] = -1
    bounds = [(0, None)] * n
    bounds[cols[("t",)]] = (0, 1)
    res = linprog(cost, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return None
    assert res.status == 0, res.message
    return -res.fun

"""Dense revised simplex for small bounded-variable linear programs.

The solver keeps an explicit basis, refactorizes it every iteration and
re-derives the basic values from scratch, which trades speed for
reproducibility and clean dual information.  Pricing is exact steepest edge;
after a run of non-improving pivots it switches to Bland's rule until the
objective moves again, which rules out cycling.

Infeasible programs come back with a Farkas ray ``y`` over the rows:
``y.b`` exceeds the largest value ``y.A x`` can take over the variable box, so
no ``x`` in the box satisfies the rows.  With variables bounded only below by
zero this is the familiar ``y.A <= 0``, ``y.b > 0``.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

INF = math.inf


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class NumericalFailure(RuntimeError):
    """The solver could not meet its residual tolerances."""


class FarkasError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    optimality: float = 1e-9
    pivot: float = 1e-10
    max_iterations: int = 100_000
    stall_limit: int = 200


DEFAULT_TOLERANCES = Tolerances()

_RELATIONS = ("=", "<=", ">=")


class LinearProgram:
    """Maximize ``c.x`` over sparse rows ``a.x (=|<=|>=) b`` and box bounds."""

    def __init__(self) -> None:
        self.var_names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.objective: list[float] = []
        self.row_names: list[str] = []
        self.relations: list[str] = []
        self.rhs: list[float] = []
        self._row_idx: list[np.ndarray] = []
        self._row_val: list[np.ndarray] = []
        self._matrix: sp.csr_matrix | None = None

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = INF, objective: float = 0.0) -> int:
        if math.isnan(lower) or math.isnan(upper) or not math.isfinite(objective):
            raise ValueError(f"variable {name!r}: NaN bound or non-finite objective")
        if lower > upper:
            raise ValueError(f"variable {name!r}: lower bound {lower} exceeds upper bound {upper}")
        self.var_names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective.append(float(objective))
        return len(self.var_names) - 1

    def add_variables(self, names: Sequence[str], lower: float = 0.0, upper: float = INF) -> range:
        start = self.n_vars
        for name in names:
            self.add_variable(name, lower, upper)
        return range(start, self.n_vars)

    def add_row(
        self,
        coeffs: Mapping[int, float] | tuple[Sequence[int], Sequence[float]],
        relation: str,
        rhs: float,
        name: str,
    ) -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"row {name!r}: relation must be one of {_RELATIONS}")
        if isinstance(coeffs, Mapping):
            idx = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
            val = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        else:
            idx = np.asarray(coeffs[0], dtype=np.int64)
            val = np.asarray(coeffs[1], dtype=float)
        if idx.shape != val.shape:
            raise ValueError(f"row {name!r}: index/value length mismatch")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ValueError(f"row {name!r} references an undeclared variable")
        if len(np.unique(idx)) != idx.size:
            raise ValueError(f"row {name!r} repeats a variable")
        if not np.all(np.isfinite(val)) or not math.isfinite(rhs):
            raise ValueError(f"row {name!r} has a non-finite coefficient")
        self.row_names.append(name)
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        self._row_idx.append(idx)
        self._row_val.append(val)
        self._matrix = None
        return len(self.row_names) - 1

    def set_objective(self, j: int, value: float) -> None:
        self.objective[j] = float(value)

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None or self._matrix.shape != (self.n_rows, self.n_vars):
            indptr = np.zeros(self.n_rows + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([len(r) for r in self._row_idx])
            idx = np.concatenate(self._row_idx) if self._row_idx else np.zeros(0, dtype=np.int64)
            val = np.concatenate(self._row_val) if self._row_val else np.zeros(0)
            self._matrix = sp.csr_matrix((val, idx, indptr), shape=(self.n_rows, self.n_vars))
        return self._matrix

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (np.asarray(self.objective), np.asarray(self.rhs), np.asarray(self.lower), np.asarray(self.upper))


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int
    farkas: np.ndarray | None = None
    residuals: dict[str, float] = field(default_factory=dict)


# --- internal standard form --------------------------------------------------

_BASIC, _LOWER, _UPPER = 0, 1, 2


@dataclass
class _Standard:
    A: np.ndarray  # rows x columns, structural + slack + artificial
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    # structural column t stands for sign[t] * x[origin[t]]
    origin: np.ndarray
    sign: np.ndarray
    n_struct: int
    n_slack: int


def _standard_form(lp: LinearProgram) -> _Standard:
    dense = lp.matrix().toarray()
    m = lp.n_rows
    cols, lo, up, origin, sign = [], [], [], [], []
    for j in range(lp.n_vars):
        l, u = lp.lower[j], lp.upper[j]
        if l > -INF:
            cols.append(dense[:, j]); lo.append(l); up.append(u); origin.append(j); sign.append(1.0)
        elif u < INF:
            cols.append(-dense[:, j]); lo.append(-u); up.append(INF); origin.append(j); sign.append(-1.0)
        else:
            cols.append(dense[:, j]); lo.append(0.0); up.append(INF); origin.append(j); sign.append(1.0)
            cols.append(-dense[:, j]); lo.append(0.0); up.append(INF); origin.append(j); sign.append(-1.0)
    n_struct = len(cols)
    for i, rel in enumerate(lp.relations):
        if rel == "=":
            continue
        e = np.zeros(m)
        e[i] = 1.0 if rel == "<=" else -1.0
        cols.append(e); lo.append(0.0); up.append(INF)
    n_slack = len(cols) - n_struct
    A = np.column_stack(cols) if cols else np.zeros((m, 0))
    return _Standard(
        A=A,
        b=np.asarray(lp.rhs, dtype=float),
        lower=np.asarray(lo, dtype=float),
        upper=np.asarray(up, dtype=float),
        origin=np.asarray(origin, dtype=np.int64),
        sign=np.asarray(sign),
        n_struct=n_struct,
        n_slack=n_slack,
    )


class _Simplex:
    def __init__(self, A, b, lower, upper, tol: Tolerances):
        self.A, self.b, self.lower, self.upper, self.tol = A, b, lower, upper, tol
        self.m, self.n = A.shape
        self.x = np.where(np.isfinite(lower), lower, 0.0)
        self.state = np.full(self.n, _LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.iterations = 0
        self.pi = np.zeros(self.m)

    def _factor(self):
        B = self.A[:, self.basis]
        lu = lu_factor(B, check_finite=False)
        return B, lu

    @staticmethod
    def _refined(lu, B, rhs, trans=0):
        z = lu_solve(lu, rhs, trans=trans, check_finite=False)
        M = B.T if trans else B
        return z + lu_solve(lu, rhs - M @ z, trans=trans, check_finite=False)

    def _basic_values(self, B, lu) -> None:
        nonbasic = self.x.copy()
        nonbasic[self.basis] = 0.0
        self.x[self.basis] = self._refined(lu, B, self.b - self.A @ nonbasic)

    def run(self, cost: np.ndarray, target: float = -INF) -> Status:
        """Pivot until optimal, unbounded, or the objective drops to ``target``."""
        tol = self.tol
        movable = self.upper > self.lower
        bland = False
        best = INF
        stalled = 0
        while True:
            if self.iterations >= tol.max_iterations:
                raise NumericalFailure(f"iteration limit {tol.max_iterations} reached")
            B, lu = self._factor()
            self._basic_values(B, lu)
            self.pi = self._refined(lu, B, cost[self.basis], trans=1)
            d = cost - self.A.T @ self.pi
            eligible = movable & (
                ((self.state == _LOWER) & (d < -tol.optimality))
                | ((self.state == _UPPER) & (d > tol.optimality))
            )
            if not eligible.any():
                return Status.OPTIMAL

            obj = float(cost @ self.x)
            if obj <= target:
                return Status.OPTIMAL
            # Bland's rule only while degenerate; any strict improvement rules out a cycle
            if obj < best - 1e-12 * (1.0 + abs(best if math.isfinite(best) else 0.0)):
                best, stalled, bland = obj, 0, False
            else:
                stalled += 1
                if stalled >= tol.stall_limit:
                    bland = True

            candidates = np.flatnonzero(eligible)
            if bland:
                q = int(candidates[0])
            else:
                # steepest edge: reduced cost per unit length of the edge direction
                edges = lu_solve(lu, self.A[:, candidates], check_finite=False)
                score = d[candidates] ** 2 / (1.0 + (edges**2).sum(axis=0))
                q = int(candidates[np.argmax(score)])
            direction = 1.0 if self.state[q] == _LOWER else -1.0
            w = self._refined(lu, B, self.A[:, q])
            dx = -direction * w  # change of basic values per unit step

            xb = self.x[self.basis]
            lb, ub = self.lower[self.basis], self.upper[self.basis]
            ratios = np.full(self.m, INF)
            dec = dx < -tol.pivot
            inc = dx > tol.pivot
            ratios[dec] = (xb[dec] - lb[dec]) / -dx[dec]
            fin = inc & np.isfinite(ub)
            ratios[fin] = (ub[fin] - xb[fin]) / dx[fin]
            ratios = np.maximum(ratios, 0.0)
            t_min = ratios.min() if self.m else INF
            t_flip = self.upper[q] - self.lower[q]

            self.iterations += 1
            if t_flip <= t_min:
                if not math.isfinite(t_flip):
                    return Status.UNBOUNDED
                self.state[q] = _UPPER if self.state[q] == _LOWER else _LOWER
                self.x[q] = self.upper[q] if self.state[q] == _UPPER else self.lower[q]
                continue

            ties = np.flatnonzero(ratios <= t_min * (1 + 1e-9) + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(dx[ties]))])
            leaving = int(self.basis[r])
            self.x[q] += direction * t_min
            if dx[r] < 0:
                self.state[leaving], self.x[leaving] = _LOWER, self.lower[leaving]
            else:
                self.state[leaving], self.x[leaving] = _UPPER, self.upper[leaving]
            self.basis[r] = q
            self.state[q] = _BASIC


def solve(lp: LinearProgram, tol: Tolerances = DEFAULT_TOLERANCES) -> LpSolution:
    """Solve ``lp`` (maximization) to a vertex, with duals or a Farkas ray."""
    std = _standard_form(lp)
    m = lp.n_rows
    n_core = std.A.shape[1]

    # phase 1: one artificial per row, signed so that it starts nonnegative
    x0 = std.lower.copy()
    resid = std.b - std.A @ x0
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    A = np.hstack([std.A, np.diag(art_sign)]) if m else std.A
    lower = np.concatenate([std.lower, np.zeros(m)])
    upper = np.concatenate([std.upper, np.full(m, INF)])
    smp = _Simplex(A, std.b, lower, upper, tol)
    smp.x[:n_core] = x0
    smp.x[n_core:] = np.abs(resid)
    smp.basis[:] = np.arange(n_core, n_core + m)
    smp.state[n_core:] = _BASIC

    _crash(smp, std, n_core, resid)

    cost1 = np.concatenate([np.zeros(n_core), np.ones(m)])
    scale = 1.0 + (np.abs(std.b).max() if m else 0.0)
    smp.run(cost1, target=0.1 * tol.feasibility * scale)
    infeas = float(smp.x[n_core:].sum())
    if infeas > tol.feasibility * scale:
        y = _normalize(smp.pi.copy())
        x = _recover(std, smp.x, lp.n_vars)
        sol = LpSolution(
            status=Status.INFEASIBLE,
            x=x,
            duals=np.zeros(m),
            reduced_costs=np.zeros(lp.n_vars),
            objective=math.nan,
            iterations=smp.iterations,
            farkas=y,
        )
        sol.residuals["farkas_margin"] = farkas_margin(lp, y, tol)
        if not sol.residuals["farkas_margin"] > 0:
            raise NumericalFailure(f"phase 1 ended infeasible ({infeas:.3g}) without a valid Farkas ray")
        return sol

    # phase 2: artificials are pinned at zero and may only leave the basis
    smp.upper[n_core:] = 0.0
    nb_art = np.arange(n_core, n_core + m)[smp.state[n_core:] != _BASIC]
    smp.state[nb_art] = _LOWER
    smp.x[nb_art] = 0.0
    c = np.asarray(lp.objective, dtype=float)
    cost2 = np.zeros(n_core + m)
    cost2[: std.n_struct] = -c[std.origin] * std.sign
    status = smp.run(cost2)

    x = _recover(std, smp.x, lp.n_vars)
    y = -smp.pi
    dense = lp.matrix()
    reduced = c - dense.T @ y
    objective = float(c @ x) if status == Status.OPTIMAL else INF
    sol = LpSolution(
        status=status,
        x=x,
        duals=y,
        reduced_costs=np.asarray(reduced).ravel(),
        objective=objective,
        iterations=smp.iterations,
    )
    if status == Status.OPTIMAL:
        sol.residuals = optimality_residuals(lp, sol, tol)
        worst = max(sol.residuals.values())
        if worst > tol.feasibility:
            raise NumericalFailure(f"residuals above tolerance: {sol.residuals}")
    return sol


def _crash(smp: _Simplex, std: _Standard, n_core: int, resid: np.ndarray) -> None:
    """Replace artificials by slacks or singleton columns that start feasible."""
    A = std.A
    nnz = (A != 0).sum(axis=0)
    used = set()
    for i in range(std.A.shape[0]):
        cands = np.flatnonzero((nnz == 1) & (A[i] != 0))
        for t in cands:
            t = int(t)
            if t in used:
                continue
            value = smp.x[t] + resid[i] / A[i, t]
            if std.lower[t] <= value <= std.upper[t]:
                smp.x[t] = value
                smp.state[t] = _BASIC
                art = n_core + i
                smp.state[art] = _LOWER
                smp.x[art] = 0.0
                smp.basis[i] = t
                used.add(t)
                break


def _recover(std: _Standard, xs: np.ndarray, n: int) -> np.ndarray:
    x = np.zeros(n)
    np.add.at(x, std.origin, std.sign * xs[: std.n_struct])
    return x


def _normalize(y: np.ndarray) -> np.ndarray:
    big = np.abs(y).max() if y.size else 0.0
    return y / big if big > 0 else y


def _box_sup(g: np.ndarray, lower: np.ndarray, upper: np.ndarray, zero: float) -> float:
    """``sum_j max_{l_j <= x_j <= u_j} g_j x_j`` with ``|g_j| <= zero`` treated as 0."""
    g = np.where(np.abs(g) <= zero, 0.0, g)
    bound = np.where(g > 0, upper, lower)
    active = g != 0
    if np.any(~np.isfinite(bound[active])):
        return INF
    return float(g[active] @ bound[active])


def farkas_margin(lp: LinearProgram, y: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """``y.b - sup_box y.A x``; positive means ``y`` proves the rows infeasible."""
    y = np.asarray(y, dtype=float)
    A = lp.matrix()
    _, b, lower, upper = lp.arrays()
    zero = tol.feasibility * (1.0 + (abs(A).max() if A.nnz else 0.0)) * (np.abs(y).max() if y.size else 1.0)
    rel = np.asarray(lp.relations)
    # slack s >= 0 enters '<=' rows with +1 and '>=' rows with -1
    if np.any(y[rel == "<="] > zero) or np.any(y[rel == ">="] < -zero):
        return -INF
    g = np.asarray(A.T @ y).ravel()
    return float(y @ b) - _box_sup(g, lower, upper, zero)


def dual_bound(lp: LinearProgram, y: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Upper bound on the maximum implied by row prices ``y`` (weak duality)."""
    y = np.asarray(y, dtype=float)
    A = lp.matrix()
    c, b, lower, upper = lp.arrays()
    rel = np.asarray(lp.relations)
    zero = tol.optimality * (1.0 + np.abs(c).max() if c.size else 1.0)
    if np.any(y[rel == "<="] < -zero) or np.any(y[rel == ">="] > zero):
        return INF
    d = c - np.asarray(A.T @ y).ravel()
    return float(y @ b) + _box_sup(d, lower, upper, zero)


def optimality_residuals(lp: LinearProgram, sol: LpSolution, tol: Tolerances = DEFAULT_TOLERANCES) -> dict[str, float]:
    """Relative primal, dual and complementarity residuals, plus the duality gap."""
    A = lp.matrix()
    c, b, lower, upper = lp.arrays()
    x, y = sol.x, sol.duals
    rel = np.asarray(lp.relations)
    ax = A @ x
    viol = ax - b
    row_viol = np.where(rel == "=", np.abs(viol), np.where(rel == "<=", np.maximum(viol, 0), np.maximum(-viol, 0)))
    bound_viol = np.maximum(np.maximum(lower - x, x - upper), 0)
    bscale = 1.0 + (np.abs(b).max() if b.size else 0.0) + (np.abs(x).max() if x.size else 0.0)
    primal = max(row_viol.max(initial=0.0), bound_viol.max(initial=0.0)) / bscale

    cscale = 1.0 + (np.abs(c).max() if c.size else 0.0)
    d = c - np.asarray(A.T @ y).ravel()
    at_lower = np.abs(x - lower) <= tol.feasibility * bscale
    at_upper = np.abs(upper - x) <= tol.feasibility * bscale
    # a variable at its lower bound may have d <= 0, at its upper d >= 0
    dual_var = np.where(
        at_lower & at_upper,
        0.0,
        np.where(at_lower, np.maximum(d, 0), np.where(at_upper, np.maximum(-d, 0), np.abs(d))),
    )
    dual_row = np.where(rel == "<=", np.maximum(-y, 0), np.where(rel == ">=", np.maximum(y, 0), 0.0))
    dual = max(dual_var.max(initial=0.0), dual_row.max(initial=0.0)) / cscale

    # distance to the nearest finite bound; free variables are covered by the dual residual
    dist = np.minimum(np.abs(x - lower), np.abs(upper - x))
    gap_var = np.where(np.isfinite(dist), np.abs(d) * np.where(np.isfinite(dist), dist, 0.0), 0.0)
    slack = np.where(rel == "=", 0.0, np.abs(b - ax))
    comp = max(gap_var.max(initial=0.0), (np.abs(y) * slack).max(initial=0.0)) / (cscale * bscale)

    bound = dual_bound(lp, y, tol)
    gap = max(0.0, float(c @ x) - bound) / (cscale * bscale)
    return {"primal": float(primal), "dual": float(dual), "complementarity": float(comp), "weak_duality": gap}


def extract_farkas(lp: LinearProgram, sol: LpSolution, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """The infeasibility ray of ``sol``, scaled to unit max-norm and re-checked."""
    if sol.status != Status.INFEASIBLE or sol.farkas is None:
        raise FarkasError(f"no Farkas ray: solution status is {sol.status.value}")
    y = _normalize(np.asarray(sol.farkas, dtype=float))
    if not farkas_margin(lp, y, tol) > 0:
        raise FarkasError("Farkas ray fails its own check")
    return y


# --- interchange ---------------------------------------------------------------


def to_mps(lp: LinearProgram, name: str = "LP") -> str:
    """Free-format MPS text of ``lp`` (OBJSENSE MAX), for cross-checking with other solvers.

    Rows are named ``R<i>`` and columns ``C<j>`` in declaration order; the
    human-readable names are listed in comment lines at the top.
    """
    A = lp.matrix().tocsc()
    kind = {"=": "E", "<=": "L", ">=": "G"}
    out = [f"* {lp.n_rows} rows, {lp.n_vars} columns"]
    out += [f"* R{i} {nm}" for i, nm in enumerate(lp.row_names)]
    out += [f"* C{j} {nm}" for j, nm in enumerate(lp.var_names)]
    out += [f"NAME {name}", "OBJSENSE", "    MAX", "ROWS", " N OBJ"]
    out += [f" {kind[r]} R{i}" for i, r in enumerate(lp.relations)]
    out.append("COLUMNS")
    for j in range(lp.n_vars):
        if lp.objective[j] != 0:
            out.append(f" C{j} OBJ {lp.objective[j]!r}")
        lo, hi = A.indptr[j], A.indptr[j + 1]
        for i, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            out.append(f" C{j} R{i} {float(v)!r}")
        if lp.objective[j] == 0 and lo == hi:
            out.append(f" C{j} OBJ 0.0")
    out.append("RHS")
    out += [f" RHS R{i} {v!r}" for i, v in enumerate(lp.rhs) if v != 0]
    out.append("BOUNDS")
    for j, (l, u) in enumerate(zip(lp.lower, lp.upper)):
        if l == u:
            out.append(f" FX BND C{j} {l!r}")
            continue
        if l == -INF and u == INF:
            out.append(f" FR BND C{j}")
            continue
        if l == -INF:
            out.append(f" MI BND C{j}")
        elif l != 0:
            out.append(f" LO BND C{j} {l!r}")
        if u != INF:
            out.append(f" UP BND C{j} {u!r}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"

"""Assemble and solve the detection-efficiency linear program.

Columns are the category weights ``x_j`` (code order), one tally probability
``v_s`` per setting, one detection probability per (observer, measurement),
one worst-case efficiency ``dmin`` per observer and, when the objective is a
minimum over several observers, ``dsym``.  The relation between true and
tallied frequencies is substituted into the marginal equations, so each
tallied outcome contributes the single linear row

    sum_{j : P_s(j) = d} x_j - q_sd * v_s = 0.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .lp import DEFAULT_TOLERANCES, LinearProgram, LpSolution, NumericalFailure, Status, Tolerances, solve
from .model import (
    ExperimentSpec,
    FullFrequencies,
    SpecError,
    TalliedFrequencies,
    category_digits,
    detection_probabilities,
    enumerate_outcomes,
    enumerate_settings,
    full_frequencies,
    outcome_index_table,
)

MODEL_TOL = 1e-8
DEGENERATE_V = 1e-9
PIN_SLACK = 1e-9


@dataclass(frozen=True)
class ObjectiveScenario:
    """Maximize the smallest ``dmin`` over ``maximize`` with ``fixed`` observers held at a floor."""

    maximize: tuple[str, ...]
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "maximize", tuple(self.maximize))
        object.__setattr__(self, "fixed", dict(self.fixed))
        if not self.maximize:
            raise SpecError("scenario must maximize at least one observer")
        if len(set(self.maximize)) != len(self.maximize):
            raise SpecError("scenario repeats an observer")
        overlap = set(self.maximize) & set(self.fixed)
        if overlap:
            raise SpecError(f"observers both fixed and maximized: {sorted(overlap)}")
        for name, value in self.fixed.items():
            if not 0.0 <= value <= 1.0:
                raise SpecError(f"fixed efficiency for {name!r} must lie in [0, 1], got {value}")

    @classmethod
    def dsym(cls, observers: Sequence[str], fixed: Mapping[str, float] | None = None) -> "ObjectiveScenario":
        return cls(tuple(observers), fixed or {})

    @classmethod
    def dmin(cls, observer: str, fixed: Mapping[str, float] | None = None) -> "ObjectiveScenario":
        return cls((observer,), fixed or {})

    @property
    def uses_dsym(self) -> bool:
        return len(self.maximize) > 1

    def check(self, spec: ExperimentSpec) -> None:
        for name in (*self.maximize, *self.fixed):
            spec.observer_index(name)

    def thresholds(self, spec: ExperimentSpec, pin: float) -> np.ndarray:
        """Per-observer efficiency floor when the maximized quantity is pinned at ``pin``."""
        t = np.zeros(spec.n_observers)
        for name, value in self.fixed.items():
            t[spec.observer_index(name)] = value
        for name in self.maximize:
            t[spec.observer_index(name)] = pin
        return t

    def describe(self) -> str:
        head = (
            f"MIN({', '.join('dmin_' + o for o in self.maximize)})"
            if self.uses_dsym
            else f"dmin_{self.maximize[0]}"
        )
        if self.fixed:
            head += " given " + ", ".join(f"dmin_{o} = {v:g}" for o, v in self.fixed.items())
        return head

    def to_dict(self) -> dict:
        return {"maximize": list(self.maximize), "fixed": {k: repr(float(v)) for k, v in self.fixed.items()}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ObjectiveScenario":
        return cls(tuple(doc["maximize"]), {k: float(v) for k, v in doc.get("fixed", {}).items()})


@dataclass
class LrModel:
    """A local-realist model: category weights and everything derived from them."""

    x: np.ndarray
    v: np.ndarray
    q_full: FullFrequencies
    pdet: np.ndarray
    dmin: np.ndarray
    dsym: float

    @property
    def min_v(self) -> float:
        return float(self.v.min())


def model_from_weights(spec: ExperimentSpec, x: np.ndarray, v: np.ndarray) -> LrModel:
    x = np.asarray(x, dtype=float)
    pdet = detection_probabilities(spec, x)
    dmin = np.array([min(pdet[spec.slot(i, k)] for k in range(len(m))) for i, m in enumerate(spec.measurements)])
    return LrModel(
        x=x,
        v=np.asarray(v, dtype=float),
        q_full=full_frequencies(spec, x),
        pdet=pdet,
        dmin=dmin,
        dsym=float(dmin.min()),
    )


def model_violations(
    model: LrModel, spec: ExperimentSpec, q: TalliedFrequencies, tol: float = MODEL_TOL
) -> list[str]:
    """Every LrModel invariant that fails by more than ``tol``; empty when the model is sound."""
    bad = []
    x = model.x
    if x.shape != (spec.n_categories,):
        return [f"x has shape {x.shape}, expected ({spec.n_categories},)"]
    if abs(x.sum() - 1.0) > tol:
        bad.append(f"category weights sum to {x.sum():.12g}")
    if x.min(initial=0.0) < -tol:
        bad.append(f"negative category weight {x.min():.3g}")
    if model.v.min(initial=0.0) < -tol:
        bad.append(f"negative tally probability {model.v.min():.3g}")
    expect = full_frequencies(spec, x)
    for n, s in enumerate(enumerate_settings(spec)):
        full = model.q_full[s]
        if np.abs(full - expect[s]).max() > tol:
            bad.append(f"setting {spec.setting_label(s)}: outcome frequencies do not match the weights")
        if abs(full.sum() - 1.0) > tol:
            bad.append(f"setting {spec.setting_label(s)}: outcome frequencies sum to {full.sum():.12g}")
        outcomes = enumerate_outcomes(spec, s, "all")
        pos = {r: t for t, r in enumerate(outcomes)}
        for d in enumerate_outcomes(spec, s, "tallied"):
            gap = full[pos[d]] - q[s][d] * model.v[n]
            if abs(gap) > tol:
                bad.append(
                    f"setting {spec.setting_label(s)}, outcome {spec.outcome_label(s, d)}: "
                    f"frequency differs from tallied value times v by {gap:.3g}"
                )
    pdet = detection_probabilities(spec, x)
    if np.abs(pdet - model.pdet).max() > tol:
        bad.append("detection probabilities do not match the weights")
    for i, meas in enumerate(spec.measurements):
        floor = min(model.pdet[spec.slot(i, k)] for k in range(len(meas)))
        if model.dmin[i] > floor + tol:
            bad.append(f"dmin of {spec.observers[i]} exceeds its smallest detection probability")
    if model.dsym > model.dmin.min() + tol:
        bad.append("dsym exceeds the smallest dmin")
    return bad


@dataclass
class BuiltProgram:
    lp: LinearProgram
    spec: ExperimentSpec
    q: TalliedFrequencies
    scenario: ObjectiveScenario
    x_cols: range
    v_cols: range
    pdet_cols: range
    dmin_cols: range
    dsym_col: int | None
    objective_col: int


def _coupling_rows(spec: ExperimentSpec, digits: np.ndarray):
    """Yield ``(s, d, category_indices)`` for every setting and tallied outcome."""
    for s in enumerate_settings(spec):
        idx = outcome_index_table(spec, s, digits)
        order = np.argsort(idx, kind="stable")
        sorted_idx = idx[order]
        outcomes = enumerate_outcomes(spec, s, "all")
        pos = {r: t for t, r in enumerate(outcomes)}
        for d in enumerate_outcomes(spec, s, "tallied"):
            code = pos[d]
            lo, hi = np.searchsorted(sorted_idx, [code, code + 1])
            yield s, d, order[lo:hi]


def detect_masks(spec: ExperimentSpec, digits: np.ndarray) -> np.ndarray:
    nd = np.asarray([spec.no_detect_index(i, k) for i, k in spec.slots()])
    return digits < nd[None, :]


def build(spec: ExperimentSpec, q: TalliedFrequencies, scenario: ObjectiveScenario) -> BuiltProgram:
    q.validate(spec)
    scenario.check(spec)
    digits = category_digits(spec)
    lp = LinearProgram()

    x_cols = lp.add_variables([f"x[{spec.category_label(tuple(j))}]" for j in digits])
    settings = enumerate_settings(spec)
    v_cols = lp.add_variables([f"v[{spec.setting_label(s)}]" for s in settings])
    slot_names = [f"{spec.observers[i]}:{spec.measurements[i][k]}" for i, k in spec.slots()]
    pdet_cols = lp.add_variables([f"PDet[{nm}]" for nm in slot_names], 0.0, 1.0)
    dmin_cols = lp.add_variables([f"dmin[{o}]" for o in spec.observers], 0.0, 1.0)
    dsym_col = lp.add_variable("dsym", 0.0, 1.0) if scenario.uses_dsym else None

    lp.add_row((np.asarray(x_cols), np.ones(len(x_cols))), "=", 1.0, "normalization")

    v_index = {s: v_cols[n] for n, s in enumerate(settings)}
    for s, d, members in _coupling_rows(spec, digits):
        idx = np.append(members + x_cols.start, v_index[s])
        val = np.append(np.ones(len(members)), -q[s][d])
        lp.add_row((idx, val), "=", 0.0, f"couple[{spec.setting_label(s)}|{spec.outcome_label(s, d)}]")

    detect = detect_masks(spec, digits)
    for t, (i, k) in enumerate(spec.slots()):
        members = np.flatnonzero(detect[:, t]) + x_cols.start
        idx = np.append(members, pdet_cols[t])
        val = np.append(-np.ones(len(members)), 1.0)
        lp.add_row((idx, val), "=", 0.0, f"pdet[{slot_names[t]}]")

    for t, (i, k) in enumerate(spec.slots()):
        lp.add_row({dmin_cols[i]: 1.0, pdet_cols[t]: -1.0}, "<=", 0.0, f"dmin[{slot_names[t]}]")

    if dsym_col is not None:
        for name in scenario.maximize:
            i = spec.observer_index(name)
            lp.add_row({dsym_col: 1.0, dmin_cols[i]: -1.0}, "<=", 0.0, f"dsym[{name}]")

    for name, value in scenario.fixed.items():
        i = spec.observer_index(name)
        lp.add_row({dmin_cols[i]: 1.0}, ">=", value, f"pin[{name}]")

    objective_col = dsym_col if dsym_col is not None else dmin_cols[spec.observer_index(scenario.maximize[0])]
    lp.set_objective(objective_col, 1.0)
    return BuiltProgram(lp, spec, q, scenario, x_cols, v_cols, pdet_cols, dmin_cols, dsym_col, objective_col)


def extract_model(built: BuiltProgram, sol: LpSolution, tol: float = MODEL_TOL) -> LrModel:
    if sol.status != Status.OPTIMAL:
        raise ValueError(f"cannot read a model from a {sol.status.value} solution")
    x = np.clip(sol.x[built.x_cols.start : built.x_cols.stop], 0.0, None)
    v = np.clip(sol.x[built.v_cols.start : built.v_cols.stop], 0.0, None)
    model = model_from_weights(built.spec, x, v)
    bad = model_violations(model, built.spec, built.q, tol)
    lp_pdet = sol.x[built.pdet_cols.start : built.pdet_cols.stop]
    if np.abs(lp_pdet - model.pdet).max() > tol:
        bad.append("solver detection probabilities disagree with the weights")
    if bad:
        raise NumericalFailure("solution violates model invariants: " + "; ".join(bad))
    return model


@dataclass
class ScenarioResult:
    scenario: ObjectiveScenario
    value: float
    model: LrModel
    solution: LpSolution
    degenerate_settings: list[str]


class InfeasibleScenario(RuntimeError):
    def __init__(self, built: BuiltProgram, solution: LpSolution):
        super().__init__(f"no local-realist model satisfies {built.scenario.describe()}")
        self.built = built
        self.solution = solution
        self.farkas = solution.farkas


def solve_scenario(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> ScenarioResult:
    """Largest efficiency any local-realist model with imperfect detection can reach."""
    built = build(spec, q, scenario)
    sol = solve(built.lp, tol)
    if sol.status == Status.INFEASIBLE:
        raise InfeasibleScenario(built, sol)
    if sol.status != Status.OPTIMAL:
        raise NumericalFailure(f"detection program reported {sol.status.value}")
    model = extract_model(built, sol)
    settings = enumerate_settings(spec)
    degenerate = [spec.setting_label(s) for s, v in zip(settings, model.v) if v < DEGENERATE_V]
    return ScenarioResult(scenario, float(sol.objective), model, sol, degenerate)


def solve_lexicographic(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    order: Sequence[str],
    tol: Tolerances = DEFAULT_TOLERANCES,
    pin_slack: float = PIN_SLACK,
) -> list[ScenarioResult]:
    """Maximize each observer's ``dmin`` in turn, holding earlier ones at their optimum."""
    if not order:
        raise SpecError("lexicographic order must name at least one observer")
    fixed: dict[str, float] = {}
    results = []
    for name in order:
        res = solve_scenario(spec, q, ObjectiveScenario.dmin(name, fixed), tol)
        results.append(res)
        fixed = {**fixed, name: max(0.0, min(1.0, res.value - pin_slack))}
    return results

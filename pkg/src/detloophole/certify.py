"""Solver-independent checks: witnesses, perfect-detection consequences,
and Bell-type certificates that no local-realist model reaches a given efficiency.

A certificate refers to the pinned feasibility system over category weights
``x >= 0`` and tally probabilities ``v >= 0``:

    normalization     sum_j x_j                         = 1
    coupling (s, d)   sum_{P_s(j) = d} x_j - q_sd v_s   = 0
    detection (i, k)  sum_{j_ik detects} x_j           >= t_i

where ``t_i`` is the efficiency floor of observer ``i``.  A row vector ``y``
with ``y . column <= 0`` for every column, ``y >= 0`` on detection rows and
``y . rhs > 0`` shows the system has no solution.  Every column is recomputed
here from the experiment alone, so the check does not trust the solver.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .builder import LrModel, ObjectiveScenario, detect_masks, model_from_weights
from .lp import DEFAULT_TOLERANCES, LinearProgram, NumericalFailure, Status, Tolerances, extract_farkas, solve
from .model import (
    ExperimentSpec,
    FullFrequencies,
    SpecError,
    TalliedFrequencies,
    category_digits,
    coincidences_only,
    encode_category,
    enumerate_outcomes,
    enumerate_settings,
    decode_category,
    j_spec,
    outcome_index_table,
)

CERT_TOL = 1e-7
ENUMERATION_CAP = 10**6
CHECK_TOL = 1e-8
CHUNK = 1 << 15


# --- witnesses ---------------------------------------------------------------


def construct_witness(spec: ExperimentSpec, q: TalliedFrequencies) -> LrModel:
    """A local-realist model for any coincidence-only tally: each (s, d) gets its own category."""
    if not coincidences_only(spec):
        raise SpecError("the witness construction needs coincidence-only tallying")
    q.validate(spec)
    settings = enumerate_settings(spec)
    share = 1.0 / len(settings)
    x = np.zeros(spec.n_categories)
    for s in settings:
        for d in enumerate_outcomes(spec, s, "tallied"):
            x[encode_category(spec, j_spec(spec, s, d))] += q[s][d] * share
    return model_from_weights(spec, x, np.full(len(settings), share))


# --- perfect detection ---------------------------------------------------------


@dataclass
class PerfectDetectionReport:
    support_in_perfect: bool
    all_detect: bool
    statements: dict[int, bool] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def biconditional(self) -> bool:
        return self.support_in_perfect == self.all_detect

    @property
    def ok(self) -> bool:
        return self.biconditional and all(self.statements.values())


def check_perfect_detection(
    model: LrModel, spec: ExperimentSpec, q: TalliedFrequencies, tol: float = CHECK_TOL
) -> PerfectDetectionReport:
    """Support inside the no-miss categories iff every detection probability is 1,
    and, when so, the four consequences for frequencies and tally probabilities."""
    digits = category_digits(spec)
    perfect = detect_masks(spec, digits).all(axis=1)
    outside = float(np.clip(model.x, 0.0, None)[~perfect].sum())
    report = PerfectDetectionReport(
        support_in_perfect=outside <= tol,
        all_detect=bool(np.all(np.abs(model.pdet - 1.0) <= tol)),
    )
    if not report.biconditional:
        report.failures.append(
            f"support outside no-miss categories {outside:.3g} but min detection {model.pdet.min():.12g}"
        )
    if not report.support_in_perfect:
        return report

    ok = dict.fromkeys((1, 2, 3, 4), True)
    for n, s in enumerate(enumerate_settings(spec)):
        full = model.q_full[s]
        outcomes = enumerate_outcomes(spec, s, "all")
        detect = set(enumerate_outcomes(spec, s, "detect-only"))
        label = spec.setting_label(s)
        for t, r in enumerate(outcomes):
            if r not in detect and full[t] > tol:
                ok[1] = False
                report.failures.append(f"{label}: non-coincidence {spec.outcome_label(s, r)} has mass {full[t]:.3g}")
        for d in enumerate_outcomes(spec, s, "tallied"):
            if d not in detect and q[s][d] > tol:
                ok[2] = False
                report.failures.append(f"{label}: tallied non-coincidence {spec.outcome_label(s, d)} is {q[s][d]:.3g}")
        if abs(model.v[n] - 1.0) > tol:
            ok[3] = False
            report.failures.append(f"{label}: tally probability {model.v[n]:.12g} != 1")
        for t, r in enumerate(outcomes):
            if r in detect and abs(full[t] - q[s][r]) > tol:
                ok[4] = False
                report.failures.append(f"{label}: {spec.outcome_label(s, r)} frequency differs from tally")
    report.statements = ok
    return report


# --- no-signaling --------------------------------------------------------------


@dataclass
class NoSignalingReport:
    ok: bool
    max_deviation: float
    witness: tuple | None = None  # (observer subset, setting a, setting b, joint result)


def extend_with_no_detect(spec: ExperimentSpec, q: TalliedFrequencies) -> FullFrequencies:
    """Embed coincidence frequencies into all outcomes, with zero mass on misses."""
    out = {}
    for s in enumerate_settings(spec):
        outcomes = enumerate_outcomes(spec, s, "all")
        out[s] = np.array([q[s].get(r, 0.0) for r in outcomes])
    return out


def check_no_signaling(q_full: FullFrequencies, spec: ExperimentSpec, tol: float = CHECK_TOL) -> NoSignalingReport:
    """Every proper observer subset's marginals must not depend on the others' settings."""
    n = spec.n_observers
    worst, witness = 0.0, None
    settings = enumerate_settings(spec)
    for size in range(1, n):
        for group in itertools.combinations(range(n), size):
            others = tuple(i for i in range(n) if i not in group)
            reference: dict[tuple, tuple] = {}
            for s in settings:
                shape = tuple(spec.n_detect(i, k) + 1 for i, k in enumerate(s))
                marg = np.asarray(q_full[s]).reshape(shape).sum(axis=others)
                key = tuple(s[i] for i in group)
                if key not in reference:
                    reference[key] = (s, marg)
                    continue
                s0, ref = reference[key]
                diff = np.abs(marg - ref)
                dev = float(diff.max())
                if dev > worst:
                    worst = dev
                    at = np.unravel_index(int(diff.argmax()), diff.shape)
                    witness = (
                        tuple(spec.observers[i] for i in group),
                        spec.setting_label(s0),
                        spec.setting_label(s),
                        ",".join(spec.result_label(i, s[i], int(r)) for i, r in zip(group, at)),
                    )
    return NoSignalingReport(ok=worst <= tol, max_deviation=worst, witness=witness if worst > tol else None)


# --- pinned feasibility and certificates ---------------------------------------


@dataclass(frozen=True)
class RowKey:
    kind: str  # "normalization", "coupling" or "detection"
    setting: tuple[int, ...] = ()
    outcome: tuple[int, ...] = ()
    slot: tuple[int, int] = (-1, -1)

    def label(self, spec: ExperimentSpec) -> str:
        if self.kind == "normalization":
            return "normalization"
        if self.kind == "coupling":
            return f"couple[{spec.setting_label(self.setting)}|{spec.outcome_label(self.setting, self.outcome)}]"
        i, k = self.slot
        return f"detect[{spec.observers[i]}:{spec.measurements[i][k]}]"


def pinned_rows(spec: ExperimentSpec, scenario: ObjectiveScenario, pin: float) -> tuple[list[RowKey], np.ndarray]:
    """Row structure and right-hand sides of the pinned feasibility system."""
    floors = scenario.thresholds(spec, pin)
    keys = [RowKey("normalization")]
    rhs = [1.0]
    for s in enumerate_settings(spec):
        for d in enumerate_outcomes(spec, s, "tallied"):
            keys.append(RowKey("coupling", s, d))
            rhs.append(0.0)
    for i, k in spec.slots():
        if floors[i] > 0:
            keys.append(RowKey("detection", slot=(i, k)))
            rhs.append(float(floors[i]))
    return keys, np.asarray(rhs)


@dataclass
class PinnedProgram:
    lp: LinearProgram
    keys: list[RowKey]
    n_x: int
    n_v: int


def build_pinned(spec: ExperimentSpec, q: TalliedFrequencies, scenario: ObjectiveScenario, pin: float) -> PinnedProgram:
    if not 0.0 <= pin <= 1.0:
        raise SpecError(f"pinned efficiency must lie in [0, 1], got {pin}")
    q.validate(spec)
    scenario.check(spec)
    keys, rhs = pinned_rows(spec, scenario, pin)
    digits = category_digits(spec)
    lp = LinearProgram()
    x_cols = lp.add_variables([f"x{c}" for c in range(spec.n_categories)])
    settings = enumerate_settings(spec)
    v_cols = lp.add_variables([f"v{n}" for n in range(len(settings))])
    detect = detect_masks(spec, digits)
    tables = {s: outcome_index_table(spec, s, digits) for s in settings}
    v_of = {s: v_cols[n] for n, s in enumerate(settings)}
    for key, b in zip(keys, rhs):
        name = key.label(spec)
        if key.kind == "normalization":
            lp.add_row((np.asarray(x_cols), np.ones(len(x_cols))), "=", b, name)
        elif key.kind == "coupling":
            s, d = key.setting, key.outcome
            code = enumerate_outcomes(spec, s, "all").index(d)
            members = np.flatnonzero(tables[s] == code)
            lp.add_row(
                (np.append(members, v_of[s]), np.append(np.ones(len(members)), -q[s][d])), "=", b, name
            )
        else:
            members = np.flatnonzero(detect[:, spec.slot(*key.slot)])
            lp.add_row((members, np.ones(len(members))), ">=", b, name)
    return PinnedProgram(lp, keys, len(x_cols), len(v_cols))


@dataclass
class BellCertificate:
    keys: list[RowKey]
    y: np.ndarray
    pin: float
    margin: float

    def row_labels(self, spec: ExperimentSpec) -> list[str]:
        return [k.label(spec) for k in self.keys]


@dataclass
class CertificateCheck:
    ok: bool
    margin: float
    max_column: float
    scale: float
    coverage: float
    checked: int
    violation: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def _column_values(spec, y_norm, y_coup, detect_slots, digits) -> np.ndarray:
    col = np.full(len(digits), y_norm)
    for s, table in y_coup.items():
        col += table[outcome_index_table(spec, s, digits)]
    if detect_slots:
        nd = np.asarray([spec.no_detect_index(i, k) for i, k in spec.slots()])
        det = digits < nd[None, :]
        for t, w in detect_slots:
            col += w * det[:, t]
    return col


def verify_certificate(
    cert: BellCertificate,
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    tol: float = CERT_TOL,
    cap: int = ENUMERATION_CAP,
    jobs: int = 1,
    seed: int = 0,
) -> CertificateCheck:
    """Re-derive every column of the pinned system from the experiment and test ``y`` against it.

    Categories are enumerated exhaustively up to ``cap``; beyond that a seeded
    sample of ``cap`` categories is checked and ``coverage`` reports the fraction.
    """
    keys, rhs = pinned_rows(spec, scenario, cert.pin)
    y = np.asarray(cert.y, dtype=float)
    if keys != list(cert.keys) or y.shape != (len(keys),):
        return CertificateCheck(False, math.nan, math.nan, math.nan, 0.0, 0, "row structure does not match the experiment")
    if not np.all(np.isfinite(y)):
        return CertificateCheck(False, math.nan, math.nan, math.nan, 0.0, 0, "non-finite multiplier")

    q_max = max((v for s in enumerate_settings(spec) for v in q[s].values()), default=1.0)
    scale = float(np.abs(y).max()) * max(1.0, q_max)
    limit = tol * scale
    margin = float(y @ rhs)

    y_norm = 0.0
    y_coup: dict = {}
    detect_slots = []
    for key, w in zip(keys, y):
        if key.kind == "normalization":
            y_norm = float(w)
        elif key.kind == "coupling":
            s = key.setting
            if s not in y_coup:
                y_coup[s] = np.zeros(len(enumerate_outcomes(spec, s, "all")))
            y_coup[s][enumerate_outcomes(spec, s, "all").index(key.outcome)] = w
        else:
            if w < -limit:
                return CertificateCheck(
                    False, margin, math.nan, scale, 0.0, 0, f"negative multiplier on {key.label(spec)}"
                )
            detect_slots.append((spec.slot(*key.slot), float(w)))

    # tally-probability columns: -sum_d q_sd y_sd
    worst = -math.inf
    for s in enumerate_settings(spec):
        outcomes = enumerate_outcomes(spec, s, "all")
        table = y_coup.get(s, np.zeros(len(outcomes)))
        value = -sum(q[s][d] * table[outcomes.index(d)] for d in enumerate_outcomes(spec, s, "tallied"))
        worst = max(worst, value)
        if value > limit:
            return CertificateCheck(
                False, margin, value, scale, 0.0, 0, f"tally column of setting {spec.setting_label(s)} is {value:.3g}"
            )

    total = spec.n_categories
    if total <= cap:
        ranges = [(a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]
        sample = None
        coverage = 1.0
    else:
        rng = np.random.default_rng(seed)
        sample = np.sort(rng.choice(total, size=cap, replace=False))
        ranges = [(a, min(a + CHUNK, cap)) for a in range(0, cap, CHUNK)]
        coverage = cap / total

    def chunk(bounds):
        a, b = bounds
        codes = np.arange(a, b, dtype=np.int64) if sample is None else sample[a:b]
        strides = np.asarray(spec._strides, dtype=np.int64)
        digits = (codes[:, None] // strides[None, :]) % np.asarray(spec.radices)[None, :]
        col = _column_values(spec, y_norm, y_coup, detect_slots, digits)
        t = int(col.argmax())
        return float(col[t]), int(codes[t])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(chunk, ranges))
    else:
        results = [chunk(r) for r in ranges]
    for value, code in results:  # ordered reduction keeps the reported category deterministic
        if value > worst:
            worst = value
        if value > limit:
            j = decode_category(spec, code)
            return CertificateCheck(
                False, margin, value, scale, coverage, 0,
                f"category {spec.category_label(j)} has column value {value:.3g}",
            )
    checked = total if sample is None else cap
    if not margin >= limit:
        return CertificateCheck(False, margin, worst, scale, coverage, checked, f"margin {margin:.3g} is not positive")
    return CertificateCheck(True, margin, worst, scale, coverage, checked)


@dataclass
class CertifyOutcome:
    feasible: bool
    witness: LrModel | None = None
    certificate: BellCertificate | None = None


def pinned_feasible(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    pin: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CertifyOutcome:
    """Either a local-realist model meeting the pinned efficiency, or a certificate that none exists."""
    prog = build_pinned(spec, q, scenario, pin)
    sol = solve(prog.lp, tol)
    if sol.status == Status.OPTIMAL:
        x = np.clip(sol.x[: prog.n_x], 0.0, None)
        v = np.clip(sol.x[prog.n_x :], 0.0, None)
        return CertifyOutcome(True, witness=model_from_weights(spec, x, v))
    if sol.status != Status.INFEASIBLE:
        raise NumericalFailure(f"pinned system reported {sol.status.value}")
    y = extract_farkas(prog.lp, sol, tol)
    _, rhs = pinned_rows(spec, scenario, pin)
    cert = BellCertificate(keys=prog.keys, y=y, pin=pin, margin=float(y @ rhs))
    return CertifyOutcome(False, certificate=cert)


def bisect_boundary(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    iterations: int = 20,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Largest feasible pinned efficiency, located by bisection on [0, 1]."""
    if pinned_feasible(spec, q, scenario, 1.0, tol).feasible:
        return 1.0
    if not pinned_feasible(spec, q, scenario, 0.0, tol).feasible:
        raise SpecError("no local-realist model exists even with zero efficiency")
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if pinned_feasible(spec, q, scenario, mid, tol).feasible:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- certificate files -----------------------------------------------------------

CERT_FORMAT = "detloophole-certificate/1"


def certificate_to_dict(
    cert: BellCertificate,
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    check: CertificateCheck | None = None,
) -> dict:
    _, rhs = pinned_rows(spec, scenario, cert.pin)
    rows = []
    for key, b, w in zip(cert.keys, rhs, cert.y):
        row: dict = {"label": key.label(spec), "kind": key.kind}
        if key.kind == "coupling":
            row["setting"] = [spec.measurements[i][k] for i, k in enumerate(key.setting)]
            row["outcome"] = spec.outcome_label(key.setting, key.outcome)
        elif key.kind == "detection":
            i, k = key.slot
            row["observer"] = spec.observers[i]
            row["measurement"] = spec.measurements[i][k]
        row["relation"] = ">=" if key.kind == "detection" else "="
        row["rhs"] = repr(float(b))
        row["y"] = repr(float(w))
        rows.append(row)
    doc = {
        "format": CERT_FORMAT,
        "system": (
            "Unknowns: x_j >= 0 for every category j (one result or N per measurement) and v_s >= 0 per "
            "setting. normalization: sum_j x_j = 1. couple[s|d]: sum of x_j whose results at s equal d, "
            "minus q_sd * v_s, = 0. detect[i:k]: sum of x_j that detect on measurement k of observer i >= rhs. "
            "The certificate holds if y >= 0 on detect rows, y . column <= 0 for every x_j and v_s column, "
            "and y . rhs > 0."
        ),
        "experiment": spec.to_dict(),
        "frequencies": q.to_dict(spec)["settings"],
        "scenario": scenario.to_dict(),
        "pin": repr(float(cert.pin)),
        "rows": rows,
        "margin": repr(float(cert.margin)),
    }
    if check is not None:
        doc["verification"] = {
            "verified": check.ok,
            "max_column": repr(float(check.max_column)),
            "scale": repr(float(check.scale)),
            "coverage": repr(float(check.coverage)),
            "violation": check.violation,
        }
    return doc


def certificate_from_dict(doc: Mapping) -> tuple[BellCertificate, ExperimentSpec, TalliedFrequencies, ObjectiveScenario]:
    if doc.get("format") != CERT_FORMAT:
        raise SpecError(f"not a certificate document (format {doc.get('format')!r})")
    spec = ExperimentSpec.from_dict(doc["experiment"])
    q = TalliedFrequencies.from_dict({"settings": doc["frequencies"]}, spec)
    scenario = ObjectiveScenario.from_dict(doc["scenario"])
    keys, y = [], []
    for row in doc["rows"]:
        kind = row["kind"]
        if kind == "normalization":
            keys.append(RowKey("normalization"))
        elif kind == "coupling":
            s = spec.parse_setting(row["setting"])
            keys.append(RowKey("coupling", s, spec.parse_outcome(s, row["outcome"].split(","))))
        elif kind == "detection":
            i = spec.observer_index(row["observer"])
            keys.append(RowKey("detection", slot=(i, spec.measurements[i].index(row["measurement"]))))
        else:
            raise SpecError(f"unknown certificate row kind {kind!r}")
        y.append(float(row["y"]))
    cert = BellCertificate(keys=keys, y=np.asarray(y), pin=float(doc["pin"]), margin=float(doc["margin"]))
    return cert, spec, q, scenario

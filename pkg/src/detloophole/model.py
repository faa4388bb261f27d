"""Experiment schema and the combinatorics of settings, outcomes and categories.

Indices are used throughout: a setting is a tuple of measurement indices (one
per observer), an outcome is a tuple of result indices into the selected
measurements' result lists, and a category is a flat tuple of result indices,
one per (observer, measurement) slot in observer-major order.  The no-detect
result of every measurement is the last index, ``Z_ik``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

NO_DETECT = "N"

Setting = tuple[int, ...]
Outcome = tuple[int, ...]
Category = tuple[int, ...]


class SpecError(ValueError):
    """An experiment, frequency table or fixture violates its invariants."""


@dataclass(frozen=True)
class ExperimentSpec:
    observers: tuple[str, ...]
    measurements: tuple[tuple[str, ...], ...]
    detect_results: tuple[tuple[tuple[str, ...], ...], ...]
    # part of equality but not of the hash (dicts are unhashable)
    tallied_override: Mapping[Setting, tuple[Outcome, ...]] = field(
        default_factory=dict, hash=False, repr=False
    )

    def __post_init__(self) -> None:
        if len(self.observers) < 2:
            raise SpecError("an experiment needs at least 2 observers")
        if len(set(self.observers)) != len(self.observers):
            raise SpecError(f"duplicate observer names: {self.observers}")
        if len(self.measurements) != len(self.observers):
            raise SpecError("one measurement list per observer is required")
        if len(self.detect_results) != len(self.observers):
            raise SpecError("one result table per observer is required")
        for name, meas, results in zip(self.observers, self.measurements, self.detect_results):
            if len(meas) < 2:
                raise SpecError(f"observer {name!r} needs at least 2 measurements")
            if len(set(meas)) != len(meas):
                raise SpecError(f"duplicate measurement names for {name!r}: {meas}")
            if len(results) != len(meas):
                raise SpecError(f"observer {name!r}: one result list per measurement is required")
            for k, labels in zip(meas, results):
                if len(labels) < 2:
                    raise SpecError(f"measurement {k!r} needs at least 2 detect results")
                if len(set(labels)) != len(labels):
                    raise SpecError(f"duplicate result labels for {k!r}: {labels}")
                if NO_DETECT in labels:
                    raise SpecError(f"measurement {k!r}: {NO_DETECT!r} is reserved for no-detect")
        all_meas = [k for meas in self.measurements for k in meas]
        if len(set(all_meas)) != len(all_meas):
            raise SpecError("measurement names must be unique across observers")

        radices = [len(labels) + 1 for results in self.detect_results for labels in results]
        offsets, pos = [], 0
        for meas in self.measurements:
            offsets.append(pos)
            pos += len(meas)
        object.__setattr__(self, "_radices", tuple(radices))
        object.__setattr__(self, "_offsets", tuple(offsets))
        # place values for the mixed-radix code: last slot varies fastest
        strides = [1] * len(radices)
        for t in range(len(radices) - 2, -1, -1):
            strides[t] = strides[t + 1] * radices[t + 1]
        object.__setattr__(self, "_strides", tuple(strides))

        override = {}
        for s, outcomes in dict(self.tallied_override).items():
            s = tuple(s)
            self._check_setting(s)
            detect = set(self._product(s, detect_only=True))
            chosen = tuple(tuple(d) for d in outcomes)
            if len(set(chosen)) != len(chosen):
                raise SpecError(f"duplicate tallied outcomes for setting {self.setting_label(s)}")
            missing = detect - set(chosen)
            if missing:
                raise SpecError(
                    f"tallied outcomes for {self.setting_label(s)} must include every coincidence; "
                    f"missing {sorted(self.outcome_label(s, d) for d in missing)}"
                )
            for d in chosen:
                self._check_outcome(s, d)
                if all(d[i] == self.no_detect_index(i, s[i]) for i in range(self.n_observers)):
                    raise SpecError("the all-no-detect outcome cannot be tallied")
            # keep the canonical outcome order
            order = {r: n for n, r in enumerate(self._product(s, detect_only=False))}
            override[s] = tuple(sorted(chosen, key=order.__getitem__))
        object.__setattr__(self, "tallied_override", override)

    @classmethod
    def uniform(
        cls,
        observers: Sequence[str],
        measurements: Sequence[Sequence[str]],
        results: Sequence[str] = ("U", "D"),
    ) -> "ExperimentSpec":
        """Every measurement shares the same detect-result labels."""
        return cls(
            tuple(observers),
            tuple(tuple(m) for m in measurements),
            tuple(tuple(tuple(results) for _ in m) for m in measurements),
        )

    # --- sizes -------------------------------------------------------------

    @property
    def n_observers(self) -> int:
        return len(self.observers)

    @property
    def radices(self) -> tuple[int, ...]:
        """``Z_ik + 1`` for every slot, observer-major."""
        return self._radices

    @property
    def n_slots(self) -> int:
        return len(self._radices)

    @property
    def n_categories(self) -> int:
        return math.prod(self._radices)

    @property
    def n_perfect_categories(self) -> int:
        return math.prod(r - 1 for r in self._radices)

    @property
    def n_settings(self) -> int:
        return math.prod(len(m) for m in self.measurements)

    def slot(self, i: int, k: int) -> int:
        return self._offsets[i] + k

    def slots(self) -> Iterator[tuple[int, int]]:
        for i, meas in enumerate(self.measurements):
            for k in range(len(meas)):
                yield i, k

    def n_detect(self, i: int, k: int) -> int:
        return len(self.detect_results[i][k])

    def no_detect_index(self, i: int, k: int) -> int:
        return len(self.detect_results[i][k])

    # --- names -------------------------------------------------------------

    def observer_index(self, name: str) -> int:
        try:
            return self.observers.index(name)
        except ValueError:
            raise SpecError(f"unknown observer {name!r}") from None

    def result_label(self, i: int, k: int, r: int) -> str:
        return NO_DETECT if r == self.no_detect_index(i, k) else self.detect_results[i][k][r]

    def setting_label(self, s: Setting) -> str:
        return ",".join(self.measurements[i][k] for i, k in enumerate(s))

    def outcome_label(self, s: Setting, r: Outcome) -> str:
        return ",".join(self.result_label(i, s[i], x) for i, x in enumerate(r))

    def category_label(self, j: Category) -> str:
        return ",".join(self.result_label(i, k, j[self.slot(i, k)]) for i, k in self.slots())

    def parse_setting(self, names: Sequence[str]) -> Setting:
        if len(names) != self.n_observers:
            raise SpecError(f"setting {list(names)} does not name one measurement per observer")
        try:
            return tuple(self.measurements[i].index(n) for i, n in enumerate(names))
        except ValueError:
            raise SpecError(f"unknown measurement in setting {list(names)}") from None

    def parse_outcome(self, s: Setting, labels: Sequence[str]) -> Outcome:
        if len(labels) != self.n_observers:
            raise SpecError(f"outcome {list(labels)} does not give one result per observer")
        out = []
        for i, lab in enumerate(labels):
            k = s[i]
            if lab == NO_DETECT:
                out.append(self.no_detect_index(i, k))
            elif lab in self.detect_results[i][k]:
                out.append(self.detect_results[i][k].index(lab))
            else:
                raise SpecError(f"unknown result {lab!r} for measurement {self.measurements[i][k]!r}")
        return tuple(out)

    # --- validation helpers ------------------------------------------------

    def _check_setting(self, s: Setting) -> None:
        if len(s) != self.n_observers or any(
            not 0 <= k < len(self.measurements[i]) for i, k in enumerate(s)
        ):
            raise SpecError(f"invalid setting {s}")

    def _check_outcome(self, s: Setting, r: Outcome) -> None:
        if len(r) != self.n_observers or any(
            not 0 <= x <= self.no_detect_index(i, s[i]) for i, x in enumerate(r)
        ):
            raise SpecError(f"invalid outcome {r} for setting {s}")

    def _product(self, s: Setting, detect_only: bool) -> Iterator[Outcome]:
        extra = 0 if detect_only else 1
        return itertools.product(*(range(self.n_detect(i, k) + extra) for i, k in enumerate(s)))

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict = {
            "observers": [
                {
                    "name": name,
                    "measurements": [
                        {"name": k, "results": list(labels)} for k, labels in zip(meas, results)
                    ],
                }
                for name, meas, results in zip(self.observers, self.measurements, self.detect_results)
            ]
        }
        if self.tallied_override:
            doc["tallied"] = [
                {
                    "setting": [self.measurements[i][k] for i, k in enumerate(s)],
                    "outcomes": [self.outcome_label(s, d) for d in outcomes],
                }
                for s, outcomes in sorted(self.tallied_override.items())
            ]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentSpec":
        try:
            obs = doc["observers"]
            names = tuple(o["name"] for o in obs)
            meas = tuple(tuple(m["name"] for m in o["measurements"]) for o in obs)
            results = tuple(tuple(tuple(m["results"]) for m in o["measurements"]) for o in obs)
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed experiment document: missing {exc}") from None
        spec = cls(names, meas, results)
        if not doc.get("tallied"):
            return spec
        override = {}
        for entry in doc["tallied"]:
            s = spec.parse_setting(entry["setting"])
            override[s] = tuple(spec.parse_outcome(s, o.split(",")) for o in entry["outcomes"])
        return cls(names, meas, results, override)


# --- enumeration -------------------------------------------------------------


def enumerate_settings(spec: ExperimentSpec) -> list[Setting]:
    return list(itertools.product(*(range(len(m)) for m in spec.measurements)))


def enumerate_outcomes(
    spec: ExperimentSpec, s: Setting, which: Literal["all", "detect-only", "tallied"] = "all"
) -> list[Outcome]:
    spec._check_setting(s)
    if which == "all":
        return list(spec._product(s, detect_only=False))
    if which == "detect-only":
        return list(spec._product(s, detect_only=True))
    if which == "tallied":
        override = spec.tallied_override.get(tuple(s))
        return list(override) if override is not None else list(spec._product(s, detect_only=True))
    raise ValueError(f"unknown outcome set {which!r}")


def coincidences_only(spec: ExperimentSpec) -> bool:
    return all(
        len(v) == math.prod(spec.n_detect(i, k) for i, k in enumerate(s))
        for s, v in spec.tallied_override.items()
    )


def project(spec: ExperimentSpec, j: Category, s: Setting) -> Outcome:
    return tuple(j[spec.slot(i, k)] for i, k in enumerate(s))


def encode_category(spec: ExperimentSpec, j: Category) -> int:
    if len(j) != spec.n_slots or any(not 0 <= x < r for x, r in zip(j, spec.radices)):
        raise SpecError(f"invalid category {j}")
    return sum(x * w for x, w in zip(j, spec._strides))


def decode_category(spec: ExperimentSpec, code: int) -> Category:
    if not 0 <= code < spec.n_categories:
        raise SpecError(f"category code {code} out of range")
    return tuple((code // w) % r for w, r in zip(spec._strides, spec.radices))


def iter_categories(spec: ExperimentSpec) -> Iterator[Category]:
    """All categories in code order."""
    return itertools.product(*(range(r) for r in spec.radices))


def category_digits(spec: ExperimentSpec, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Digit matrix of categories ``start..stop`` (code order), shape (count, n_slots)."""
    stop = spec.n_categories if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    strides = np.asarray(spec._strides, dtype=np.int64)
    radices = np.asarray(spec.radices, dtype=np.int64)
    return ((codes[:, None] // strides[None, :]) % radices[None, :]).astype(np.int16)


def categories_for(spec: ExperimentSpec, s: Setting, r: Outcome) -> Iterator[Category]:
    """Categories j with ``project(j, s) == r``, in code order."""
    spec._check_setting(s)
    spec._check_outcome(s, r)
    fixed = {spec.slot(i, k): r[i] for i, k in enumerate(s)}
    ranges = [
        (fixed[t],) if t in fixed else range(radix) for t, radix in enumerate(spec.radices)
    ]
    return itertools.product(*ranges)


def j_spec(spec: ExperimentSpec, s: Setting, d: Outcome) -> Category:
    """The category that reproduces ``d`` at ``s`` and never detects elsewhere."""
    spec._check_outcome(s, d)
    j = [spec.no_detect_index(i, k) for i, k in spec.slots()]
    for i, k in enumerate(s):
        j[spec.slot(i, k)] = d[i]
    return tuple(j)


def is_perfect(spec: ExperimentSpec, j: Category) -> bool:
    return all(j[spec.slot(i, k)] < spec.no_detect_index(i, k) for i, k in spec.slots())


def outcome_index_table(spec: ExperimentSpec, s: Setting, digits: np.ndarray) -> np.ndarray:
    """Row-major index of ``project(j, s)`` within ``enumerate_outcomes(s, 'all')``."""
    idx = np.zeros(len(digits), dtype=np.int64)
    for i, k in enumerate(s):
        idx = idx * (spec.n_detect(i, k) + 1) + digits[:, spec.slot(i, k)]
    return idx


# --- frequencies -------------------------------------------------------------


NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class TalliedFrequencies:
    """Per-setting frequencies over the tallied outcomes, normalized per setting."""

    values: Mapping[Setting, Mapping[Outcome, float]]

    def __getitem__(self, s: Setting) -> Mapping[Outcome, float]:
        return self.values[s]

    def validate(self, spec: ExperimentSpec, tol: float = NORMALIZATION_TOL) -> None:
        settings = enumerate_settings(spec)
        extra = set(self.values) - set(settings)
        if extra:
            raise SpecError(f"frequencies given for unknown settings {sorted(extra)}")
        for s in settings:
            if s not in self.values:
                raise SpecError(f"no frequencies for setting {spec.setting_label(s)}")
            row = self.values[s]
            tallied = enumerate_outcomes(spec, s, "tallied")
            if set(row) != set(tallied):
                unknown = sorted(set(row) - set(tallied))
                missing = sorted(set(tallied) - set(row))
                raise SpecError(
                    f"setting {spec.setting_label(s)}: outcomes must match the tallied set "
                    f"(unknown {unknown}, missing {missing})"
                )
            vals = np.array([row[d] for d in tallied], dtype=float)
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise SpecError(f"setting {spec.setting_label(s)}: frequencies must be finite and >= 0")
            if abs(vals.sum() - 1.0) > tol:
                raise SpecError(
                    f"setting {spec.setting_label(s)}: frequencies sum to {vals.sum():.12g}, not 1"
                )

    def to_dict(self, spec: ExperimentSpec) -> dict:
        return {
            "settings": [
                {
                    "setting": [spec.measurements[i][k] for i, k in enumerate(s)],
                    "frequencies": {
                        spec.outcome_label(s, d): repr(float(self.values[s][d]))
                        for d in enumerate_outcomes(spec, s, "tallied")
                    },
                }
                for s in enumerate_settings(spec)
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping, spec: ExperimentSpec) -> "TalliedFrequencies":
        values: dict[Setting, dict[Outcome, float]] = {}
        try:
            entries = doc["settings"]
            for entry in entries:
                s = spec.parse_setting(entry["setting"])
                if s in values:
                    raise SpecError(f"setting {spec.setting_label(s)} listed twice")
                values[s] = {
                    spec.parse_outcome(s, label.split(",")): float(text)
                    for label, text in entry["frequencies"].items()
                }
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed frequency document: {exc}") from None
        except ValueError as exc:
            if isinstance(exc, SpecError):
                raise
            raise SpecError(f"bad frequency value: {exc}") from None
        q = cls(values)
        q.validate(spec)
        return q


FullFrequencies = dict[Setting, np.ndarray]
"""Per setting, frequencies over every outcome in ``enumerate_outcomes(s, 'all')`` order."""


def full_frequencies(spec: ExperimentSpec, x: np.ndarray) -> FullFrequencies:
    """Outcome frequencies at every setting implied by a distribution over categories."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_categories,):
        raise SpecError(f"expected {spec.n_categories} category weights, got {x.shape}")
    digits = category_digits(spec)
    out = {}
    for s in enumerate_settings(spec):
        size = math.prod(spec.n_detect(i, k) + 1 for i, k in enumerate(s))
        out[s] = np.bincount(outcome_index_table(spec, s, digits), weights=x, minlength=size)
    return out


def detection_probabilities(spec: ExperimentSpec, x: np.ndarray) -> np.ndarray:
    """Per slot, the total weight of categories that detect on that measurement."""
    digits = category_digits(spec)
    nd = np.asarray([spec.no_detect_index(i, k) for i, k in spec.slots()])
    return ((digits < nd[None, :]) * np.asarray(x, dtype=float)[:, None]).sum(axis=0)

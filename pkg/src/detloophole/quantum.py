"""Born-rule frequencies for pure states measured in orthonormal bases."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .model import ExperimentSpec, SpecError, TalliedFrequencies, enumerate_outcomes, enumerate_settings

STATE_NORM_TOL = 1e-12
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class QuantumFixture:
    """A pure state plus one basis per (observer, measurement).

    ``bases[i][k]`` is a ``d_i x d_i`` unitary whose rows are the bras of the
    measurement's detect results, in result order.
    """

    dims: tuple[int, ...]
    state: np.ndarray
    bases: tuple[tuple[np.ndarray, ...], ...]
    observers: tuple[str, ...] = ()
    measurements: tuple[tuple[str, ...], ...] = ()
    results: tuple[tuple[tuple[str, ...], ...], ...] = ()

    def __post_init__(self) -> None:
        state = np.asarray(self.state, dtype=complex).reshape(-1)
        object.__setattr__(self, "state", state)
        if state.size != int(np.prod(self.dims)):
            raise SpecError(
                f"state has dimension {state.size}, expected {int(np.prod(self.dims))} for dims {self.dims}"
            )
        norm = np.linalg.norm(state)
        if abs(norm - 1.0) > STATE_NORM_TOL:
            raise SpecError(f"state vector is not normalized (norm {norm:.15g})")
        if len(self.bases) != len(self.dims):
            raise SpecError("one list of measurement bases per observer is required")
        bases = []
        for i, (d, per_obs) in enumerate(zip(self.dims, self.bases)):
            row = []
            for k, u in enumerate(per_obs):
                u = np.asarray(u, dtype=complex)
                if u.shape != (d, d):
                    raise SpecError(f"basis ({i},{k}) has shape {u.shape}, expected {(d, d)}")
                err = np.abs(u @ u.conj().T - np.eye(d)).max()
                if err > UNITARY_TOL:
                    raise SpecError(f"basis ({i},{k}) is not unitary (deviation {err:.3g})")
                row.append(u)
            bases.append(tuple(row))
        object.__setattr__(self, "bases", tuple(bases))

    def experiment(self) -> ExperimentSpec:
        """The coincidence-tallied experiment this fixture measures."""
        n = len(self.dims)
        observers = self.observers or tuple(f"O{i + 1}" for i in range(n))
        # A1, B1, ... when initials are distinct, otherwise <observer>_1, ...
        initials = [o[0] for o in observers]
        prefix = initials if len(set(initials)) == n else [f"{o}_" for o in observers]
        measurements = self.measurements or tuple(
            tuple(f"{prefix[i]}{k + 1}" for k in range(len(self.bases[i]))) for i in range(n)
        )
        results = self.results or tuple(
            tuple(_default_results(self.dims[i]) for _ in self.bases[i]) for i in range(n)
        )
        return ExperimentSpec(observers, measurements, results)


def _default_results(d: int) -> tuple[str, ...]:
    return ("U", "D") if d == 2 else tuple(str(r) for r in range(d))


def joint_probabilities(fix: QuantumFixture, spec: ExperimentSpec | None = None) -> TalliedFrequencies:
    spec = spec or fix.experiment()
    if spec.n_observers != len(fix.dims):
        raise SpecError(f"fixture has {len(fix.dims)} parties but experiment has {spec.n_observers}")
    for i, k in spec.slots():
        if k >= len(fix.bases[i]):
            raise SpecError(f"fixture has no basis for measurement {spec.measurements[i][k]!r}")
        if spec.n_detect(i, k) != fix.dims[i]:
            raise SpecError(
                f"measurement {spec.measurements[i][k]!r} has {spec.n_detect(i, k)} results "
                f"but the local dimension is {fix.dims[i]}"
            )
    values = {}
    for s in enumerate_settings(spec):
        op = fix.bases[0][s[0]]
        for i in range(1, len(s)):
            op = np.kron(op, fix.bases[i][s[i]])
        p = np.clip(np.abs(op @ fix.state) ** 2, 0.0, 1.0)
        detect = enumerate_outcomes(spec, s, "detect-only")
        tallied = enumerate_outcomes(spec, s, "tallied")
        if set(tallied) != set(detect):
            raise SpecError("quantum fixtures can only supply coincidence frequencies")
        values[s] = {d: float(p[np.ravel_multi_index(d, fix.dims)]) for d in detect}
    q = TalliedFrequencies(values)
    q.validate(spec)
    return q


def spin_basis(angle: float) -> np.ndarray:
    """Spin-1/2 analyzer in the x-z plane at ``angle`` from z; rows are <U|, <D|."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, s], [-s, c]], dtype=complex)


def singlet_closed_form(a: float, b: float) -> dict[tuple[int, int], float]:
    same = 0.5 * np.sin((a - b) / 2) ** 2
    diff = 0.5 * np.cos((a - b) / 2) ** 2
    return {(0, 0): same, (1, 1): same, (0, 1): diff, (1, 0): diff}


def singlet_fixture(
    angles_a: Sequence[float],
    angles_b: Sequence[float],
    observers: tuple[str, str] = ("Alice", "Bob"),
) -> QuantumFixture:
    if len(angles_a) < 2 or len(angles_b) < 2:
        raise SpecError("each side needs at least 2 analyzer angles")
    state = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
    return QuantumFixture(
        dims=(2, 2),
        state=state,
        bases=(tuple(spin_basis(a) for a in angles_a), tuple(spin_basis(b) for b in angles_b)),
        observers=observers,
        measurements=(
            tuple(f"A{k + 1}" for k in range(len(angles_a))),
            tuple(f"B{k + 1}" for k in range(len(angles_b))),
        ),
    )


def ghz_fixture(observers: tuple[str, str, str] = ("Alice", "Bob", "Charlie")) -> QuantumFixture:
    state = np.zeros(8, dtype=complex)
    state[0] = state[7] = 1 / np.sqrt(2)
    x = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    y = np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2)
    return QuantumFixture(
        dims=(2, 2, 2),
        state=state,
        bases=((x, y),) * 3,
        observers=observers,
        measurements=tuple((f"{o[0]}X", f"{o[0]}Y") for o in observers),
    )


# --- fixture files ---------------------------------------------------------


def _complex_array(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.shape[-1] != 2:
        raise SpecError("complex numbers must be given as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def fixture_from_dict(doc: Mapping) -> QuantumFixture:
    """Build a fixture from its JSON form: a named preset or explicit state and bases."""
    try:
        preset = doc.get("preset")
        if preset == "singlet":
            angles = doc["angles"]
            names = tuple(doc.get("observers", ("Alice", "Bob")))
            return singlet_fixture(angles[names[0]], angles[names[1]], names)
        if preset == "ghz":
            return ghz_fixture(tuple(doc.get("observers", ("Alice", "Bob", "Charlie"))))
        if preset is not None:
            raise SpecError(f"unknown fixture preset {preset!r}")
        parties = doc["observers"]
        dims = tuple(int(p["dim"]) for p in parties)
        bases = tuple(tuple(_complex_array(m["basis"]) for m in p["measurements"]) for p in parties)
        return QuantumFixture(
            dims=dims,
            state=_complex_array(doc["state"]),
            bases=bases,
            observers=tuple(p["name"] for p in parties),
            measurements=tuple(tuple(m["name"] for m in p["measurements"]) for p in parties),
            results=tuple(
                tuple(tuple(m.get("results", _default_results(d))) for m in p["measurements"])
                for p, d in zip(parties, dims)
            ),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SpecError(f"malformed fixture document: {exc!r}") from None
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed fixture document: {exc}") from None


def fixture_to_dict(fix: QuantumFixture) -> dict:
    spec = fix.experiment()

    def pairs(a: np.ndarray) -> list:
        return np.stack([a.real, a.imag], axis=-1).tolist()

    return {
        "state": pairs(fix.state),
        "observers": [
            {
                "name": spec.observers[i],
                "dim": fix.dims[i],
                "measurements": [
                    {"name": spec.measurements[i][k], "results": list(spec.detect_results[i][k]),
                     "basis": pairs(u)}
                    for k, u in enumerate(fix.bases[i])
                ],
            }
            for i in range(len(fix.dims))
        ],
    }


def product_state_fixture(local_states: Sequence[np.ndarray], bases_per_party) -> QuantumFixture:
    """Tensor product of single-party pure states (no entanglement)."""
    state = np.array([1.0 + 0j])
    for v in local_states:
        state = np.kron(state, np.asarray(v, dtype=complex))
    dims = tuple(len(v) for v in local_states)
    return QuantumFixture(dims=dims, state=state, bases=tuple(tuple(b) for b in bases_per_party))


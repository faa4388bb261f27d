"""Named experiments: built-in quantum fixtures plus packaged frequency files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import ExperimentSpec, SpecError, TalliedFrequencies
from .quantum import QuantumFixture, fixture_from_dict, ghz_fixture, joint_probabilities, singlet_fixture


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    candidate: bool  # parameters reconstructed to match published values, not taken from a source

    def fixture(self) -> QuantumFixture | None:
        return _FIXTURES[self.name]()

    def load(self) -> tuple[ExperimentSpec, TalliedFrequencies]:
        fix = self.fixture()
        if fix is not None:
            return fix.experiment(), joint_probabilities(fix)
        spec = ExperimentSpec.from_dict(_data(f"{self.name}-experiment.json"))
        return spec, TalliedFrequencies.from_dict(_data(f"{self.name}-frequencies.json"), spec)


def _data(name: str) -> dict:
    try:
        text = resources.files("detloophole").joinpath("data", name).read_text()
    except FileNotFoundError:
        raise SpecError(f"packaged data file {name!r} is missing") from None
    return json.loads(text)


_FIXTURES = {
    "optimized-bell": lambda: singlet_fixture([0.0, np.pi / 3], [0.0, 2 * np.pi / 3]),
    "chsh": lambda: singlet_fixture([0.0, np.pi / 2], [np.pi / 4, 3 * np.pi / 4]),
    "original-bell": lambda: singlet_fixture([0.0, np.pi / 4], [0.0, np.pi / 2]),
    "mermin": lambda: singlet_fixture([0.0, 2 * np.pi / 3, 4 * np.pi / 3], [0.0, 2 * np.pi / 3, 4 * np.pi / 3]),
    "ghz": ghz_fixture,
    "hardy": lambda: fixture_from_dict(_data("hardy-fixture.json")),
    "qutrit": lambda: None,
}

PRESETS = {
    p.name: p
    for p in (
        Preset("optimized-bell", "singlet, analyzers (0, pi/3) and (0, 2pi/3)", candidate=False),
        Preset("chsh", "singlet, analyzers (0, pi/2) and (pi/4, 3pi/4)", candidate=True),
        Preset("original-bell", "singlet, analyzers (0, pi/4) and (0, pi/2)", candidate=True),
        Preset("hardy", "partially entangled pair at the optimal Hardy angles", candidate=True),
        Preset("mermin", "singlet, three analyzers 2pi/3 apart on each side", candidate=True),
        Preset("qutrit", "maximally entangled qutrits, two tritter settings per side (frequency file)", candidate=True),
        Preset("ghz", "(|000> + |111>)/sqrt(2) measured in X and Y", candidate=False),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None

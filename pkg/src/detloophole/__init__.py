"""Critical detector efficiencies for EPR experiments via linear programming."""

from .builder import (
    InfeasibleScenario,
    LrModel,
    ObjectiveScenario,
    ScenarioResult,
    build,
    extract_model,
    solve_lexicographic,
    solve_scenario,
)
from .certify import (
    BellCertificate,
    bisect_boundary,
    check_no_signaling,
    check_perfect_detection,
    construct_witness,
    pinned_feasible,
    verify_certificate,
)
from .lp import LinearProgram, LpSolution, NumericalFailure, Status, Tolerances, solve
from .model import ExperimentSpec, SpecError, TalliedFrequencies
from .presets import PRESETS, get_preset
from .quantum import QuantumFixture, ghz_fixture, joint_probabilities, singlet_fixture

__all__ = [
    "BellCertificate",
    "ExperimentSpec",
    "InfeasibleScenario",
    "LinearProgram",
    "LpSolution",
    "LrModel",
    "NumericalFailure",
    "ObjectiveScenario",
    "PRESETS",
    "QuantumFixture",
    "ScenarioResult",
    "SpecError",
    "Status",
    "TalliedFrequencies",
    "Tolerances",
    "bisect_boundary",
    "build",
    "check_no_signaling",
    "check_perfect_detection",
    "construct_witness",
    "extract_model",
    "get_preset",
    "ghz_fixture",
    "joint_probabilities",
    "pinned_feasible",
    "singlet_fixture",
    "solve",
    "solve_lexicographic",
    "solve_scenario",
    "verify_certificate",
]

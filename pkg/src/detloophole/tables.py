"""Reference tables of critical detection efficiencies and their recomputation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .builder import ObjectiveScenario, solve_scenario
from .presets import get_preset
from .lp import DEFAULT_TOLERANCES, Tolerances

# Reported values carry 4 decimals; a cell matches when the computed value rounds onto them.
MATCH_TOL = 5e-5 + 1e-9

_TWO = ("Alice", "Bob")
_THREE = ("Alice", "Bob", "Charlie")


def _two_party_rows():
    return [
        ObjectiveScenario.dsym(_TWO),
        ObjectiveScenario.dmin("Alice", {"Bob": 1.0}),
        ObjectiveScenario.dmin("Bob", {"Alice": 1.0}),
    ]


def _ghz_rows():
    rows = [ObjectiveScenario.dsym(_THREE)]
    for fixed in ("Charlie", "Bob", "Alice"):
        rows.append(ObjectiveScenario.dsym([o for o in _THREE if o != fixed], {fixed: 1.0}))
    for target in _THREE:
        rows.append(ObjectiveScenario.dmin(target, {o: 1.0 for o in _THREE if o != target}))
    return rows


@dataclass(frozen=True)
class TableDef:
    table_id: int
    title: str
    columns: tuple[str, ...]
    rows: tuple[ObjectiveScenario, ...]
    reported: dict[str, tuple[float, ...]]  # column -> one value per row


TABLES = {
    7: TableDef(
        7,
        "two observers, two measurements, two results",
        ("original-bell", "optimized-bell", "chsh", "hardy"),
        tuple(_two_party_rows()),
        {
            "original-bell": (0.9142, 0.8284, 0.8284),
            "optimized-bell": (0.9, 0.8, 0.8),
            "chsh": (0.8536, 0.7071, 0.7071),
            "hardy": (0.9236, 0.8472, 0.8472),
        },
    ),
    8: TableDef(
        8,
        "two observers, three measurements, two results",
        ("mermin",),
        tuple(_two_party_rows()),
        {"mermin": (0.8333, 0.6667, 0.6667)},
    ),
    9: TableDef(
        9,
        "two observers, two measurements, three results",
        ("qutrit",),
        tuple(_two_party_rows()),
        {"qutrit": (0.8481, 0.6962, 0.6962)},
    ),
    10: TableDef(
        10,
        "three observers, two measurements, two results",
        ("ghz",),
        tuple(_ghz_rows()),
        {"ghz": (0.8333, 0.75, 0.75, 0.75, 0.5, 0.5, 0.5)},
    ),
}


@dataclass
class Cell:
    column: str
    row: int
    reported: float
    computed: float | None  # None when the fixture is unavailable

    @property
    def deviation(self) -> float | None:
        return None if self.computed is None else self.computed - self.reported

    @property
    def matches(self) -> bool | None:
        return None if self.computed is None else abs(self.deviation) <= MATCH_TOL


@dataclass
class TableResult:
    table: TableDef
    cells: list[Cell]
    unavailable: dict[str, str]  # column -> reason

    def cell(self, column: str, row: int) -> Cell:
        return next(c for c in self.cells if c.column == column and c.row == row)


def reproduce(
    table_id: int,
    candidates: bool = True,
    jobs: int = 1,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> TableResult:
    """Recompute every cell of a reference table.

    With ``candidates=False`` only fixtures whose parameters are taken verbatim
    are used; the rest are reported as unavailable.
    """
    table = TABLES[table_id]
    unavailable: dict[str, str] = {}
    jobs_list = []
    for col in table.columns:
        preset = get_preset(col)
        if preset.candidate and not candidates:
            unavailable[col] = "fixture unavailable (reconstructed parameters disabled)"
            continue
        try:
            spec, q = preset.load()
        except (OSError, ValueError) as exc:
            unavailable[col] = f"fixture unavailable ({exc})"
            continue
        for r, scenario in enumerate(table.rows):
            jobs_list.append((col, r, spec, q, scenario))

    def run(job):
        col, r, spec, q, scenario = job
        return solve_scenario(spec, q, scenario, tol).value

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(run, jobs_list))
    else:
        values = [run(j) for j in jobs_list]
    computed = {(j[0], j[1]): v for j, v in zip(jobs_list, values)}

    cells = [
        Cell(col, r, table.reported[col][r], computed.get((col, r)))
        for r in range(len(table.rows))
        for col in table.columns
    ]
    return TableResult(table, cells, unavailable)

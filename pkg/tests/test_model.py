import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detloophole.model import (
    ExperimentSpec,
    SpecError,
    TalliedFrequencies,
    categories_for,
    category_digits,
    coincidences_only,
    decode_category,
    detection_probabilities,
    encode_category,
    enumerate_outcomes,
    enumerate_settings,
    full_frequencies,
    is_perfect,
    iter_categories,
    j_spec,
    project,
)


def labels(spec, s, outcomes):
    return [spec.outcome_label(s, r) for r in outcomes]


def test_archetypal_settings(archetypal):
    settings_ = enumerate_settings(archetypal)
    assert [archetypal.setting_label(s) for s in settings_] == ["A1,B1", "A1,B2", "A2,B1", "A2,B2"]


def test_setting_counts():
    mermin = ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2", "A3"), ("B1", "B2", "B3")))
    ghz = ExperimentSpec.uniform(("Alice", "Bob", "Charlie"), (("AX", "AY"), ("BX", "BY"), ("CX", "CY")))
    assert len(enumerate_settings(mermin)) == 9
    assert len(enumerate_settings(ghz)) == 8


def test_archetypal_outcomes(archetypal):
    s = (0, 0)
    assert labels(archetypal, s, enumerate_outcomes(archetypal, s, "all")) == [
        "U,U", "U,D", "U,N", "D,U", "D,D", "D,N", "N,U", "N,D", "N,N",
    ]
    assert labels(archetypal, s, enumerate_outcomes(archetypal, s, "detect-only")) == ["U,U", "U,D", "D,U", "D,D"]
    assert enumerate_outcomes(archetypal, s, "tallied") == enumerate_outcomes(archetypal, s, "detect-only")


def test_qutrit_outcome_count():
    spec = ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2"), ("B1", "B2")), ("0", "1", "2"))
    assert len(enumerate_outcomes(spec, (0, 0), "all")) == 16
    assert spec.n_categories == 4**4


def test_category_counts(archetypal):
    assert archetypal.n_categories == 81
    assert archetypal.n_perfect_categories == 16
    hetero = ExperimentSpec(("A", "B"), (("a1", "a2", "a3"), ("b1", "b2")),
                            ((("x", "y"), ("x", "y", "z"), ("x", "y")), (("u", "v"), ("u", "v", "w", "t"))))
    assert hetero.n_categories == 3 * 4 * 3 * 3 * 5
    assert hetero.n_perfect_categories == 2 * 3 * 2 * 2 * 4
    assert hetero.n_settings == 6


def test_project_examples(archetypal):
    cat = (0, 0, 0, 2)  # (U, U, U, N) over (A1, A2, B1, B2)
    assert archetypal.category_label(cat) == "U,U,U,N"
    assert archetypal.outcome_label((0, 0), project(archetypal, cat, (0, 0))) == "U,U"
    assert archetypal.outcome_label((1, 1), project(archetypal, cat, (1, 1))) == "U,N"
    all_n = (2, 2, 2, 2)
    for s in enumerate_settings(archetypal):
        assert archetypal.outcome_label(s, project(archetypal, all_n, s)) == "N,N"


def test_categories_for_uu(archetypal):
    found = list(categories_for(archetypal, (0, 0), (0, 0)))
    assert len(found) == 9
    assert {archetypal.category_label(j) for j in found} == {
        f"U,{a},U,{b}" for a in "UDN" for b in "UDN"
    }


def test_categories_for_mermin_count():
    mermin = ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2", "A3"), ("B1", "B2", "B3")))
    for s in enumerate_settings(mermin):
        for r in enumerate_outcomes(mermin, s, "all")[:3]:
            assert len(list(categories_for(mermin, s, r))) == 81


@pytest.mark.parametrize("shape", [((2, 2), (2, 2)), ((3, 2), (2, 3)), ((2, 2, 2), (2, 2, 2))])
def test_partition_property(shape):
    n_meas, n_res = shape
    names = [f"O{i}" for i in range(len(n_meas))]
    meas = [[f"m{i}{k}" for k in range(K)] for i, K in enumerate(n_meas)]
    res = tuple(tuple(tuple(str(z) for z in range(n_res[i])) for _ in meas[i]) for i in range(len(names)))
    spec = ExperimentSpec(tuple(names), tuple(map(tuple, meas)), res)
    for s in enumerate_settings(spec):
        seen = {}
        for r in enumerate_outcomes(spec, s, "all"):
            for j in categories_for(spec, s, r):
                assert j not in seen
                seen[j] = r
                assert project(spec, j, s) == r
        assert len(seen) == spec.n_categories


def test_encoding_round_trip_exhaustive(archetypal):
    for code, j in enumerate(iter_categories(archetypal)):
        assert encode_category(archetypal, j) == code
        assert decode_category(archetypal, code) == j
    digits = category_digits(archetypal)
    assert [tuple(int(d) for d in row) for row in digits] == list(iter_categories(archetypal))


@settings(max_examples=60, deadline=None)
@given(
    radices=st.lists(st.lists(st.integers(2, 4), min_size=2, max_size=3), min_size=2, max_size=3),
    data=st.data(),
)
def test_encoding_round_trip_random(radices, data):
    meas = tuple(tuple(f"m{i}_{k}" for k in range(len(r))) for i, r in enumerate(radices))
    res = tuple(tuple(tuple(str(z) for z in range(z_ik)) for z_ik in r) for r in radices)
    spec = ExperimentSpec(tuple(f"O{i}" for i in range(len(radices))), meas, res)
    code = data.draw(st.integers(0, spec.n_categories - 1))
    j = decode_category(spec, code)
    assert encode_category(spec, j) == code
    assert len(j) == spec.n_slots


def test_j_spec_examples(archetypal):
    assert archetypal.category_label(j_spec(archetypal, (0, 0), (0, 0))) == "U,N,U,N"
    assert archetypal.category_label(j_spec(archetypal, (0, 0), (1, 1))) == "D,N,D,N"


def test_j_spec_properties(archetypal):
    made = {}
    for s in enumerate_settings(archetypal):
        for d in enumerate_outcomes(archetypal, s, "tallied"):
            j = j_spec(archetypal, s, d)
            assert project(archetypal, j, s) == d
            assert j not in made
            made[j] = (s, d)
            for s2 in enumerate_settings(archetypal):
                if s2 == s:
                    continue
                r2 = project(archetypal, j, s2)
                changed = [i for i in range(2) if s2[i] != s[i]]
                assert any(r2[i] == archetypal.no_detect_index(i, s2[i]) for i in changed)
    assert len(made) == 16


def test_is_perfect(archetypal):
    assert sum(is_perfect(archetypal, j) for j in iter_categories(archetypal)) == 16


@pytest.mark.parametrize(
    "build",
    [
        lambda: ExperimentSpec.uniform(("Alice",), (("A1", "A2"),)),
        lambda: ExperimentSpec.uniform(("Alice", "Alice"), (("A1", "A2"), ("B1", "B2"))),
        lambda: ExperimentSpec.uniform(("Alice", "Bob"), (("A1",), ("B1", "B2"))),
        lambda: ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2"), ("B1", "B2")), ("U",)),
        lambda: ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2"), ("B1", "B2")), ("U", "N")),
        lambda: ExperimentSpec.uniform(("Alice", "Bob"), (("A1", "A2"), ("A1", "B2"))),
    ],
)
def test_invalid_specs(build):
    with pytest.raises(SpecError):
        build()


def test_tallied_override(archetypal):
    doc = archetypal.to_dict()
    doc["tallied"] = [{"setting": ["A1", "B1"], "outcomes": ["U,N", "U,U", "U,D", "D,U", "D,D"]}]
    spec = ExperimentSpec.from_dict(doc)
    assert not coincidences_only(spec)
    assert labels(spec, (0, 0), enumerate_outcomes(spec, (0, 0), "tallied")) == ["U,U", "U,D", "U,N", "D,U", "D,D"]
    assert labels(spec, (1, 1), enumerate_outcomes(spec, (1, 1), "tallied")) == ["U,U", "U,D", "D,U", "D,D"]
    again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again.tallied_override == spec.tallied_override
    assert again == spec and spec != archetypal

    doc["tallied"] = [{"setting": ["A1", "B1"], "outcomes": ["U,U", "U,D", "D,U"]}]
    with pytest.raises(SpecError, match="coincidence"):
        ExperimentSpec.from_dict(doc)
    doc["tallied"] = [{"setting": ["A1", "B1"], "outcomes": ["U,U", "U,D", "D,U", "D,D", "N,N"]}]
    with pytest.raises(SpecError, match="no-detect"):
        ExperimentSpec.from_dict(doc)


def test_spec_json_round_trip(archetypal):
    assert ExperimentSpec.from_dict(json.loads(json.dumps(archetypal.to_dict()))) == archetypal


def uniform_q(spec):
    return TalliedFrequencies({
        s: {d: 1 / len(enumerate_outcomes(spec, s, "tallied")) for d in enumerate_outcomes(spec, s, "tallied")}
        for s in enumerate_settings(spec)
    })


def test_frequencies_validation(archetypal):
    q = uniform_q(archetypal)
    q.validate(archetypal)
    bad = {s: dict(v) for s, v in q.values.items()}
    bad[(0, 0)][(0, 0)] += 1e-6
    with pytest.raises(SpecError, match="sum"):
        TalliedFrequencies(bad).validate(archetypal)
    bad[(0, 0)][(0, 0)] = -0.1
    with pytest.raises(SpecError):
        TalliedFrequencies(bad).validate(archetypal)
    missing = {s: v for s, v in q.values.items() if s != (1, 1)}
    with pytest.raises(SpecError, match="no frequencies"):
        TalliedFrequencies(missing).validate(archetypal)
    extra = {s: dict(v) for s, v in q.values.items()}
    extra[(0, 0)][(0, 2)] = 0.0
    with pytest.raises(SpecError, match="tallied"):
        TalliedFrequencies(extra).validate(archetypal)


def test_frequencies_json_exact(archetypal):
    rng = np.random.default_rng(3)
    vals = {}
    for s in enumerate_settings(archetypal):
        w = rng.random(4)
        w /= w.sum()
        vals[s] = dict(zip(enumerate_outcomes(archetypal, s, "tallied"), w.tolist()))
    q = TalliedFrequencies(vals)
    back = TalliedFrequencies.from_dict(json.loads(json.dumps(q.to_dict(archetypal))), archetypal)
    for s in vals:
        for d in vals[s]:
            assert back[s][d] == vals[s][d]  # decimal strings round-trip bit-exactly


def test_full_frequencies_sum_to_one(archetypal):
    rng = np.random.default_rng(0)
    x = rng.random(archetypal.n_categories)
    x /= x.sum()
    full = full_frequencies(archetypal, x)
    for s, arr in full.items():
        assert arr.shape == (9,)
        assert abs(arr.sum() - 1) < 1e-12
        # each entry is the sum over its categories
        for t, r in enumerate(enumerate_outcomes(archetypal, s, "all")):
            expect = sum(x[encode_category(archetypal, j)] for j in categories_for(archetypal, s, r))
            assert abs(arr[t] - expect) < 1e-12
    pdet = detection_probabilities(archetypal, x)
    for t, (i, k) in enumerate(archetypal.slots()):
        expect = sum(x[c] for c, j in enumerate(iter_categories(archetypal)) if j[t] != 2)
        assert abs(pdet[t] - expect) < 1e-12


def test_labels_and_parsing(archetypal):
    s = archetypal.parse_setting(["A2", "B1"])
    assert s == (1, 0)
    assert archetypal.parse_outcome(s, ["N", "D"]) == (2, 1)
    with pytest.raises(SpecError):
        archetypal.parse_setting(["A3", "B1"])
    with pytest.raises(SpecError):
        archetypal.parse_outcome(s, ["X", "U"])
    with pytest.raises(SpecError):
        archetypal.observer_index("Zed")
    assert list(itertools.islice(archetypal.slots(), 3)) == [(0, 0), (0, 1), (1, 0)]

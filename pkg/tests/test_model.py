import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankcollide.model import (
    FiniteSystemSpec,
    InfiniteSystemSpec,
    InitFamily,
    InvalidInputError,
    RankedState,
    SpecError,
    UnsupportedFamilyError,
    gaps,
    load_spec,
    rank_permutation,
    ranked_values,
    series_condition_holds,
    spec_from_dict,
    spec_to_dict,
    validate_finite_spec,
    validate_infinite_spec,
)


def oracle_rank(x):
    """Sort names by (value, name)."""
    return tuple(sorted(range(1, len(x) + 1), key=lambda i: (x[i - 1], i)))


@pytest.mark.parametrize("x, p", [
    ((3.0, 1.0, 2.0), (2, 3, 1)),
    ((1.0, 1.0), (1, 2)),
    ((2.0, 1.0, 1.0), (2, 3, 1)),
])
def test_rank_permutation_examples(x, p):
    assert rank_permutation(x).p == p


def test_rank_permutation_rejects_non_finite():
    with pytest.raises(InvalidInputError, match=r"x\[2\]"):
        rank_permutation([0.0, math.nan, 1.0])
    with pytest.raises(InvalidInputError):
        rank_permutation([math.inf])


tied_vectors = st.integers(1, 8).flatmap(
    lambda n: st.lists(st.sampled_from([-1.0, 0.0, 0.5, 2.0]) | st.floats(-5, 5),
                       min_size=n, max_size=n))


@given(tied_vectors)
def test_rank_permutation_properties(x):
    perm = rank_permutation(x)
    p = perm.p
    assert sorted(p) == list(range(1, len(x) + 1))
    for i in range(len(p) - 1):
        a, b = x[p[i] - 1], x[p[i + 1] - 1]
        assert a <= b
        if a == b:
            assert p[i] < p[i + 1]
    assert p == oracle_rank(x)


def test_rank_of_and_name_of_are_inverse():
    perm = rank_permutation([0.3, -2.0, 0.3, 1.0])
    for rank in range(1, 5):
        assert perm.rank_of(perm.name_of(rank)) == rank


@pytest.mark.parametrize("x, y, p", [
    ((3.0, 1.0, 2.0), (1.0, 2.0, 3.0), None),
    ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (1, 2, 3)),
    ((-1.5, 2.0), (-1.5, 2.0), None),
])
def test_ranked_values_examples(x, y, p):
    state = ranked_values(x)
    assert state.y == y
    if p is not None:
        assert state.perm.p == p


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.randoms())
def test_ranked_values_permutation_invariant(x, rnd):
    shuffled = list(x)
    rnd.shuffle(shuffled)
    assert ranked_values(shuffled).y == ranked_values(x).y
    assert sorted(ranked_values(x).y) == sorted(x)


@pytest.mark.parametrize("y, expected", [
    ((1, 2, 4), (1, 2)),
    ((0, 0, 0), (0, 0)),
    ((-1, -1, 5), (0, 6)),
])
def test_gaps_examples(y, expected):
    state = ranked_values(y)
    np.testing.assert_array_equal(gaps(state), expected)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=8))
def test_gaps_nonnegative(x):
    assert np.all(gaps(ranked_values(x)) >= 0)


def test_gaps_need_two_particles():
    with pytest.raises(InvalidInputError):
        gaps(ranked_values([1.0]))


# ----------------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------------


def test_validate_finite_examples():
    assert validate_finite_spec(FiniteSystemSpec(2, (0, 0), (1, 1), (0, 0))) == []
    problems = validate_finite_spec(FiniteSystemSpec(2, (0, 0), (1, 0), (0, 0)))
    assert problems == ["sigma2[2] must be > 0"]
    problems = validate_finite_spec(FiniteSystemSpec(2, (0, 0, 0), (1, 1), (0, 0)))
    assert len(problems) == 1 and "g has 3 entries" in problems[0]


def test_validate_finite_collects_all_violations():
    problems = validate_finite_spec(FiniteSystemSpec(1, (math.nan,), (-1,), ()))
    assert any(p.startswith("N must") for p in problems)
    assert "g[1] must be finite" in problems
    assert "sigma2[1] must be > 0" in problems
    assert any("x0 has 0 entries" in p for p in problems)


def linear(b, a=0.0):
    return InitFamily("linear", {"a": a, "b": b})


def test_infinite_linear_passes_all_gates():
    spec = InfiniteSystemSpec(3, (0.5, -0.5), (1.2, 1.4), 0.0, 1.0, linear(1.0))
    assert validate_infinite_spec(spec) == []


def test_infinite_tail_structure_gate():
    spec = InfiniteSystemSpec(3, (0.5,), (1.2, 1.4), 0.0, 1.0, linear(1.0))
    (v,) = validate_infinite_spec(spec)
    assert v.gate == "tail" and "g_head" in v


def test_infinite_bounded_gate():
    spec = InfiniteSystemSpec(2, (0.0,), (0.0,), math.inf, 1.0, linear(1.0))
    gates = sorted(v.gate for v in validate_infinite_spec(spec))
    assert gates == ["bounded", "bounded"]


def test_series_condition_log_family_fails():
    # x_i = sqrt(log(i + 1)): sum exp(-alpha x_i^2) = sum (i+1)^-alpha
    fam = InitFamily("log", {"c": 1.0, "beta": 0.5})
    assert not series_condition_holds(fam)
    spec = InfiniteSystemSpec(1, (), (), 0.0, 1.0, fam)
    (v,) = validate_infinite_spec(spec)
    assert v.gate == "series"


def test_series_condition_log_family_partial_sums_grow():
    """Independent numeric check of the p-series divergence at alpha = 1/2."""
    fam = InitFamily("log", {"c": 1.0, "beta": 0.5})
    x = fam.positions(10**6)
    terms = np.exp(-0.5 * x**2)
    partial = np.cumsum(terms)
    s3, s6 = partial[10**3 - 1], partial[-1]
    # sum_{i<=n} (i+1)^-1/2 ~ 2 sqrt(n): grows ~sqrt(1000)-fold
    assert s6 / s3 > 25
    np.testing.assert_allclose(terms[:5], (np.arange(1, 6) + 1.0) ** -0.5, rtol=1e-12)


def test_series_condition_converging_families():
    assert series_condition_holds(linear(1.0))
    assert series_condition_holds(InitFamily("power", {"c": 2.0, "gamma": 0.3}))
    assert series_condition_holds(InitFamily("log", {"c": 1.0, "beta": 0.51}))
    explicit = InitFamily("explicit", prefix=(5.0, -3.0), tail=linear(0.5))
    assert series_condition_holds(explicit)
    np.testing.assert_array_equal(explicit.positions(4), [5.0, -3.0, 1.5, 2.0])
    assert not series_condition_holds(linear(0.0))
    assert not series_condition_holds(InitFamily("power", {"c": 1.0, "gamma": 0.0}))


def test_series_condition_linear_numerically_bounded():
    # alpha small: partial sums of exp(-alpha i^2) stabilise
    x = linear(1.0).positions(20000)
    partial = np.cumsum(np.exp(-1e-4 * x**2))
    assert partial[-1] - partial[9999] < 1e-30


def test_unsupported_family():
    with pytest.raises(UnsupportedFamilyError):
        InitFamily.from_dict({"kind": "fractal"})
    with pytest.raises(UnsupportedFamilyError):
        series_condition_holds(InitFamily("fractal"))


# ----------------------------------------------------------------------------
# JSON documents
# ----------------------------------------------------------------------------


def test_finite_json_roundtrip(tmp_path):
    spec = FiniteSystemSpec(3, (1.0, 0.0, -1.0), (2.0, 1.0, 1.0), (0.0, 0.5, 1.0))
    doc = spec_to_dict(spec)
    assert list(doc) == ["N", "g", "sigma2", "x0"]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert load_spec(path) == spec


def test_infinite_json_roundtrip():
    spec = InfiniteSystemSpec(3, (0.5, -0.5), (1.2, 1.4), 0.0, 1.0,
                              InitFamily("explicit", prefix=(0.0, 0.1),
                                         tail=InitFamily("power", {"c": 1.0, "gamma": 1.0})))
    doc = json.loads(json.dumps(spec_to_dict(spec)))
    assert set(doc) == {"n0", "g_head", "sigma2_head", "g_tail", "sigma2_tail", "init"}
    assert doc["init"]["kind"] == "explicit"
    assert spec_from_dict(doc) == spec


@pytest.mark.parametrize("doc, field", [
    ({"N": 2, "g": [0, 0], "x0": [0, 0]}, "sigma2"),
    ({"N": 2, "g": [0, "a"], "sigma2": [1, 1], "x0": [0, 0]}, "g"),
    ({"N": "2", "g": [0, 0], "sigma2": [1, 1], "x0": [0, 0]}, "N"),
    ({"n0": 1, "g_head": [], "sigma2_head": [], "g_tail": 0, "sigma2_tail": 1}, "init"),
    ({"n0": 1, "g_head": [], "sigma2_head": [], "g_tail": 0, "sigma2_tail": 1,
      "init": {"kind": "linear"}}, "init.b"),
])
def test_malformed_documents_name_the_field(doc, field):
    with pytest.raises(SpecError) as info:
        spec_from_dict(doc)
    assert info.value.field == field

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from claimcheck.corpus import Relation
from claimcheck.formula import (
    Binding,
    abstract,
    evaluate,
    instantiate,
    parse,
)
from claimcheck.querygen import (
    Context,
    QueryCandidate,
    collect_values,
    generate,
    suggest_correction,
)

GROWTH = abstract(parse("POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1"))
RATIO = abstract(parse("a.2017 / b.2016"))
POSITIVE_SUM = abstract(parse("(a.2017 + b.2016) > 0"))

EXAMPLE_SQL = ("SELECT POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1 "
               "FROM GED a, GED b "
               "WHERE a.Index = 'PGElecDemand' AND b.Index = 'PGElecDemand'")

# 22209 / 21562 - 1, the 2017 electricity demand growth in the fixture table
FIXTURE_GROWTH = 0.030006492904183224


def ctx(formulas, parameter=None, tolerance=0.05, attributes=("2016", "2017"),
        key_values=("PGElecDemand",), relations=("GED",)):
    return Context(tuple(relations), tuple(key_values), tuple(attributes),
                   tuple(formulas), parameter, tolerance)


def test_collect_values_counts_existing_cells(ged, ged_relations):
    cells = collect_values(ctx((GROWTH,), attributes=("2017", "2018")),
                           ged_relations)
    assert cells == [("GED", "PGElecDemand", "2017"),
                     ("GED", "PGElecDemand", "2018")]


def test_collect_values_absent_key_is_empty(ged_relations):
    cells = collect_values(ctx((GROWTH,), key_values=("NoSuchRow",)),
                           ged_relations)
    assert cells == []


def test_collect_values_cartesian_order(ged):
    twin = Relation("GED2", ged.key_attribute, ged.attributes, ged.rows)
    relations = {"GED": ged, "GED2": twin}
    cells = collect_values(ctx((GROWTH,), relations=("GED", "GED2")), relations)
    assert cells == [("GED", "PGElecDemand", "2016"),
                     ("GED", "PGElecDemand", "2017"),
                     ("GED2", "PGElecDemand", "2016"),
                     ("GED2", "PGElecDemand", "2017")]


def test_generate_includes_reference_query(ged_relations):
    candidates = generate(ctx((GROWTH,)), ged_relations)
    sqls = [c.sql for c in candidates]
    assert EXAMPLE_SQL in sqls
    # general claim: nothing can be marked as matched
    assert all(not c.matched for c in candidates)


def test_generate_explicit_mismatch_keeps_alternatives(ged_relations):
    candidates = generate(ctx((GROWTH,), parameter=0.025), ged_relations)
    assert candidates, "alternatives must survive a failed match"
    assert all(not c.matched for c in candidates)
    assert any(c.value == pytest.approx(FIXTURE_GROWTH) for c in candidates)
    correction = suggest_correction(candidates, 0.025)
    assert correction is not None
    assert correction.value == pytest.approx(FIXTURE_GROWTH)


def test_generate_explicit_match_returns_matched_set(ged_relations):
    candidates = generate(ctx((GROWTH,), parameter=0.03), ged_relations)
    # both cell orders hit the same growth value, so both match
    assert len(candidates) == 2
    assert all(c.matched for c in candidates)
    assert all(c.value == pytest.approx(FIXTURE_GROWTH) for c in candidates)


def test_generate_too_few_cells_yields_nothing(ged_relations):
    candidates = generate(ctx((GROWTH,), attributes=("2017",)), ged_relations)
    assert candidates == []


def test_generate_no_cells_yields_nothing(ged_relations):
    candidates = generate(ctx((GROWTH,), key_values=("NoSuchRow",)),
                          ged_relations)
    assert candidates == []


def test_generate_is_deterministic(ged_relations):
    context = ctx((GROWTH, RATIO), attributes=("2016", "2017", "2018"))
    first = [c.sql for c in generate(context, ged_relations)]
    second = [c.sql for c in generate(context, ged_relations)]
    assert first == second
    assert len(first) > 0


def test_candidate_order_is_rank_major(ged_relations):
    context = ctx((GROWTH, RATIO))
    ranks = [c.rank for c in generate(context, ged_relations)]
    assert ranks == sorted(ranks)
    assert set(ranks) == {0, 1}


def test_candidate_cap_truncates_in_order(ged_relations):
    context = ctx((RATIO,),
                  key_values=("PGElecDemand", "PGINCoal", "TFCelec"),
                  attributes=("2016", "2017", "2018", "2030", "2040"))
    full = generate(context, ged_relations)
    assert len(full) == 15 * 14
    capped = generate(context, ged_relations, max_candidates=50)
    assert len(capped) == 50
    assert [c.sql for c in capped] == [c.sql for c in full[:50]]


def test_cap_respects_formula_rank(ged_relations):
    context = ctx((RATIO, GROWTH),
                  key_values=("PGElecDemand", "PGINCoal"),
                  attributes=("2016", "2017", "2018"))
    capped = generate(context, ged_relations, max_candidates=10)
    assert len(capped) == 10
    assert all(c.rank == 0 for c in capped)


def test_with_repetition_knob(ged_relations):
    context = ctx((RATIO,))
    without = generate(context, ged_relations)
    with_rep = generate(context, ged_relations, allow_repeats=True)
    assert len(without) == 2
    assert len(with_rep) == 4


def test_repeated_cells_record_evaluation_errors(ged_relations):
    context = ctx((GROWTH,))
    with_rep = generate(context, ged_relations, allow_repeats=True)
    # the self-paired arrangements divide by (year - year) = 0
    errors = [c for c in with_rep if c.error is not None]
    assert errors, "degenerate arrangements must be kept, not raised"
    assert all(c.value is None and not c.matched for c in errors)
    # the two distinct-cell arrangements still evaluate
    assert sum(c.error is None for c in with_rep) == 2


def test_boolean_formula_never_matches(ged_relations):
    candidates = generate(ctx((POSITIVE_SUM,), parameter=1.0), ged_relations)
    assert all(c.value is True for c in candidates)
    assert all(not c.matched for c in candidates)
    assert suggest_correction(candidates, 1.0) is None


def _candidate(value, rank=0, error=None):
    binding = Binding(aliases={}, attributes={})
    return QueryCandidate(RATIO, binding, "SELECT 1", value, False, rank,
                          error=error)


def test_suggest_correction_prefers_nearest_value():
    # |0.03 - 0.025| / 0.025 = 0.2 beats |0.12 - 0.025| / 0.025 = 3.8
    picked = suggest_correction([_candidate(0.12, 0), _candidate(0.03, 1)],
                                0.025)
    assert picked is not None and picked.value == 0.03


def test_suggest_correction_empty_is_none():
    assert suggest_correction([], 0.025) is None


def test_suggest_correction_tie_keeps_earlier_rank():
    # distances to p = 0 are exactly equal for +1 and -1
    first = _candidate(1.0, 0)
    second = _candidate(-1.0, 1)
    assert suggest_correction([first, second], 0.0) is first


def test_suggest_correction_skips_error_and_boolean():
    usable = _candidate(5.0, 2)
    picked = suggest_correction(
        [_candidate(None, 0, error="boom"), _candidate(True, 1), usable], 4.9)
    assert picked is usable


# ---------------------------------------------------------------------------
# brute-force equivalence on small instances


def _oracle(context, relations):
    """Exhaustive re-enumeration that avoids the production wiring helpers."""
    cells = []
    for name in context.relations:
        rel = relations.get(name)
        if rel is None:
            continue
        for key in context.key_values:
            for attribute in context.attributes:
                if rel.has_cell(key, attribute):
                    cells.append((name, key, attribute))
    matched, alternatives = [], []
    for rank, template in enumerate(context.formulas):
        n = len(template.value_vars)
        for arrangement in itertools.permutations(cells, n):
            attr_map, rows, ok = {}, {}, True
            for (alias, attr_var), (rname, key, label) in zip(
                    template.value_vars, arrangement):
                if attr_map.get(attr_var, label) != label:
                    ok = False
                    break
                if rows.get(alias, (rname, key)) != (rname, key):
                    ok = False
                    break
                attr_map[attr_var] = label
                rows[alias] = (rname, key)
            if not ok:
                continue
            concrete = instantiate(template, attr_map)
            lookup = {}
            for (alias, attr_var), (rname, key, label) in zip(
                    template.value_vars, arrangement):
                lookup[(alias, label)] = relations[rname].cell(key, label)
            try:
                value = evaluate(concrete, lookup, context.tolerance)
            except Exception:
                alternatives.append((rank, None))
                continue
            p = context.parameter
            if (p is not None and not isinstance(value, bool)
                    and abs(value - p) / max(abs(p), 1e-9) < context.tolerance):
                matched.append((rank, value))
            else:
                alternatives.append((rank, value))
    return matched if matched else alternatives


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.integers(min_value=1, max_value=60),
                    min_size=6, max_size=6),
    parameter=st.sampled_from([None, 0.25, 0.5, 1.0, 2.0]),
    tolerance=st.sampled_from([0.05, 0.2, 0.5]),
)
def test_matches_exhaustive_enumeration(values, parameter, tolerance):
    attrs = ("2000", "2001", "2002")
    rows = {
        "r1": dict(zip(attrs, map(float, values[:3]))),
        "r2": dict(zip(attrs, map(float, values[3:]))),
    }
    relation = Relation("T", "Key", attrs, rows)
    relations = {"T": relation}
    diff = abstract(parse("a.2001 - b.2000"))
    context = Context(("T",), ("r1", "r2"), attrs, (RATIO, diff),
                      parameter, tolerance)
    produced = [(c.rank, c.value) for c in generate(context, relations)]
    assert produced == _oracle(context, relations)

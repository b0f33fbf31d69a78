"""Candidate query enumeration over a claim's validated context.

Given relation names, key values, attribute labels and a ranked formula
list, enumerate every way of wiring table cells into each formula's value
slots, evaluate the result, and render the SQL form.  Explicit claims
split candidates into a matched set (value within tolerance of the stated
parameter) and an alternative set used for correction suggestions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .corpus import Relation
from .formula import (
    Binding,
    FormulaEvalError,
    Template,
    TOLERANCE_FLOOR,
    bind_value_vars,
    evaluate_template,
    instantiate,
    relative_error,
    sql_with_key_attrs,
)

# (relation name, key value, attribute label) coordinate of one table cell
Cell = tuple[str, str, str]

DEFAULT_CANDIDATE_CAP = 10_000


@dataclass(frozen=True)
class Context:
    """Validated inputs that scope query generation for one claim."""

    relations: tuple[str, ...]
    key_values: tuple[str, ...]
    attributes: tuple[str, ...]
    formulas: tuple[Template, ...]
    parameter: Optional[float] = None
    tolerance: float = 0.05

    @property
    def explicit(self) -> bool:
        return self.parameter is not None


@dataclass(frozen=True)
class QueryCandidate:
    """One evaluated wiring of cells into a formula."""

    template: Template
    binding: Binding
    sql: str
    value: Optional[Union[float, bool]]
    matched: bool
    rank: int
    error: Optional[str] = None

    def to_record(self) -> dict:
        value: Optional[Union[float, bool]] = self.value
        if isinstance(value, bool):
            value = bool(value)
        return {
            "sql": self.sql,
            "value": value,
            "matched": self.matched,
            "formula": self.template.key,
            "rank": self.rank,
            "error": self.error,
        }


def collect_values(context: Context,
                   relations: Mapping[str, Relation]) -> list[Cell]:
    """All existing cells over relations x key values x attributes.

    Absent relations, keys or attributes are skipped silently; an empty
    result just means generation has nothing to wire.
    """
    cells: list[Cell] = []
    for name in context.relations:
        relation = relations.get(name)
        if relation is None:
            continue
        for key in context.key_values:
            for attribute in context.attributes:
                if relation.has_cell(key, attribute):
                    cells.append((name, key, attribute))
    return cells


def _arrangements(cells: Sequence[Cell], n: int,
                  allow_repeats: bool) -> Iterable[tuple[Cell, ...]]:
    if allow_repeats:
        return itertools.product(cells, repeat=n)
    return itertools.permutations(cells, n)


def generate(context: Context,
             relations: Mapping[str, Relation],
             *,
             allow_repeats: bool = False,
             max_candidates: int = DEFAULT_CANDIDATE_CAP) -> list[QueryCandidate]:
    """Enumerate, evaluate and render candidates in deterministic order.

    Candidates come out ordered by formula rank, then by cell-arrangement
    order.  For an explicit claim the matched set is returned when any
    candidate's value lies within ``tolerance`` relative difference of the
    parameter; otherwise (and for general claims) all evaluable
    arrangements are returned as alternatives.  Evaluation failures are
    kept as candidates with ``error`` set rather than aborting the run.
    """
    cells = collect_values(context, relations)
    if not cells:
        return []
    matched: list[QueryCandidate] = []
    alternatives: list[QueryCandidate] = []
    total = 0
    for rank, template in enumerate(context.formulas):
        n = len(template.value_vars)
        if n > len(cells) and not allow_repeats:
            continue
        if n == 0:
            continue
        for arrangement in _arrangements(cells, n, allow_repeats):
            if total >= max_candidates:
                break
            try:
                binding = bind_value_vars(template, arrangement)
            except FormulaEvalError:
                # shared alias or attribute variable wired inconsistently:
                # not a query at all, skip without recording
                continue
            candidate = _evaluate_candidate(context, template, binding,
                                            relations, rank)
            total += 1
            if candidate.matched:
                matched.append(candidate)
            else:
                alternatives.append(candidate)
        if total >= max_candidates:
            break
    return matched if matched else alternatives


def _evaluate_candidate(context: Context, template: Template,
                        binding: Binding, relations: Mapping[str, Relation],
                        rank: int) -> QueryCandidate:
    expr = instantiate(template, binding.attributes)
    sql = sql_with_key_attrs(expr, binding, relations)
    try:
        value = evaluate_template(template, binding, relations,
                                  context.tolerance)
    except FormulaEvalError as exc:
        return QueryCandidate(template, binding, sql, None, False, rank,
                              error=str(exc))
    is_match = (context.explicit
                and not isinstance(value, bool)
                and relative_error(value, context.parameter) < context.tolerance)
    return QueryCandidate(template, binding, sql, value, is_match, rank)


def suggest_correction(alternatives: Sequence[QueryCandidate],
                       parameter: float) -> Optional[QueryCandidate]:
    """Alternative whose value is nearest the stated parameter.

    Distance is relative to the parameter's magnitude.  Ties keep the
    earliest candidate, which means the lower formula rank because the
    input preserves generation order.  Error or boolean-valued candidates
    never qualify.
    """
    best: Optional[QueryCandidate] = None
    best_distance = float("inf")
    for candidate in alternatives:
        if candidate.error is not None or isinstance(candidate.value, bool):
            continue
        if candidate.value is None:
            continue
        distance = abs(candidate.value - parameter) / max(abs(parameter),
                                                          TOLERANCE_FLOOR)
        if distance < best_distance:
            best = candidate
            best_distance = distance
    return best

"""Per-claim question planning.

Decides how many screens and options a claim gets, orders options to
minimize expected reading time, and picks which query properties to ask
about by greedily maximizing expected pruning of query candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .classifiers import KINDS, PropertyDistribution
from .config import CostModel
from .querygen import QueryCandidate

__all__ = [
    "CostModel",
    "Option",
    "Screen",
    "ScreenPlan",
    "PruningIndex",
    "budget_screens",
    "expected_cost",
    "order_options",
    "candidate_properties",
    "build_pruning_index",
    "pruning_power",
    "select_properties",
    "plan_claim",
    "worst_case_seconds",
]


@dataclass(frozen=True)
class Option:
    value: str
    probability: float  # raw model probability over the full label space


@dataclass(frozen=True)
class Screen:
    kind: str
    options: tuple[Option, ...]  # descending probability

    def to_record(self) -> dict:
        shown = display_probabilities(self.options)
        return {
            "kind": self.kind,
            "options": [
                {"value": o.value, "probability": o.probability,
                 "display_probability": shown[i]}
                for i, o in enumerate(self.options)
            ],
        }


@dataclass(frozen=True)
class ScreenPlan:
    claim_id: str
    screens: tuple[Screen, ...]
    final_candidates: tuple[QueryCandidate, ...]
    nop: int
    nsc: int
    expected_seconds: float

    def to_record(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "nop": self.nop,
            "nsc": self.nsc,
            "expected_seconds": self.expected_seconds,
            "screens": [
                dict(s.to_record(), index=i) for i, s in enumerate(self.screens)
            ],
            "final": [c.to_record() for c in self.final_candidates],
        }


def budget_screens(cost: CostModel) -> tuple[int, int]:
    """Options per screen and screen count that cap overhead at 3x manual.

    Both ratios floor toward zero; a degenerate cost model still gets one
    option and one screen.
    """
    nop = int(cost.suggest_formula // cost.verify_formula)
    nsc = int(cost.suggest_formula
              // (cost.verify_property + cost.suggest_property))
    return max(1, nop), max(1, nsc)


OptionsLike = Union[PropertyDistribution, Mapping[str, float],
                    Iterable[tuple[str, float]]]


def _pairs(options: OptionsLike) -> list[tuple[str, float]]:
    if isinstance(options, PropertyDistribution):
        return list(options.entries)
    if isinstance(options, Mapping):
        return list(options.items())
    out = []
    for item in options:
        if isinstance(item, Option):
            out.append((item.value, item.probability))
        else:
            value, probability = item
            out.append((value, probability))
    return out


def expected_cost(options: OptionsLike, per_option_cost: float) -> float:
    """Expected seconds to scan an ordered option list top to bottom.

    A reader stops at the correct option, so option i is read unless one
    of the strictly earlier options was already correct.  Once the leading
    options account for all probability mass, later terms contribute
    nothing.
    """
    pairs = _pairs(options)
    total = 0.0
    seen = 0.0
    for _, probability in pairs:
        total += max(0.0, 1.0 - seen)
        seen += probability
    return per_option_cost * total


def order_options(options: OptionsLike) -> tuple[Option, ...]:
    """Descending probability, ties broken lexicographically by value."""
    pairs = _pairs(options)
    pairs.sort(key=lambda vp: (-vp[1], vp[0]))
    return tuple(Option(value, probability) for value, probability in pairs)


def display_probabilities(options: Sequence[Option]) -> list[float]:
    """Probabilities renormalized over the options actually displayed."""
    if not options:
        return []
    total = sum(o.probability for o in options)
    if total <= 0.0:
        return [1.0 / len(options)] * len(options)
    return [o.probability / total for o in options]


# ---------------------------------------------------------------------------
# pruning power


def candidate_properties(candidate: QueryCandidate) -> dict[str, frozenset[str]]:
    """Values this candidate exhibits for each askable property kind."""
    relations = frozenset(t.relation for t in candidate.binding.aliases.values())
    keys = frozenset(
        k for t in candidate.binding.aliases.values() for k in t.key_values())
    attributes = frozenset(candidate.binding.attributes.values())
    return {
        "relation": relations,
        "key_value": keys,
        "attribute": attributes,
        "formula": frozenset({candidate.template.key}),
    }


@dataclass(frozen=True)
class PruningIndex:
    """Per (kind, answer value): which query candidates that answer rules out.

    A candidate is ruled out exactly when it does not exhibit the answered
    value for that kind.
    """

    exclusions: Mapping[tuple[str, str], frozenset]

    def excluded(self, kind: str, value: str) -> frozenset:
        return self.exclusions.get((kind, value), frozenset())


def build_pruning_index(
        candidates: Sequence[QueryCandidate],
        distributions: Mapping[str, OptionsLike]) -> PruningIndex:
    properties = [candidate_properties(c) for c in candidates]
    exclusions: dict[tuple[str, str], frozenset] = {}
    for kind, options in distributions.items():
        for value, _ in _pairs(options):
            ruled_out = frozenset(
                i for i, props in enumerate(properties)
                if value not in props.get(kind, frozenset()))
            exclusions[(kind, value)] = ruled_out
    return PruningIndex(exclusions)


def pruning_power(selected: Iterable[str],
                  queries: Sequence,
                  distributions: Mapping[str, OptionsLike],
                  index: PruningIndex) -> float:
    """Expected number of query candidates ruled out by asking ``selected``.

    Assumes property answers are independent and mutually exclusive within
    a property, so the survival chance of a candidate is the product over
    selected properties of the mass on answers that keep it.
    """
    kinds = list(selected)
    total = 0.0
    for q in queries:
        survive = 1.0
        for kind in kinds:
            mass = 0.0
            for value, probability in _pairs(distributions.get(kind, ())):
                if q not in index.excluded(kind, value):
                    mass += probability
            survive *= mass
        total += 1.0 - survive
    return total


def select_properties(queries: Sequence,
                      distributions: Mapping[str, OptionsLike],
                      index: PruningIndex,
                      nsc: int) -> list[str]:
    """Greedy pruning-power maximization, at most ``nsc`` properties.

    Each step adds the kind with the largest marginal gain; ties fall back
    on the fixed kind order so planning is reproducible.
    """
    available = [k for k in KINDS if _pairs(distributions.get(k, ()))]
    chosen: list[str] = []
    while available and len(chosen) < nsc:
        best_kind = None
        best_value = -math.inf
        for kind in available:
            value = pruning_power(chosen + [kind], queries, distributions, index)
            if value > best_value:
                best_kind, best_value = kind, value
        assert best_kind is not None
        chosen.append(best_kind)
        available.remove(best_kind)
    return chosen


# ---------------------------------------------------------------------------
# whole-claim plans


def candidate_scores(candidates: Sequence[QueryCandidate],
                     distributions: Mapping[str, OptionsLike]) -> list[float]:
    """Joint probability proxy: product of per-kind mass on the candidate's
    own property values, over every kind the models can speak to."""
    scores = []
    for candidate in candidates:
        props = candidate_properties(candidate)
        score = 1.0
        for kind in KINDS:
            pairs = _pairs(distributions.get(kind, ()))
            if not pairs:
                continue
            score *= sum(p for v, p in pairs if v in props[kind])
        scores.append(score)
    return scores


def plan_claim(claim_id: str,
               distributions: Mapping[str, OptionsLike],
               candidates: Sequence[QueryCandidate],
               cost: Optional[CostModel] = None,
               *,
               nop: Optional[int] = None,
               nsc: Optional[int] = None,
               screen_budget: Optional[float] = None) -> ScreenPlan:
    """Assemble the screen sequence and expected checker time for one claim.

    Property screens are trimmed so their combined worst case (read every
    option, then type an answer) stays within ``screen_budget``; together
    with the final screen cap this keeps any outcome under three times the
    cost of a fully manual check.
    """
    cost = cost or CostModel()
    if nop is None or nsc is None:
        default_nop, default_nsc = budget_screens(cost)
        nop = default_nop if nop is None else nop
        nsc = default_nsc if nsc is None else nsc
    budget = cost.screen_budget if screen_budget is None else screen_budget

    if not candidates:
        return ScreenPlan(claim_id, (), (), nop, nsc, cost.suggest_formula)

    index = build_pruning_index(candidates, distributions)
    selection = select_properties(range(len(candidates)), distributions,
                                  index, nsc)

    screens: list[Screen] = []
    spent = 0.0
    for kind in selection:
        options = order_options(distributions[kind])[:nop]
        headroom = budget - spent - cost.suggest_property
        allowed = int(headroom // cost.verify_property)
        if allowed < 1:
            break
        options = options[:allowed]
        screens.append(Screen(kind, options))
        spent += len(options) * cost.verify_property + cost.suggest_property

    scores = candidate_scores(candidates, distributions)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    displayable = [i for i in order if candidates[i].error is None]
    final = tuple(candidates[i] for i in displayable[:nop])

    expected = 0.0
    for screen in screens:
        shown = display_probabilities(screen.options)
        expected += expected_cost(
            [(o.value, p) for o, p in zip(screen.options, shown)],
            cost.verify_property)
    if final:
        final_probs = [scores[i] for i in displayable[:nop]]
        total = sum(final_probs)
        if total > 0:
            final_probs = [p / total for p in final_probs]
        else:
            final_probs = [1.0 / len(final)] * len(final)
        expected += expected_cost(
            [(str(i), p) for i, p in enumerate(final_probs)],
            cost.verify_formula)
    else:
        expected += cost.suggest_formula

    return ScreenPlan(claim_id, tuple(screens), final, nop, nsc, expected)


def worst_case_seconds(plan: ScreenPlan, cost: CostModel) -> float:
    """Realized-cost ceiling: read everything, then suggest at every step."""
    total = 0.0
    for screen in plan.screens:
        total += len(screen.options) * cost.verify_property
        total += cost.suggest_property
    total += len(plan.final_candidates) * cost.verify_formula
    total += cost.suggest_formula
    return total

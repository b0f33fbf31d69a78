"""Interactive verification sessions.

A session batches unverified claims, turns each batch claim into a short
run of property screens plus one final query screen, charges checker
seconds for every interaction, settles verdicts by majority vote and
refits the property classifiers on each batch's confirmed contexts before
the next batch is picked.

Three orderings share the machinery.  "optimized" selects each batch by
expected training utility against expected cost, "sequential" walks the
document in order, "manual" skips screens entirely and charges the full
per-claim suggestion price, which makes it the no-assistance baseline.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence, Union

import numpy as np

from . import batcher, planner, querygen
from .classifiers import KINDS, ModelSet, PropertyDistribution
from .config import CostModel, SessionConfig
from .corpus import Claim, Corpus
from .features import EmbeddingTable, FittedFeaturizer, fit_featurizer
from .formula import (
    AliasTarget,
    Binding,
    FormulaEvalError,
    FormulaParseError,
    Template,
    ValueRef,
    abstract,
    aliases_in_order,
    evaluate_bound,
    instantiate,
    parse,
    relative_error,
    sql_with_key_attrs,
    walk,
)
from .querygen import Context, QueryCandidate

MODES = ("manual", "sequential", "optimized")

# candidate enumeration cap while planning screens; the final screen after
# validation regenerates from a single confirmed context and needs no cap
PLANNING_CANDIDATE_CAP = 200

VoteKey = tuple


class EngineError(Exception):
    """Session protocol violation.  ``code`` routes API error mapping and
    ``position`` carries the offset of an unparsable suggestion."""

    def __init__(self, message: str, code: str = "bad_answer",
                 position: Optional[int] = None):
        super().__init__(message)
        self.code = code
        self.position = position


# ---------------------------------------------------------------------------
# wire types


@dataclass(frozen=True)
class ScreenView:
    """One question as a checker sees it.

    Property screens list label options in descending model probability;
    the final screen lists evaluated candidate queries.  ``multi`` marks
    the attribute screen, the only one that accepts several selections.
    """

    screen_id: str
    claim_id: str
    index: int
    kind: str  # property kind, "final" or "manual"
    multi: bool
    sentence_text: str
    claim_span: tuple[int, int]
    section_id: str
    options: tuple = ()

    def to_record(self) -> dict:
        record = {
            "screen_id": self.screen_id,
            "claim_id": self.claim_id,
            "index": self.index,
            "kind": self.kind,
            "multi": self.multi,
            "sentence_text": self.sentence_text,
            "claim_span": list(self.claim_span),
            "section_id": self.section_id,
        }
        if self.kind == "final":
            record["candidates"] = [c.to_record() for c in self.options]
        elif self.kind == "manual":
            record["candidates"] = []
        else:
            shown = planner.display_probabilities(self.options)
            record["options"] = [
                {"value": o.value, "probability": o.probability,
                 "display_probability": shown[i]}
                for i, o in enumerate(self.options)
            ]
        return record


@dataclass(frozen=True)
class Answer:
    """A checker's reply to one screen.

    ``selected`` holds option indices in reading order.  ``suggestion`` is
    a typed replacement: a label (attribute screens take a comma-separated
    list) or, on formula and final screens, an expression.  ``verdict``
    is only read on manual screens and on the final screen of a general
    claim, where the checker judges the displayed value.
    """

    screen_id: str
    checker: str = "checker-1"
    selected: tuple[int, ...] = ()
    suggestion: Optional[str] = None
    verdict: Optional[str] = None

    @classmethod
    def from_record(cls, raw: Mapping) -> "Answer":
        screen_id = raw.get("screen_id")
        if not isinstance(screen_id, str) or not screen_id:
            raise EngineError("answer needs a screen_id")
        selected = raw.get("selected", ())
        if not isinstance(selected, (list, tuple)) or any(
                not isinstance(i, int) or isinstance(i, bool) for i in selected):
            raise EngineError("selected must be a list of option indices")
        suggestion = raw.get("suggestion")
        if suggestion is not None and not isinstance(suggestion, str):
            raise EngineError("suggestion must be a string")
        verdict = raw.get("verdict")
        if verdict is not None and verdict not in ("correct", "incorrect"):
            raise EngineError(f"unknown verdict {verdict!r}")
        return cls(screen_id=screen_id,
                   checker=str(raw.get("checker", "checker-1")),
                   selected=tuple(selected),
                   suggestion=suggestion,
                   verdict=verdict)

    def payload_key(self) -> tuple:
        return (self.checker, tuple(self.selected), self.suggestion, self.verdict)


@dataclass(frozen=True)
class ValidationOutcome:
    """What the final screen decided for one claim attempt."""

    claim_id: str
    verdict: str  # "correct" | "incorrect"
    witness: Optional[QueryCandidate]
    correction: Optional[QueryCandidate]
    seconds: float
    context: dict[str, tuple[str, ...]]


@dataclass
class VerificationResult:
    claim_id: str
    verdict: str
    witness: Optional[QueryCandidate]
    correction: Optional[QueryCandidate]
    context: dict[str, tuple[str, ...]]
    votes: tuple[tuple[str, str], ...]  # (checker id, opinion)
    seconds: float
    requeues: int
    batch_index: int

    def to_record(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "verdict": self.verdict,
            "witness": self.witness.to_record() if self.witness else None,
            "correction": self.correction.to_record() if self.correction else None,
            "context": {k: list(v) for k, v in self.context.items()},
            "votes": [list(v) for v in self.votes],
            "seconds": self.seconds,
            "requeues": self.requeues,
            "batch": self.batch_index,
        }


class Checker(Protocol):
    id: str

    def answer(self, view: ScreenView) -> Answer: ...

    def vote(self, claim: Claim, outcome: ValidationOutcome) -> str: ...


# ---------------------------------------------------------------------------
# pure resolution steps


def _suggested_candidate(claim: Claim, context: Mapping[str, tuple[str, ...]],
                         text: str, relations: Mapping,
                         rank: int) -> QueryCandidate:
    """Build a candidate from a typed final-screen expression.

    Aliases bind positionally to the validated relation and key lists; a
    single confirmed pair covers every alias, which is the common case.
    """
    try:
        expr = parse(text)
    except FormulaParseError as err:
        raise EngineError(str(err), code="parse", position=err.position)
    rels = context.get("relation", ())
    keys = context.get("key_value", ())
    if not rels or not keys:
        raise EngineError("cannot bind a suggestion before the relation and "
                          "key value are confirmed")
    aliases = {}
    for i, alias in enumerate(aliases_in_order(expr)):
        aliases[alias] = AliasTarget(rels[min(i, len(rels) - 1)],
                                     keys[min(i, len(keys) - 1)])
    template = abstract(expr)
    mapping: dict[str, str] = {}
    concrete_refs = [n for n in walk(expr) if isinstance(n, ValueRef)]
    template_refs = [n for n in walk(template.expr) if isinstance(n, ValueRef)]
    for concrete, abstracted in zip(concrete_refs, template_refs):
        if abstracted.attribute in template.attr_vars:
            mapping[abstracted.attribute] = concrete.attribute
    binding = Binding(aliases, mapping)
    try:
        value = evaluate_bound(expr, binding, relations, claim.tolerance)
        sql = sql_with_key_attrs(expr, binding, relations)
        error = None
    except FormulaEvalError as err:
        value, error = None, str(err)
        sql = text
    matched = (claim.kind == "explicit" and claim.parameter is not None
               and isinstance(value, float)
               and relative_error(value, claim.parameter) < claim.tolerance)
    return QueryCandidate(template=template, binding=binding, sql=sql,
                          value=value, matched=matched, rank=rank, error=error)


def validate(claim: Claim, context: Mapping[str, tuple[str, ...]],
             candidates: Sequence[QueryCandidate], answer: Answer,
             relations: Mapping, cost: Optional[CostModel] = None
             ) -> ValidationOutcome:
    """Map a final-screen answer to a verdict with evidence.

    Accepting a candidate costs one read per option down to it.  A typed
    suggestion means every candidate was read first and is charged on top.
    For an explicit claim the verdict follows from whether the decisive
    query's value lies within tolerance of the stated parameter; a plain
    rejection yields incorrect with the nearest displayed value as the
    offered correction.  For a general claim the checker's judgement wins,
    except that a comparison evaluating false can never vindicate.
    """
    cost = cost or CostModel()
    if len(answer.selected) > 1:
        raise EngineError("the final screen takes a single selection")
    chosen: Optional[QueryCandidate] = None
    if answer.selected:
        i = answer.selected[0]
        if not 0 <= i < len(candidates):
            raise EngineError(f"candidate index {i} out of range")
        chosen = candidates[i]
        if chosen.error is not None:
            raise EngineError("cannot accept a candidate that failed to evaluate")
        seconds = (i + 1) * cost.verify_formula
    else:
        seconds = len(candidates) * cost.verify_formula
    if answer.suggestion is not None:
        seconds = len(candidates) * cost.verify_formula + cost.suggest_formula
        chosen = _suggested_candidate(claim, context, answer.suggestion,
                                      relations, rank=len(candidates))
        if chosen.error is not None:
            raise EngineError(f"suggested query failed: {chosen.error}")

    ctx = {k: tuple(v) for k, v in context.items()}
    if chosen is None:
        correction = None
        if claim.parameter is not None:
            correction = querygen.suggest_correction(candidates, claim.parameter)
        return ValidationOutcome(claim.id, "incorrect", None, correction,
                                 seconds, ctx)
    if claim.kind == "explicit":
        verdict = "correct" if chosen.matched else "incorrect"
    else:
        verdict = answer.verdict or (
            "incorrect" if chosen.value is False else "correct")
        if chosen.value is False:
            verdict = "incorrect"
    witness = chosen if verdict == "correct" else None
    correction = None if verdict == "correct" else chosen
    return ValidationOutcome(claim.id, verdict, witness, correction,
                             seconds, ctx)


def unanimous(votes: Mapping[str, Sequence[VoteKey]], checkers: int
              ) -> dict[str, VoteKey]:
    """Claims whose votes reach a strict majority, with the winning key.

    A key pairs the verdict with its evidence, so "correct" votes only
    agree when they point at the same witness query.  Less than a strict
    majority on every key leaves the claim out, which requeues it.
    """
    if checkers < 1:
        raise EngineError("need at least one vote per claim")
    need = checkers // 2 + 1
    resolved: dict[str, VoteKey] = {}
    for claim_id, keys in votes.items():
        if len(keys) != checkers:
            raise EngineError(
                f"claim {claim_id!r} has {len(keys)} votes, expected {checkers}")
        winner, count = Counter(keys).most_common(1)[0]
        if count >= need:
            resolved[claim_id] = winner
    return resolved


def audit_witness(result: VerificationResult, claim: Claim,
                  relations: Mapping) -> bool:
    """Recheck a resolution from its stored evidence alone.

    A correct verdict must carry a witness whose re-evaluated value lies
    within tolerance of the parameter (explicit) or does not come out
    false (general).  Incorrect verdicts pass vacuously.
    """
    if result.verdict != "correct":
        return True
    candidate = result.witness
    if candidate is None:
        return False
    try:
        expr = instantiate(candidate.template, candidate.binding.attributes)
        value = evaluate_bound(expr, candidate.binding, relations,
                               claim.tolerance)
    except (FormulaEvalError, FormulaParseError):
        return False
    if claim.kind == "explicit":
        return (claim.parameter is not None and isinstance(value, float)
                and relative_error(value, claim.parameter) < claim.tolerance)
    return value is not False


# ---------------------------------------------------------------------------
# session


@dataclass
class _ClaimState:
    claim: Claim
    plan: Optional[planner.ScreenPlan]
    screens: tuple[planner.Screen, ...]
    index: int = 0
    answered: dict[str, tuple[str, ...]] = field(default_factory=dict)
    final_candidates: Optional[tuple[QueryCandidate, ...]] = None


class Session:
    """Stateful verification run over one corpus.

    ``next_screen``/``submit`` expose the claim-by-claim protocol a UI or
    the HTTP layer drives; ``verify`` runs it to completion with
    programmatic checkers.  All scheduling, planning and model updates are
    deterministic, so replaying the same answer sequence reproduces every
    verdict and every charged second exactly.
    """

    def __init__(self, corpus: Corpus, mode: str = "optimized",
                 config: Optional[SessionConfig] = None):
        if mode not in MODES:
            raise EngineError(f"unknown mode {mode!r}", code="mode")
        self.corpus = corpus
        self.mode = mode
        self.config = config or SessionConfig()
        self.cost = self.config.cost
        self.claims: dict[str, Claim] = {c.id: c for c in corpus.claims}
        if len(self.claims) != len(corpus.claims):
            raise EngineError("duplicate claim ids")
        self.models = ModelSet(epochs=self.config.epochs,
                               learning_rate=self.config.learning_rate,
                               l2=self.config.l2,
                               incremental_epochs=self.config.incremental_epochs)
        self.checkers: tuple[Checker, ...] = ()
        self.on_batch_done: Optional[
            Callable[["Session", tuple[str, ...]], None]] = None

        # corpus claim order is document order
        self._order = {c.id: i for i, c in enumerate(corpus.claims)}
        self.unverified: list[str] = [c.id for c in corpus.claims]
        self.results: dict[str, VerificationResult] = {}
        self.unresolved: dict[str, str] = {}  # claim id -> reason
        self.events: list[dict] = []
        self.total_seconds = 0.0
        self.section_seconds = 0.0
        self.batch_index = 0
        self._batch: list[str] = []
        self._states: dict[str, _ClaimState] = {}
        self._resolved_in_batch: list[str] = []
        self._requeues: Counter = Counter()
        self._failures: Counter = Counter()
        self._claim_seconds: defaultdict = defaultdict(float)
        self._last_ack: Optional[tuple[str, tuple, dict]] = None
        self._library: dict[str, Template] = {}

        self.featurizer: Optional[FittedFeaturizer] = None
        self._X = None
        self._rows: dict[str, int] = {}
        self._dense: dict[str, np.ndarray] = {}
        if corpus.claims:
            pairs = [(c.sentence_text, c.claim_span) for c in corpus.claims]
            embedding = EmbeddingTable.hashed(self.config.embedding_dim)
            self.featurizer = fit_featurizer(pairs, embedding,
                                             word_cap=self.config.word_vocab,
                                             char_cap=self.config.char_vocab)
            self._X = self.featurizer.featurize_matrix(pairs)
            self._rows = {c.id: i for i, c in enumerate(corpus.claims)}

    # -- template universe ------------------------------------------------

    def register_template(self, template: Template) -> str:
        self._library[template.key] = template
        return template.key

    @property
    def known_templates(self) -> dict[str, Template]:
        return dict(self._library)

    # -- progress ---------------------------------------------------------

    @property
    def done(self) -> bool:
        return not self._batch and not self.unverified

    def progress(self) -> dict:
        return {
            "claims": len(self.claims),
            "resolved": len(self.results),
            "unresolved": len(self.unresolved),
            "pending": len(self.unverified) + len(self._batch),
            "batch": self.batch_index,
            "total_seconds": self.total_seconds,
        }

    @property
    def current_batch(self) -> tuple[str, ...]:
        """Claims still open in the running batch, in answer order."""
        return tuple(self._batch)

    def answered_so_far(self, claim_id: str) -> dict[str, tuple[str, ...]]:
        """Property values already confirmed for a claim in this batch."""
        state = self._states.get(claim_id)
        if state is None:
            return {}
        return {kind: tuple(values) for kind, values in state.answered.items()}

    def attach(self, checkers: Sequence[Checker]) -> None:
        if not checkers:
            raise EngineError("need at least one checker")
        if len(checkers) % 2 == 0:
            raise EngineError("checker count must be odd so majority is strict")
        ids = [c.id for c in checkers]
        if len(set(ids)) != len(ids):
            raise EngineError("checker ids must be unique")
        self.checkers = tuple(checkers)

    # -- accounting -------------------------------------------------------

    def _charge(self, claim_id: Optional[str], event: str, kind: str,
                seconds: float, **extra) -> None:
        self.total_seconds += seconds
        if claim_id is not None:
            self._claim_seconds[claim_id] += seconds
        self.events.append(dict({"event": event, "claim": claim_id,
                                 "kind": kind, "seconds": seconds,
                                 "batch": self.batch_index}, **extra))

    # -- featurization ----------------------------------------------------

    def _features(self, claim_id: str) -> np.ndarray:
        row = self._dense.get(claim_id)
        if row is None:
            row = self._X[self._rows[claim_id]].toarray().ravel()
            self._dense[claim_id] = row
        return row

    def feature_rows(self, claim_ids: Sequence[str]):
        """Feature matrix rows for the given claims, in the given order."""
        return self._X[[self._rows[c] for c in claim_ids]]

    # -- batch selection --------------------------------------------------

    def _ensure_batch(self) -> None:
        if self._batch or not self.unverified:
            return
        self.unverified.sort(key=self._order.__getitem__)
        self.batch_index += 1
        if self.mode == "manual":
            chosen = list(self.unverified)
        elif self.mode == "sequential":
            chosen = self.unverified[: self.config.batch_size]
        else:
            chosen = self._optimized_batch()
        for claim_id in chosen:
            self.unverified.remove(claim_id)
        touched = sorted({self.claims[c].section_id for c in chosen})
        for section_id in touched:
            seconds = self.config.section_read_seconds
            self.section_seconds += seconds
            self._charge(None, "section", "section", seconds,
                         section=section_id)
        for claim_id in chosen:
            if self.mode == "manual":
                self._states[claim_id] = _ClaimState(self.claims[claim_id],
                                                     None, ())
            else:
                self._states[claim_id] = self._plan_state(claim_id)
        self._batch = chosen

    def _optimized_batch(self) -> list[str]:
        ids = list(self.unverified)
        utilities, costs = self._batch_estimates(ids)
        sections = {i: self.claims[i].section_id for i in ids}
        size = min(self.config.batch_size, len(ids))
        instance = batcher.build_ilp(
            utilities, costs, sections, self.config.section_read_seconds,
            batcher.BatchConfig(min_claims=size, max_claims=size,
                                utility_weight=self.config.utility_weight))
        solution = batcher.solve_greedy(
            instance, utility_weight=self.config.utility_weight)
        chosen = list(solution.selected) or list(
            batcher.cheapest_fallback(instance))
        return sorted(chosen, key=self._order.__getitem__)

    def _batch_estimates(self, ids: Sequence[str]
                         ) -> tuple[dict[str, float], dict[str, float]]:
        """Per-claim training utility and expected verification seconds.

        The cost side mirrors what a screen will actually charge under
        option trimming: per trained kind, the best expected seconds over
        every option-prefix length, never worse than a bare typed prompt.
        Untrained kinds charge the prompt, and the final screen
        contributes its suggestion price as a shared pessimistic tail.
        """
        rows = [self._rows[i] for i in ids]
        X = self._X[rows]
        n = len(ids)
        utility = np.zeros(n)
        expected = np.full(n, float(self.cost.suggest_formula))
        nop = self.cost.max_options
        for kind in KINDS:
            model = self.models.models.get(kind)
            if model is None:
                expected += self.cost.suggest_property
                continue
            probs = model.proba_matrix(X)
            safe = np.where(probs > 0.0, probs, 1.0)
            utility += -(probs * np.log(safe)).sum(axis=1)
            k = min(nop, probs.shape[1])
            top = -np.sort(-probs, axis=1)[:, :k]
            positions = np.arange(1, k + 1)
            reads = np.cumsum(top * positions, axis=1) * self.cost.verify_property
            mass = np.clip(np.cumsum(top, axis=1), 0.0, 1.0)
            totals = reads + (1.0 - mass) * (
                positions * self.cost.verify_property + self.cost.suggest_property)
            expected += np.minimum(self.cost.suggest_property,
                                   totals.min(axis=1))
        return ({i: float(u) for i, u in zip(ids, utility)},
                {i: float(c) for i, c in zip(ids, expected)})

    # -- per-claim planning -----------------------------------------------

    def _trim_options(self, options: Sequence[planner.Option]
                      ) -> tuple[planner.Option, ...]:
        """Prefix of the ranked options minimizing expected screen seconds.

        Showing an option costs a read whether or not it is the truth, so
        a screen is only worth populating while the model mass it covers
        beats the price of scanning it.  An uncovered screen degrades to a
        bare typed prompt, which is exactly the cold-start behavior.
        """
        best_m, best_cost = 0, self.cost.suggest_property
        read_term = 0.0
        mass = 0.0
        for m, option in enumerate(options, start=1):
            p = min(1.0, max(0.0, option.probability))
            read_term += m * self.cost.verify_property * p
            mass = min(1.0, mass + p)
            total = read_term + (1.0 - mass) * (
                m * self.cost.verify_property + self.cost.suggest_property)
            if total < best_cost - 1e-9:
                best_m, best_cost = m, total
        return tuple(options[:best_m])

    def _plan_state(self, claim_id: str) -> _ClaimState:
        claim = self.claims[claim_id]
        feats = self._features(claim_id)
        dists = {k: self.models.distribution(k, feats) for k in KINDS}
        context = self._predicted_context(claim, dists)
        candidates = querygen.generate(context, self.corpus.relations,
                                       max_candidates=PLANNING_CANDIDATE_CAP)
        plan = planner.plan_claim(claim_id, dists, candidates, self.cost)
        screens = [planner.Screen(s.kind, self._trim_options(s.options))
                   for s in plan.screens]
        # kinds the plan skipped (untrained, or pruning-free) still need an
        # answer before the final context is trustworthy; a bare screen
        # asks for a typed value.  Appends respect the same worst-case
        # budget the plan's own screens were trimmed under.
        present = {s.kind for s in screens}
        worst = sum(len(s.options) * self.cost.verify_property
                    + self.cost.suggest_property for s in screens)
        for kind in KINDS:
            if kind in present or len(screens) >= plan.nsc:
                continue
            if worst + self.cost.suggest_property > self.cost.screen_budget:
                break
            screens.append(planner.Screen(kind, ()))
            worst += self.cost.suggest_property
        return _ClaimState(claim, plan, tuple(screens))

    def _predicted_context(self, claim: Claim,
                           dists: Mapping[str, PropertyDistribution]) -> Context:
        def top(kind: str, count: int) -> tuple[str, ...]:
            return tuple(label for label, _ in dists[kind].top(count))

        width = self.config.top_per_property
        formulas = tuple(self._library[key] for key, _
                         in dists["formula"].top(self.config.top_formulas)
                         if key in self._library)
        return Context(relations=top("relation", width),
                       key_values=top("key_value", width),
                       attributes=top("attribute", max(width, 2)),
                       formulas=formulas,
                       parameter=claim.parameter,
                       tolerance=claim.tolerance)

    def _final_candidates(self, state: _ClaimState
                          ) -> tuple[QueryCandidate, ...]:
        claim = state.claim
        formulas = tuple(self._library[key] for key
                         in state.answered.get("formula", ())
                         if key in self._library)
        context = Context(relations=state.answered.get("relation", ()),
                          key_values=state.answered.get("key_value", ()),
                          attributes=state.answered.get("attribute", ()),
                          formulas=formulas,
                          parameter=claim.parameter,
                          tolerance=claim.tolerance)
        candidates = querygen.generate(context, self.corpus.relations)
        nop = state.plan.nop if state.plan else self.cost.max_options
        shown = [c for c in candidates if c.error is None][:nop]
        return tuple(shown)

    # -- the screen protocol ----------------------------------------------

    def next_screen(self) -> Optional[ScreenView]:
        self._ensure_batch()
        if not self._batch:
            return None
        state = self._states[self._batch[0]]
        return self._view(state)

    def _view(self, state: _ClaimState) -> ScreenView:
        claim = state.claim
        common = dict(claim_id=claim.id, sentence_text=claim.sentence_text,
                      claim_span=claim.claim_span, section_id=claim.section_id)
        if self.mode == "manual":
            return ScreenView(screen_id=f"{claim.id}:manual", index=0,
                              kind="manual", multi=False, **common)
        if state.index < len(state.screens):
            screen = state.screens[state.index]
            return ScreenView(screen_id=f"{claim.id}:{state.index}",
                              index=state.index, kind=screen.kind,
                              multi=screen.kind == "attribute",
                              options=screen.options, **common)
        if state.final_candidates is None:
            state.final_candidates = self._final_candidates(state)
        return ScreenView(screen_id=f"{claim.id}:final",
                          index=len(state.screens), kind="final", multi=False,
                          options=state.final_candidates, **common)

    def submit(self, answer: Answer) -> dict:
        view = self.next_screen()
        if self._last_ack is not None and answer.screen_id == self._last_ack[0]:
            if answer.payload_key() == self._last_ack[1]:
                return self._last_ack[2]
            if view is None or answer.screen_id != view.screen_id:
                raise EngineError(
                    f"screen {answer.screen_id!r} was already answered "
                    "differently", code="out_of_order")
        if view is None:
            raise EngineError("session is complete", code="done")
        if answer.screen_id != view.screen_id:
            raise EngineError(
                f"expected an answer for screen {view.screen_id!r},"
                f" got {answer.screen_id!r}", code="out_of_order")
        state = self._states[view.claim_id]
        if view.kind == "manual":
            ack = self._apply_manual(state, answer, view)
        elif view.kind == "final":
            ack = self._apply_final(state, answer, view)
        else:
            ack = self._apply_property(state, answer, view)
        self._last_ack = (answer.screen_id, answer.payload_key(), ack)
        if not self._batch:
            self._finish_batch()
        return ack

    def _ack(self, view_id: str, seconds: float, resolved: bool,
             verdict: Optional[str]) -> dict:
        return {
            "screen_id": view_id,
            "seconds": seconds,
            "claim_resolved": resolved,
            "verdict": verdict,
            "session_done": self.done,
            "batch": self.batch_index,
        }

    def _apply_property(self, state: _ClaimState, answer: Answer,
                        view: ScreenView) -> dict:
        screen = state.screens[state.index]
        picks = sorted(set(answer.selected))
        for i in picks:
            if not 0 <= i < len(screen.options):
                raise EngineError(f"option index {i} out of range")
        if not view.multi and len(picks) > 1:
            raise EngineError(f"the {screen.kind} screen takes one selection")
        values = [screen.options[i].value for i in picks]
        if answer.suggestion is not None:
            for value in self._typed_values(screen.kind, answer.suggestion):
                if value not in values:
                    values.append(value)
        if not values:
            raise EngineError("a selection or a suggestion is required")
        # reading stops at the deepest chosen option; typing an answer
        # means every option was read first
        if answer.suggestion is not None:
            seconds = (len(screen.options) * self.cost.verify_property
                       + self.cost.suggest_property)
        else:
            seconds = (max(picks) + 1) * self.cost.verify_property
        state.answered[screen.kind] = tuple(values)
        state.index += 1
        self._charge(state.claim.id, "screen", screen.kind, seconds,
                     checker=answer.checker)
        return self._ack(view.screen_id, seconds, False, None)

    def _typed_values(self, kind: str, text: str) -> tuple[str, ...]:
        if kind == "formula":
            try:
                template = abstract(parse(text))
            except FormulaParseError as err:
                raise EngineError(str(err), code="parse", position=err.position)
            return (self.register_template(template),)
        if kind == "attribute":
            labels = tuple(part.strip() for part in text.split(",")
                           if part.strip())
        else:
            labels = (text.strip(),) if text.strip() else ()
        if not labels:
            raise EngineError(f"empty {kind} suggestion")
        return labels

    def _apply_final(self, state: _ClaimState, answer: Answer,
                     view: ScreenView) -> dict:
        claim = state.claim
        candidates = state.final_candidates or ()
        outcome = validate(claim, state.answered, candidates, answer,
                           self.corpus.relations, self.cost)
        if outcome.witness is not None:
            self.register_template(outcome.witness.template)
        if outcome.correction is not None:
            self.register_template(outcome.correction.template)
        self._charge(claim.id, "final", "final", outcome.seconds,
                     checker=answer.checker)
        votes = self._collect_votes(claim, outcome, answer)
        winners = unanimous({claim.id: [key for _, key in votes]}, len(votes))
        self._batch.pop(0)
        del self._states[claim.id]
        if claim.id in winners:
            self._resolve(state, outcome, votes)
            return self._ack(view.screen_id, outcome.seconds, True,
                             outcome.verdict)
        self._requeue(claim.id, "split vote")
        return self._ack(view.screen_id, outcome.seconds, False, None)

    def _apply_manual(self, state: _ClaimState, answer: Answer,
                      view: ScreenView) -> dict:
        if answer.verdict not in ("correct", "incorrect"):
            raise EngineError("a manual check needs a verdict")
        seconds = self.cost.suggest_formula
        self._charge(state.claim.id, "manual", "manual", seconds,
                     checker=answer.checker)
        outcome = ValidationOutcome(state.claim.id, answer.verdict, None,
                                    None, seconds, {})
        self._batch.pop(0)
        del self._states[state.claim.id]
        self._resolve(state, outcome, [(answer.checker, answer.verdict)])
        return self._ack(view.screen_id, seconds, True, answer.verdict)

    # -- votes, resolution, requeue ---------------------------------------

    def _vote_key(self, outcome: ValidationOutcome) -> VoteKey:
        if outcome.verdict == "correct":
            return ("correct", outcome.witness.sql if outcome.witness else "")
        return ("incorrect",
                outcome.correction.sql if outcome.correction else "")

    def _collect_votes(self, claim: Claim, outcome: ValidationOutcome,
                       answer: Answer) -> list[tuple[str, VoteKey]]:
        base = self._vote_key(outcome)
        if not self.checkers:
            return [(answer.checker, base)]
        votes: list[tuple[str, VoteKey]] = []
        for checker in self.checkers:
            opinion = checker.vote(claim, outcome)
            if opinion == outcome.verdict:
                votes.append((checker.id, base))
            else:
                # a dissenting vote carries no shared evidence, so two
                # dissenters can never assemble a majority of their own
                votes.append((checker.id, ("dissent", checker.id)))
        return votes

    def _resolve(self, state: _ClaimState, outcome: ValidationOutcome,
                 votes: Sequence[tuple[str, VoteKey]]) -> None:
        claim_id = state.claim.id
        opinions = tuple(
            (checker, "dissent" if key[0] == "dissent" else outcome.verdict)
            for checker, key in votes)
        self.results[claim_id] = VerificationResult(
            claim_id=claim_id, verdict=outcome.verdict,
            witness=outcome.witness, correction=outcome.correction,
            context=dict(outcome.context), votes=opinions,
            seconds=self._claim_seconds[claim_id],
            requeues=self._requeues[claim_id], batch_index=self.batch_index)
        self._resolved_in_batch.append(claim_id)
        self.events.append({"event": "resolve", "claim": claim_id,
                            "kind": outcome.verdict, "seconds": 0.0,
                            "batch": self.batch_index})

    def _requeue(self, claim_id: str, reason: str) -> None:
        self._requeues[claim_id] += 1
        if self._requeues[claim_id] > self.config.max_requeues:
            self.unresolved[claim_id] = reason
            self.events.append({"event": "unresolved", "claim": claim_id,
                                "kind": reason, "seconds": 0.0,
                                "batch": self.batch_index})
            return
        self.unverified.append(claim_id)
        self.events.append({"event": "requeue", "claim": claim_id,
                            "kind": reason, "seconds": 0.0,
                            "batch": self.batch_index})

    def report_failure(self, claim_id: str) -> None:
        """A checker interface failure on the current claim: retry once in
        a later batch, then give the claim up as unresolved."""
        if not self._batch or self._batch[0] != claim_id:
            raise EngineError(f"claim {claim_id!r} is not being verified",
                              code="out_of_order")
        self._batch.pop(0)
        del self._states[claim_id]
        self._failures[claim_id] += 1
        if self._failures[claim_id] > 1:
            self.unresolved[claim_id] = "checker failure"
            self.events.append({"event": "unresolved", "claim": claim_id,
                                "kind": "checker failure", "seconds": 0.0,
                                "batch": self.batch_index})
        else:
            self.unverified.append(claim_id)
            self.events.append({"event": "requeue", "claim": claim_id,
                                "kind": "checker failure", "seconds": 0.0,
                                "batch": self.batch_index})
        if not self._batch:
            self._finish_batch()

    # -- learning ----------------------------------------------------------

    def _finish_batch(self) -> None:
        resolved = tuple(self._resolved_in_batch)
        self._resolved_in_batch = []
        trained = []
        for kind in KINDS:
            rows: list[int] = []
            labels: list[str] = []
            for claim_id in resolved:
                for label in self.results[claim_id].context.get(kind, ()):
                    rows.append(self._rows[claim_id])
                    labels.append(label)
            if labels:
                self.models.add_examples(kind, self._X[rows], labels)
                trained.append(kind)
        if trained:
            self.models.refit(trained)
            self.events.append({"event": "retrain", "claim": None,
                                "kind": ",".join(trained), "seconds": 0.0,
                                "batch": self.batch_index,
                                "fingerprint": self.models.fingerprint})
        if self.on_batch_done is not None:
            self.on_batch_done(self, resolved)

    # -- summary -----------------------------------------------------------

    def report(self) -> dict:
        return {
            "mode": self.mode,
            "claims": len(self.claims),
            "resolved": len(self.results),
            "unresolved": sorted(self.unresolved),
            "batches": self.batch_index,
            "total_seconds": self.total_seconds,
            "section_seconds": self.section_seconds,
            "model_fingerprint": self.models.fingerprint,
            "results": {claim_id: result.to_record()
                        for claim_id, result in sorted(self.results.items())},
        }


def verify(session: Session, checkers: Sequence[Checker] = ()
           ) -> dict[str, VerificationResult]:
    """Drive a session to completion with programmatic checkers.

    One checker per claim answers the screens, rotating in claim order;
    every attached checker votes on each final outcome inside ``submit``.
    A checker that raises while answering triggers the failure path
    instead of aborting the run.
    """
    if checkers:
        session.attach(checkers)
    if not session.checkers:
        raise EngineError("verify needs at least one attached checker")
    assigned: dict[str, Checker] = {}
    pool = session.checkers
    while (view := session.next_screen()) is not None:
        primary = assigned.setdefault(view.claim_id,
                                      pool[len(assigned) % len(pool)])
        try:
            answer = primary.answer(view)
        except Exception:
            session.report_failure(view.claim_id)
            assigned.pop(view.claim_id, None)
            continue
        session.submit(answer)
    return session.results

"""Simulated checking runs measured end to end.

A simulated checker plays back the recorded annotations: it reads every
screen top-down, takes the first option consistent with the ground truth
and types the truth when no option fits.  Final votes can be flipped at a
configurable error rate to exercise the majority machinery; at rate zero
no wrong claim is ever confirmed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .classifiers import KINDS, ModelSet
from .config import SessionConfig, seconds_to_weeks
from .corpus import Annotation, Claim, Corpus
from .engine import Answer, QueryCandidate, ScreenView, Session, verify
from .formula import abstract, parse

TOPK_LEVELS = (1, 5, 10, 15)


def truth_table(corpus: Corpus) -> dict[str, dict[str, tuple[str, ...]]]:
    """Acceptable property labels per claim, straight from the annotations."""
    table: dict[str, dict[str, tuple[str, ...]]] = {}
    for claim_id, annotation in corpus.annotations.items():
        table[claim_id] = {
            "relation": tuple(dict.fromkeys(annotation.relations)),
            "key_value": tuple(dict.fromkeys(annotation.key_values)),
            "attribute": tuple(dict.fromkeys(annotation.attributes)),
            "formula": (abstract(parse(annotation.check_expression)).key,),
        }
    return table


def manual_cost(corpus: Corpus, config: Optional[SessionConfig] = None) -> float:
    """Checking without assistance: one full suggestion per claim plus one
    read of every claim-bearing section."""
    config = config or SessionConfig()
    sections = {c.section_id for c in corpus.claims}
    return (len(corpus.claims) * config.cost.suggest_formula
            + len(sections) * config.section_read_seconds)


class SimChecker:
    """A checker that answers from the recorded annotations.

    ``error_rate`` is the chance of casting a flipped vote on a final
    outcome; answers themselves stay truthful, so errors can only delay
    resolution, never corrupt it.
    """

    def __init__(self, checker_id: str, corpus: Corpus, *,
                 error_rate: float = 0.0, seed: int = 0,
                 truths: Optional[Mapping[str, dict]] = None):
        if not 0.0 <= error_rate < 1.0:
            raise ValueError("error rate must lie in [0, 1)")
        self.id = checker_id
        self.corpus = corpus
        self.error_rate = error_rate
        self.rng = random.Random(f"{checker_id}:{seed}")
        self.truths = dict(truths) if truths is not None else truth_table(corpus)
        self._claims = {c.id: c for c in corpus.claims}

    def _matches(self, candidate: QueryCandidate,
                 annotation: Annotation, formula_key: str) -> bool:
        if candidate.template.key != formula_key:
            return False
        attrs = tuple(candidate.binding.attributes.get(v)
                      for v in candidate.template.attr_vars)
        if attrs != tuple(annotation.attributes[:len(attrs)]):
            return False
        for alias, relation, key in zip(candidate.template.aliases,
                                        annotation.relations,
                                        annotation.key_values):
            target = candidate.binding.aliases.get(alias)
            if target is None or target.relation != relation:
                return False
            if key not in target.key_values():
                return False
        return True

    def answer(self, view: ScreenView) -> Answer:
        annotation = self.corpus.annotations[view.claim_id]
        if view.kind == "manual":
            return Answer(view.screen_id, checker=self.id,
                          verdict=annotation.verdict)
        truths = self.truths[view.claim_id]
        if view.kind == "final":
            claim = self._claims[view.claim_id]
            verdict = annotation.verdict if claim.kind == "general" else None
            for i, candidate in enumerate(view.options):
                if self._matches(candidate, annotation,
                                 truths["formula"][0]):
                    return Answer(view.screen_id, checker=self.id,
                                  selected=(i,), verdict=verdict)
            return Answer(view.screen_id, checker=self.id,
                          suggestion=annotation.check_expression,
                          verdict=verdict)
        acceptable = truths[view.kind]
        if view.multi:
            picks = tuple(i for i, option in enumerate(view.options)
                          if option.value in acceptable)
            found = {view.options[i].value for i in picks}
            missing = [value for value in acceptable if value not in found]
            suggestion = ",".join(missing) if missing else None
            return Answer(view.screen_id, checker=self.id, selected=picks,
                          suggestion=suggestion)
        pick = next((i for i, option in enumerate(view.options)
                     if option.value in acceptable), None)
        if pick is not None:
            return Answer(view.screen_id, checker=self.id, selected=(pick,))
        if view.kind == "formula":
            suggestion = annotation.check_expression
        else:
            suggestion = acceptable[0]
        return Answer(view.screen_id, checker=self.id, suggestion=suggestion)

    def vote(self, claim: Claim, outcome) -> str:
        truth = self.corpus.annotations[claim.id].verdict
        if self.error_rate and self.rng.random() < self.error_rate:
            return "correct" if truth == "incorrect" else "incorrect"
        return truth


# ---------------------------------------------------------------------------
# model quality measurement


def accuracy_snapshot(models: ModelSet, X, truths: Sequence[Mapping],
                         k: int = 1) -> dict[str, float]:
    """Fraction of rows whose acceptable labels intersect the top-k.

    Kinds without a trained model score zero; an empty row set scores one,
    there is nothing left to mispredict.
    """
    out: dict[str, float] = {}
    rows = 0 if X is None else X.shape[0]
    for kind in KINDS:
        model = models.models.get(kind)
        if rows == 0:
            out[kind] = 1.0
            continue
        if model is None:
            out[kind] = 0.0
            continue
        probs = model.proba_matrix(X)
        width = min(k, probs.shape[1])
        top = np.argsort(-probs, axis=1)[:, :width]
        hits = 0
        for i, truth in enumerate(truths):
            accepted = set(truth[kind])
            if any(model.labels[j] in accepted for j in top[i]):
                hits += 1
        out[kind] = hits / rows
    out["average"] = sum(out[kind] for kind in KINDS) / len(KINDS)
    return out


def topk_curve(models: ModelSet, X, truths: Sequence[Mapping],
               ks: Sequence[int] = TOPK_LEVELS) -> dict[str, dict[int, float]]:
    """Top-k accuracy per kind and averaged, for each cutoff in ``ks``."""
    curves: dict[str, dict[int, float]] = {name: {} for name in
                                           (*KINDS, "average")}
    for k in ks:
        snapshot = accuracy_snapshot(models, X, truths, k)
        for name in curves:
            curves[name][k] = snapshot[name]
    return curves


# ---------------------------------------------------------------------------
# whole runs


@dataclass(frozen=True)
class SimReport:
    """Everything one simulated run produced.

    ``accuracy`` holds one top-1 value per batch per kind, measured on the
    claims still unverified after that batch's retrain, plus an "average"
    series; every series has exactly one entry per batch.  ``total_weeks``
    converts charged seconds at three checkers working eight-hour days,
    five days a week.
    """

    mode: str
    seed: int
    error_rate: float
    claims: int
    resolved: int
    unresolved: tuple[str, ...]
    batches: int
    total_seconds: float
    section_seconds: float
    total_weeks: float
    manual_seconds: float
    manual_weeks: float
    savings: float
    verdict_agreement: float
    accuracy: dict[str, tuple[float, ...]]
    topk: dict[str, dict[int, float]]
    results: dict[str, dict]
    events: tuple[dict, ...]
    computation_seconds: float

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "error_rate": self.error_rate,
            "claims": self.claims,
            "resolved": self.resolved,
            "unresolved": list(self.unresolved),
            "batches": self.batches,
            "total_seconds": self.total_seconds,
            "section_seconds": self.section_seconds,
            "total_weeks": self.total_weeks,
            "manual_seconds": self.manual_seconds,
            "manual_weeks": self.manual_weeks,
            "savings": self.savings,
            "verdict_agreement": self.verdict_agreement,
            "accuracy": {k: list(v) for k, v in self.accuracy.items()},
            "topk": {kind: {str(k): v for k, v in curve.items()}
                     for kind, curve in self.topk.items()},
            "results": self.results,
            "events": list(self.events),
            "computation_seconds": self.computation_seconds,
        }

    def summary(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"claims: {self.claims} resolved: {self.resolved}"
            f" unresolved: {len(self.unresolved)}",
            f"batches: {self.batches}",
            f"checker time: {self.total_seconds:.0f}s"
            f" ({self.total_weeks:.2f} weeks)",
            f"manual baseline: {self.manual_seconds:.0f}s"
            f" ({self.manual_weeks:.2f} weeks)",
            f"savings: {self.savings:.1%}",
            f"verdict agreement: {self.verdict_agreement:.1%}",
            f"computation: {self.computation_seconds:.1f}s",
        ]
        return "\n".join(lines)


def run_simulation(corpus: Corpus, mode: str = "optimized",
                   config: Optional[SessionConfig] = None, *,
                   seed: int = 0, error_rate: float = 0.0) -> SimReport:
    """Play a whole session with simulated checkers and measure it."""
    config = config or SessionConfig()
    started = time.perf_counter()
    session = Session(corpus, mode, config)
    truths = truth_table(corpus)
    checkers = [SimChecker(f"checker-{i + 1}", corpus, error_rate=error_rate,
                           seed=seed, truths=truths)
                for i in range(config.checkers)]

    series: dict[str, list[float]] = {name: [] for name in (*KINDS, "average")}

    def snapshot(live: Session, _resolved: tuple[str, ...]) -> None:
        remainder = list(live.unverified)
        X = live.feature_rows(remainder) if remainder else None
        values = accuracy_snapshot(live.models, X,
                                      [truths[c] for c in remainder])
        for name in series:
            series[name].append(values[name])

    session.on_batch_done = snapshot
    results = verify(session, checkers)

    agreement = 1.0
    if results:
        agreement = sum(
            1 for claim_id, result in results.items()
            if result.verdict == corpus.annotations[claim_id].verdict
        ) / len(results)
    manual_seconds = manual_cost(corpus, config)
    savings = 0.0
    if manual_seconds > 0:
        savings = 1.0 - session.total_seconds / manual_seconds
    if corpus.claims:
        X_all = session.feature_rows([c.id for c in corpus.claims])
        topk = topk_curve(session.models, X_all,
                          [truths[c.id] for c in corpus.claims])
    else:
        topk = topk_curve(session.models, None, [])
    return SimReport(
        mode=mode, seed=seed, error_rate=error_rate,
        claims=len(corpus.claims), resolved=len(results),
        unresolved=tuple(sorted(session.unresolved)),
        batches=session.batch_index,
        total_seconds=session.total_seconds,
        section_seconds=session.section_seconds,
        total_weeks=seconds_to_weeks(session.total_seconds),
        manual_seconds=manual_seconds,
        manual_weeks=seconds_to_weeks(manual_seconds),
        savings=savings,
        verdict_agreement=agreement,
        accuracy={name: tuple(values) for name, values in series.items()},
        topk=topk,
        results={claim_id: result.to_record()
                 for claim_id, result in sorted(results.items())},
        events=tuple(session.events),
        computation_seconds=time.perf_counter() - started,
    )

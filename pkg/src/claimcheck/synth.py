"""Synthetic corpus generation shaped by a frequency profile.

Builds tables, a sectioned document, claims with spans, and ground-truth
annotations whose expressions evaluate against the generated tables.  Claim
verdicts are decided up front: a configurable fraction of claims is made
deliberately wrong, either by perturbing the stated number well outside the
tolerance (explicit claims) or by assigning a comparison that cannot hold on
the generated value range (general claims).  Everything downstream of the
seed is deterministic.
"""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .corpus import (
    Annotation,
    Claim,
    Corpus,
    CorpusError,
    CorpusProfile,
    Document,
    Relation,
    Section,
)
from .formula import (
    AliasTarget,
    Binding,
    Template,
    abstract,
    aliases_in_order,
    evaluate_bound,
    instantiate,
    parse,
    relative_error,
    render,
)

# Cell values are drawn from this closed interval.  The comparison formula
# families below rely on the derived bounds (ratio in [0.5, 2], pairwise sum
# in [200, 400], max and min in [100, 200]) to pin each template's truth
# value regardless of which cells a claim lands on.
CELL_LOW = 100.0
CELL_HIGH = 200.0

FIRST_YEAR = 2000

# Value-producing expression skeletons for explicit claims.  {y1}/{y2} are
# attribute-label slots, {k} a small integer making variants distinct.
_NUMERIC_PATTERNS: tuple[str, ...] = (
    "a.{y1} / b.{y2}",
    "POWER(a.{y1} / b.{y2}, 1 / ({y1} - {y2})) - 1",
    "(a.{y1} - b.{y2}) / b.{y2}",
    "AVG(a.{y1}, b.{y2})",
    "MAX(a.{y1}, b.{y2}) - MIN(a.{y1}, b.{y2})",
    "a.{y1} - b.{y2}",
    "SUM(a.{y1}, b.{y2})",
    "a.{y1} / b.{y2} * {k}",
    "(a.{y1} + b.{y2}) / {k}",
    "AVG(a.{y1}, b.{y2}) * {k}",
    "a.{y1} - b.{y2} + {k}",
    "ABS(a.{y1} - b.{y2}) + {k}",
)

# (pattern, first threshold, step).  Stepping moves the threshold further
# from the attainable range, so every family yields unlimited variants with
# the same truth value.
_TRUE_COMPARE_FAMILIES: tuple[tuple[str, float, float], ...] = (
    ("a.{y1} / b.{y2} > {t}", 0.45, -0.02),
    ("a.{y1} + b.{y2} > {t}", 195.0, -5.0),
    ("MAX(a.{y1}, b.{y2}) > {t}", 97.0, -3.0),
    ("a.{y1} / b.{y2} < {t}", 2.2, 0.2),
    ("MIN(a.{y1}, b.{y2}) < {t}", 204.0, 6.0),
)

_FALSE_COMPARE_FAMILIES: tuple[tuple[str, float, float], ...] = (
    ("a.{y1} / b.{y2} > {t}", 2.2, 0.2),
    ("a.{y1} + b.{y2} < {t}", 195.0, -5.0),
    ("MAX(a.{y1}, b.{y2}) < {t}", 97.0, -3.0),
)

_LEADS: tuple[str, ...] = (
    "In the reference scenario, ",
    "Over the outlook period, ",
    "According to the projections, ",
    "Under stated policies, ",
)

_EXPLICIT_VERBS: tuple[str, ...] = (
    "shifted", "moved", "changed", "came in",
)

_GENERAL_VERBS: tuple[str, ...] = (
    "rose notably", "developed strongly", "trended upward", "kept pace",
)


def _interpolate_curve(points: dict[int, float], n: int) -> list[float]:
    """Frequency at quantile (i + 0.5)/n for each of n slots, low to high.

    Piecewise-linear through the profile's (percentile, frequency) pairs,
    clamped at both ends.
    """
    pts = sorted((float(p), float(f)) for p, f in points.items())
    out: list[float] = []
    for i in range(n):
        q = (i + 0.5) * 100.0 / n
        out.append(_interpolate_at(pts, q))
    return out


def _interpolate_at(pts: Sequence[tuple[float, float]], q: float) -> float:
    if q <= pts[0][0]:
        return pts[0][1]
    if q >= pts[-1][0]:
        return pts[-1][1]
    for (q0, f0), (q1, f1) in zip(pts, pts[1:]):
        if q0 <= q <= q1:
            if q1 == q0:
                return f1
            frac = (q - q0) / (q1 - q0)
            return f0 + frac * (f1 - f0)
    return pts[-1][1]


def _allocate(weights: Sequence[float], total: int) -> list[int]:
    """Integer counts summing to total, proportional to weights.

    Largest-remainder rounding; ties go to the later (higher-weight) slot so
    the result is deterministic.
    """
    if total <= 0:
        return [0] * len(weights)
    mass = float(sum(weights))
    if mass <= 0.0:
        weights = [1.0] * len(weights)
        mass = float(len(weights))
    ideal = [w * total / mass for w in weights]
    counts = [int(x) for x in ideal]
    short = total - sum(counts)
    order = sorted(range(len(ideal)), key=lambda i: (counts[i] - ideal[i], -i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _usage_queue(rng: random.Random, names: Sequence[str],
                 curve: Sequence[float], total: int) -> list[str]:
    queue: list[str] = []
    for name, count in zip(names, _allocate(curve, total)):
        queue.extend([name] * count)
    rng.shuffle(queue)
    return queue


def _compile(source: str) -> Template:
    return abstract(parse(source))


def _numeric_pool(count: int) -> list[Template]:
    """First `count` distinct value-formula templates, fixed order."""
    pool: list[Template] = []
    seen: set[str] = set()
    k = 2
    while len(pool) < count:
        for pattern in _NUMERIC_PATTERNS:
            if len(pool) >= count:
                break
            source = pattern.format(y1="2001", y2="2000", k=k)
            template = _compile(source)
            if template.key in seen:
                continue
            seen.add(template.key)
            pool.append(template)
        k += 1
    return pool


def _compare_pool(count: int,
                  families: Sequence[tuple[str, float, float]]) -> list[Template]:
    pool: list[Template] = []
    seen: set[str] = set()
    step_index = 0
    while len(pool) < count:
        for pattern, start, step in families:
            if len(pool) >= count:
                break
            threshold = round(start + step_index * step, 6)
            source = pattern.format(y1="2001", y2="2000", t=f"{threshold:g}")
            template = _compile(source)
            if template.key in seen:
                continue
            seen.add(template.key)
            pool.append(template)
        step_index += 1
    return pool


class _TemplateQueue:
    """Hands out templates following a target frequency allocation."""

    def __init__(self, rng: random.Random, pool: Sequence[Template],
                 curve: Sequence[float], total: int) -> None:
        self.rng = rng
        self.pool = list(pool)
        indices: list[int] = []
        for i, count in enumerate(_allocate(curve, total)):
            indices.extend([i] * count)
        rng.shuffle(indices)
        self.indices = indices
        self.cursor = 0

    def take(self) -> tuple[int, Template]:
        if self.cursor < len(self.indices):
            i = self.indices[self.cursor]
            self.cursor += 1
        else:
            i = self.rng.randrange(len(self.pool))
        return i, self.pool[i]


def _distinct_pair(queue: list[str], cursor: int, names: Sequence[str]) -> tuple[str, str, int]:
    """Pop two distinct labels, scanning ahead when the next two collide."""
    first = queue[cursor]
    cursor += 1
    j = cursor
    while j < len(queue) and queue[j] == first:
        j += 1
    if j < len(queue):
        queue[cursor], queue[j] = queue[j], queue[cursor]
        second = queue[cursor]
        cursor += 1
    else:
        second = names[0] if names[0] != first else names[1]
        cursor = min(cursor + 1, len(queue))
    return first, second, cursor


def _format_parameter(value: float) -> float:
    return float(f"{value:.6g}")


def generate_synthetic_corpus(profile: CorpusProfile, seed: int) -> Corpus:
    """Build a corpus matching the profile's counts and frequency shape.

    Every claim gets an annotation with a concrete check expression over the
    generated tables.  Claims marked correct evaluate within tolerance of
    their stated number (or their comparison holds); claims marked incorrect
    deviate by construction.  Two calls with equal profile and seed produce
    equal corpora.
    """
    profile.validate()
    if profile.n_formulas > profile.n_claims:
        raise CorpusError(
            f"profile wants {profile.n_formulas} formulas for "
            f"{profile.n_claims} claims; every formula must be usable")
    if profile.n_attributes < 2:
        raise CorpusError("need at least 2 attributes; formulas span two columns")

    rng = random.Random(seed)
    n = profile.n_claims
    tolerance = profile.tolerance

    rel_names = [f"R{i:04d}" for i in range(profile.n_relations)]
    key_names = [f"K{i:04d}" for i in range(profile.n_keys)]
    attr_names = [str(FIRST_YEAR + i) for i in range(profile.n_attributes)]

    pct = profile.frequency_percentiles
    rel_queue = _usage_queue(rng, rel_names, _interpolate_curve(pct["relation"], len(rel_names)), n)
    key_queue = _usage_queue(rng, key_names, _interpolate_curve(pct["key_value"], len(key_names)), n)
    attr_queue = _usage_queue(rng, attr_names, _interpolate_curve(pct["attribute"], len(attr_names)), 2 * n)

    # Claim kinds and verdicts first; the formula pool is partitioned by the
    # demand they create (value formulas for explicit claims, fixed-truth
    # comparisons for general ones).
    explicit_count = int(round(profile.explicit_fraction * n))
    kinds = ["explicit"] * explicit_count + ["general"] * (n - explicit_count)
    rng.shuffle(kinds)
    wrong_count = int(profile.error_rate * n)
    wrong = [True] * wrong_count + [False] * (n - wrong_count)
    rng.shuffle(wrong)

    def demand() -> tuple[int, int, int]:
        gt = sum(1 for k, w in zip(kinds, wrong) if k == "general" and not w)
        gf = sum(1 for k, w in zip(kinds, wrong) if k == "general" and w)
        return n - gt - gf, gt, gf

    # Each claim flavor needs at least one template of its own type.  When
    # the formula budget cannot cover all demanded types, fold general
    # claims into explicit ones (wrong ones first) rather than fail.
    n_explicit, n_general_true, n_general_false = demand()
    flavors = (n_explicit > 0) + (n_general_true > 0) + (n_general_false > 0)
    if profile.n_formulas < flavors and n_general_false:
        kinds = [("explicit" if k == "general" and w else k) for k, w in zip(kinds, wrong)]
        n_explicit, n_general_true, n_general_false = demand()
        flavors = (n_explicit > 0) + (n_general_true > 0) + (n_general_false > 0)
    if profile.n_formulas < flavors:
        kinds = ["explicit"] * n
        n_explicit, n_general_true, n_general_false = demand()

    # Formula slots get target frequencies from the full curve, then are
    # partitioned across the three template flavors so that each flavor's
    # slot mass roughly matches the usages its claims will draw.  A
    # contiguous split would hand one flavor only the rare slots and skew
    # the merged frequency distribution.
    formula_curve = _interpolate_curve(pct["formula"], profile.n_formulas)
    freq_full = _allocate(formula_curve, n)
    flavor_names = ("numeric", "true", "false")
    demands = {
        "numeric": float(n_explicit),
        "true": float(n_general_true),
        "false": float(n_general_false),
    }
    slot_sets: dict[str, list[int]] = {f: [] for f in flavor_names}
    remaining = dict(demands)
    for i in range(profile.n_formulas - 1, -1, -1):  # heaviest slots first
        flavor = max(flavor_names, key=lambda f: remaining[f])
        if remaining[flavor] <= 0.0:
            flavor = max(flavor_names, key=lambda f: demands[f])
        slot_sets[flavor].append(i)
        remaining[flavor] -= freq_full[i]
    for flavor in flavor_names:
        while demands[flavor] > 0 and not slot_sets[flavor]:
            donor = max(flavor_names, key=lambda f: len(slot_sets[f]))
            slot_sets[flavor].append(slot_sets[donor].pop())
    for slots in slot_sets.values():
        slots.sort()

    pools = {
        "numeric": _numeric_pool(len(slot_sets["numeric"])),
        "true": _compare_pool(len(slot_sets["true"]), _TRUE_COMPARE_FAMILIES),
        "false": _compare_pool(len(slot_sets["false"]), _FALSE_COMPARE_FAMILIES),
    }
    queues: dict[str, Optional[_TemplateQueue]] = {}
    for flavor, usage_total in (("numeric", n_explicit), ("true", n_general_true),
                                ("false", n_general_false)):
        slice_curve = [formula_curve[i] for i in slot_sets[flavor]]
        queues[flavor] = (
            _TemplateQueue(rng, pools[flavor], slice_curve, usage_total)
            if pools[flavor] else None
        )

    # Rows a claim touches; relations are materialized after contexts are
    # fixed so each table holds exactly the keys it needs plus padding.
    contexts: list[tuple[str, str, str, str]] = []
    attr_cursor = 0
    for i in range(n):
        rel = rel_queue[i]
        key = key_queue[i]
        y1, y2, attr_cursor = _distinct_pair(attr_queue, attr_cursor, attr_names)
        contexts.append((rel, key, y1, y2))

    used_rows: dict[str, list[str]] = {name: [] for name in rel_names}
    for rel, key, _, _ in contexts:
        if key not in used_rows[rel]:
            used_rows[rel].append(key)
    for i, name in enumerate(rel_names):
        if not used_rows[name]:
            used_rows[name].append(key_names[i % len(key_names)])
    seen_keys = {k for keys in used_rows.values() for k in keys}
    spare = [k for k in key_names if k not in seen_keys]
    for i, key in enumerate(spare):
        used_rows[rel_names[i % len(rel_names)]].append(key)

    relations: dict[str, Relation] = {}
    for name in rel_names:
        rows = {
            key: {a: round(rng.uniform(CELL_LOW, CELL_HIGH), 4) for a in attr_names}
            for key in used_rows[name]
        }
        relations[name] = Relation(name, "Key", tuple(attr_names), rows)

    id_width = max(4, len(str(n - 1)))
    section_ids = [f"s{j:03d}" for j in range(profile.n_sections)]
    section_sentences: dict[str, list[str]] = {sid: [] for sid in section_ids}

    claims: list[Claim] = []
    annotations: dict[str, Annotation] = {}
    for i in range(n):
        rel, key, y1, y2 = contexts[i]
        kind = kinds[i]
        is_wrong = wrong[i]
        if kind == "explicit":
            flavor = "numeric"
        else:
            flavor = "false" if is_wrong else "true"
        queue = queues[flavor]
        assert queue is not None  # slot partition above guarantees coverage
        index, template = queue.take()
        formula_slot = slot_sets[flavor][index]

        mapping = dict(zip(template.attr_vars, (y1, y2)))
        concrete = instantiate(template, mapping)
        alias_order = aliases_in_order(concrete)
        binding = Binding(
            aliases={alias: AliasTarget(rel, key) for alias in alias_order},
            attributes=mapping,
            key_attributes={alias: "Key" for alias in alias_order},
        )
        value = evaluate_bound(concrete, binding, relations)

        formula_token = f"F{formula_slot:04d}"
        token_part = f" (rule {formula_token})" if profile.separable else ""
        lead = rng.choice(_LEADS)
        if kind == "explicit":
            true_value = float(value)
            if is_wrong:
                if true_value == 0.0:
                    shown = 1.0
                else:
                    delta = tolerance * rng.uniform(2.5, 4.0) * rng.choice((-1.0, 1.0))
                    shown = _format_parameter(true_value * (1.0 + delta))
            else:
                drift = rng.uniform(-tolerance / 3.0, tolerance / 3.0)
                shown = _format_parameter(true_value * (1.0 + drift))
            verb = rng.choice(_EXPLICIT_VERBS)
            body = (f"{rel} for {key} {verb} from {y2} to {y1}, "
                    f"with the figure at {shown:g}{token_part}.")
            parameter: Optional[float] = shown
            comparison: Optional[str] = "="
        else:
            holds = bool(value)
            if holds == is_wrong:
                raise AssertionError("comparison template truth drifted")
            verb = rng.choice(_GENERAL_VERBS)
            body = f"{rel} for {key} {verb} between {y2} and {y1}{token_part}."
            parameter = None
            comparison = None

        sentence = lead + body
        span = (len(lead), len(sentence) - 1)
        claim_id = f"c{i:0{id_width}d}"
        section_id = section_ids[i * profile.n_sections // n]
        section_sentences[section_id].append(sentence)
        claims.append(Claim(
            id=claim_id,
            sentence_text=sentence,
            claim_span=span,
            section_id=section_id,
            kind=kind,
            parameter=parameter,
            comparison=comparison,
            tolerance=tolerance,
        ))
        annotations[claim_id] = Annotation(
            claim_id=claim_id,
            relations=[rel] * len(alias_order),
            key_values=[key] * len(alias_order),
            attributes=[y1, y2],
            check_expression=render(concrete),
            verdict="incorrect" if is_wrong else "correct",
        )

    document = Document(sections=[
        Section(id=sid, title=f"Part {j + 1}", sentences=section_sentences[sid])
        for j, sid in enumerate(section_ids)
    ])
    corpus = Corpus(relations, document, claims, annotations)
    corpus.validate()
    return corpus


def annotation_binding(annotation: Annotation) -> Binding:
    """Binding for an annotation's check expression.

    Aliases in first-use order pair with the annotation's relation and key
    lists positionally.
    """
    expr = parse(annotation.check_expression)
    order = aliases_in_order(expr)
    if len(order) > len(annotation.relations) or len(order) > len(annotation.key_values):
        raise CorpusError(
            f"annotation {annotation.claim_id}: {len(order)} aliases but "
            f"{len(annotation.relations)} relations listed")
    aliases = {
        alias: AliasTarget(annotation.relations[i], annotation.key_values[i])
        for i, alias in enumerate(order)
    }
    return Binding(aliases=aliases)


def verify_annotation(annotation: Annotation, claim: Claim,
                      relations: dict[str, Relation]) -> bool:
    """Does the recorded check vindicate the claim text?

    Explicit claims pass when the expression lands within the claim's
    relative tolerance of its stated number; general claims pass when their
    comparison holds.
    """
    expr = parse(annotation.check_expression)
    binding = annotation_binding(annotation)
    value = evaluate_bound(expr, binding, relations, claim.tolerance)
    if isinstance(value, bool):
        return value
    if claim.parameter is None:
        return True
    return relative_error(float(value), claim.parameter) < claim.tolerance

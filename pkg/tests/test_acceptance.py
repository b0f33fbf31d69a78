"""Release acceptance checks, one test per criterion.

Every test prints a single ``criterion NN: PASS`` line on success, so a
``pytest -s`` run over this file reads as a checklist.  Failure messages
carry the measured numbers.  Expensive end-to-end runs share module
fixtures; everything is seeded and deterministic apart from wall time.
"""
import itertools
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

import claimcheck
from claimcheck.batcher import BatchConfig, build_ilp, solve
from claimcheck.classifiers import SoftmaxClassifier
from claimcheck.config import CostModel, SessionConfig
from claimcheck.corpus import load_profile, save_corpus
from claimcheck.engine import Session, audit_witness, verify
from claimcheck.features import EmbeddingTable, fit_featurizer
from claimcheck.formula import FormulaEvalError, abstract, evaluate, parse, relative_error
from claimcheck.harness import SimChecker, run_simulation, truth_table
from claimcheck.planner import (
    PruningIndex,
    expected_cost,
    order_options,
    pruning_power,
    select_properties,
)
from claimcheck.querygen import Context, generate
from claimcheck.service import create_app
from claimcheck.synth import generate_synthetic_corpus

from exprgen import canonical_aliases, cells_for, label_map_for, random_expr

PROFILE_DIR = Path(claimcheck.__file__).parent / "profiles"

GROWTH = abstract(parse("POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1"))
REFERENCE_SQL = ("SELECT POWER(a.2017 / b.2016, 1 / (2017 - 2016)) - 1 "
                 "FROM GED a, GED b "
                 "WHERE a.Index = 'PGElecDemand' AND b.Index = 'PGElecDemand'")
# 22209 / 21562 - 1 from the fixture table
FIXTURE_GROWTH = 0.030006492904183224

S_F = 170.0


def _pass(n: int, message: str) -> None:
    print(f"criterion {n:02d}: PASS - {message}")


def _desk_config() -> SessionConfig:
    return SessionConfig(batch_size=100, epochs=100, incremental_epochs=10,
                         embedding_dim=32, word_vocab=4000, char_vocab=1200)


@pytest.fixture(scope="module")
def desk_corpus():
    profile = load_profile(PROFILE_DIR / "table1_div10.json")
    return generate_synthetic_corpus(profile, seed=7)


@pytest.fixture(scope="module")
def desk_run(desk_corpus):
    return run_simulation(desk_corpus, "optimized", _desk_config(), seed=7)


# ---------------------------------------------------------------------------
# 1. reference query reproduction


def test_criterion_01_reference_query_and_growth(ged_relations):
    started = time.perf_counter()
    context = Context(("GED",), ("PGElecDemand",), ("2016", "2017"),
                      (GROWTH,), 0.03, 0.05)
    candidates = generate(context, ged_relations)
    elapsed = time.perf_counter() - started

    normalized = {" ".join(c.sql.split()): c for c in candidates}
    assert " ".join(REFERENCE_SQL.split()) in normalized
    hit = normalized[" ".join(REFERENCE_SQL.split())]
    assert hit.value == pytest.approx(FIXTURE_GROWTH)
    assert relative_error(hit.value, 0.03) < 0.05
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    _pass(1, f"reference query emitted, growth {hit.value:.6f} "
             f"within 5% of 0.03 in {elapsed * 1000:.0f}ms")


# ---------------------------------------------------------------------------
# 2. expected-cost closed form and option order


def _expected_cost_oracle(probs, v):
    total = sum(p * (i + 1) for i, p in enumerate(probs))
    total += (1.0 - sum(probs)) * len(probs)
    return v * total


def test_criterion_02_expected_cost_oracle_and_order():
    rng = random.Random(20260823)
    worst = 0.0
    for _ in range(500):
        n = rng.randint(1, 6)
        weights = [rng.random() + 1e-3 for _ in range(n)]
        mass = rng.uniform(0.4, 1.0)
        probs = [w / sum(weights) * mass for w in weights]
        v = rng.uniform(0.5, 20.0)
        items = list(zip("abcdef", probs))
        got = expected_cost(items, v)
        want = _expected_cost_oracle(probs, v)
        worst = max(worst, abs(got - want))
        assert abs(got - want) <= 1e-9

        ordered = expected_cost(order_options(dict(items)), v)
        for perm in itertools.permutations(items):
            assert ordered <= expected_cost(perm, v) + 1e-9
    _pass(2, f"500 distributions matched within {worst:.2e}; "
             "ordering minimal over all permutations")


# ---------------------------------------------------------------------------
# 3. greedy property selection guarantee


class _PruningInstance:
    def __init__(self, queries, dists, index):
        self.queries = queries
        self.dists = dists
        self.index = index


def _random_pruning_instance(rng, max_queries=40,
                             kinds=("relation", "key_value", "attribute",
                                    "formula")):
    n = rng.randint(1, max_queries)
    n_kinds = rng.randint(1, len(kinds))
    dists = {}
    exclusions = {}
    for kind in kinds[:n_kinds]:
        opts = [f"{kind[:2]}{i}" for i in range(rng.randint(1, 4))]
        weights = [rng.random() + 0.01 for _ in opts]
        total = sum(weights)
        dists[kind] = [(o, w / total) for o, w in zip(opts, weights)]
        assignment = [rng.choice(opts) for _ in range(n)]
        for opt in opts:
            exclusions[(kind, opt)] = frozenset(
                q for q in range(n) if assignment[q] != opt)
    return _PruningInstance(list(range(n)), dists, PruningIndex(exclusions))


def test_criterion_03_greedy_pruning_guarantee():
    rng = random.Random(9157)
    bound = 1.0 - 1.0 / math.e
    for _ in range(200):
        inst = _random_pruning_instance(rng)
        kinds = list(inst.dists)

        def power(subset):
            return pruning_power(subset, inst.queries, inst.dists, inst.index)

        budget = rng.randint(1, len(kinds))
        chosen = select_properties(inst.queries, inst.dists, inst.index,
                                   budget)
        best = 0.0
        for size in range(budget + 1):
            for subset in itertools.combinations(kinds, min(size, len(kinds))):
                best = max(best, power(subset))
        assert power(chosen) >= bound * best - 1e-9

        values = {frozenset(s): power(s) for r in range(len(kinds) + 1)
                  for s in itertools.combinations(kinds, r)}
        for s, v in values.items():
            for extra in kinds:
                if extra not in s:
                    assert values[s | {extra}] >= v - 1e-9
        for s1, v1 in values.items():
            for s2, v2 in values.items():
                if not s1 <= s2:
                    continue
                for extra in kinds:
                    if extra in s2:
                        continue
                    gain1 = values[s1 | {extra}] - v1
                    gain2 = values[s2 | {extra}] - v2
                    assert gain1 >= gain2 - 1e-9
    _pass(3, "200 instances: greedy within (1-1/e) of optimum, "
             "monotone and submodular throughout")


# ---------------------------------------------------------------------------
# 4. batch solver exactness


def _brute_force_batch(instance):
    n = len(instance.claim_ids)
    best = None
    for mask in range(1 << n):
        picked = [i for i in range(n) if mask >> i & 1]
        if not instance.min_claims <= len(picked) <= instance.max_claims:
            continue
        cost = sum(instance.costs[i] for i in picked)
        for j in {instance.section_of[i] for i in picked}:
            cost += instance.section_costs[j]
        if cost > instance.budget + 1e-9:
            continue
        utility = sum(instance.utilities[i] for i in picked)
        ids = tuple(instance.claim_ids[i] for i in picked)
        key = (-utility, ids)
        if best is None or key < best[0]:
            best = (key, ids, utility)
    return best


def _knapsack_oracle(weights, values, capacity):
    best = {0: 0.0}
    for w, v in zip(weights, values):
        update = {}
        for used, val in best.items():
            if used + w <= capacity and val + v > best.get(used + w, -1.0):
                update[used + w] = max(best.get(used + w, 0.0), val + v)
        for k, v2 in update.items():
            best[k] = max(best.get(k, 0.0), v2)
    return max(best.values())


def test_criterion_04_batch_solver_exactness():
    started = time.perf_counter()
    rng = random.Random(41002)
    for _ in range(200):
        n = rng.randint(1, 15)
        n_sections = rng.randint(1, min(6, n))
        utilities = {f"c{i:02d}": float(rng.choice([0, 1, 2, 3, 4, 5]))
                     for i in range(n)}
        costs = {f"c{i:02d}": float(rng.randint(1, 20)) for i in range(n)}
        sections = {f"c{i:02d}": f"S{rng.randrange(n_sections)}"
                    for i in range(n)}
        r = float(rng.randint(0, 10))
        b_u = rng.randint(1, n)
        b_l = rng.randint(0, b_u)
        t_m = float(rng.randint(10, 80)) if rng.random() < 0.8 else None
        config = BatchConfig(budget_seconds=t_m, min_claims=b_l,
                             max_claims=b_u)
        inst = build_ilp(utilities, costs, sections, r, config)
        solution = solve(inst)
        oracle = _brute_force_batch(inst)
        if oracle is None:
            assert not solution.feasible
        else:
            assert solution.feasible
            assert solution.selected == oracle[1]
            assert solution.objective == pytest.approx(oracle[2])

    for _ in range(30):
        n = rng.randint(1, 12)
        values = [float(rng.randint(0, 9)) for _ in range(n)]
        item_weights = [rng.randint(1, 15) for _ in range(n)]
        capacity = rng.randint(5, 60)
        utilities = {f"c{i:02d}": values[i] for i in range(n)}
        costs = {f"c{i:02d}": float(max(1, item_weights[i] - 1))
                 for i in range(n)}
        sections = {f"c{i:02d}": f"S{i:02d}" for i in range(n)}
        config = BatchConfig(budget_seconds=float(capacity), min_claims=0,
                             max_claims=n)
        inst = build_ilp(utilities, costs, sections, 1.0, config)
        weights = [costs[f"c{i:02d}"] + 1 for i in range(n)]
        assert solve(inst).objective == pytest.approx(
            _knapsack_oracle(weights, values, capacity))

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    _pass(4, f"200 instances matched enumeration, 30 knapsack embeddings "
             f"matched DP, in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. per-claim worst-case cost bound


def test_criterion_05_per_claim_cost_bound(desk_run):
    per_attempt = {}
    for event in desk_run.events:
        if event["claim"] is None:
            continue
        key = (event["claim"], event["batch"])
        per_attempt[key] = per_attempt.get(key, 0.0) + event["seconds"]
    assert per_attempt, "simulation produced no charged claim events"
    worst = max(per_attempt.values())
    assert worst <= 3 * S_F + 1e-9, f"worst attempt cost {worst}"
    _pass(5, f"worst per-claim attempt cost {worst:.0f}s "
             f"<= {3 * S_F:.0f}s over {len(per_attempt)} attempts")


# ---------------------------------------------------------------------------
# 6. end-to-end directionality at desk scale


def test_criterion_06_mode_directionality_and_savings():
    started = time.perf_counter()
    profile = load_profile(PROFILE_DIR / "table1.json")
    corpus = generate_synthetic_corpus(profile, seed=7)
    totals = {}
    for mode in ("manual", "sequential", "optimized"):
        report = run_simulation(corpus, mode, _desk_config(), seed=7)
        totals[mode] = report.total_seconds
        assert report.claims == len(corpus.claims)
    elapsed = time.perf_counter() - started

    assert totals["optimized"] < totals["sequential"] < totals["manual"], totals
    savings = 1.0 - totals["optimized"] / totals["manual"]
    assert savings >= 0.30, f"savings {savings:.3f}"
    assert elapsed < 600.0, f"took {elapsed:.0f}s"
    _pass(6, f"{len(corpus.claims)} claims: optimized {totals['optimized']:.0f}s "
             f"< sequential {totals['sequential']:.0f}s "
             f"< manual {totals['manual']:.0f}s, "
             f"savings {savings:.1%}, in {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. verdict soundness with honest checkers


def test_criterion_07_verdict_soundness_and_audit(desk_corpus):
    config = _desk_config()
    session = Session(desk_corpus, "optimized", config)
    checkers = [SimChecker(f"checker-{i + 1}", desk_corpus)
                for i in range(config.checkers)]
    results = verify(session, checkers)

    assert len(results) == len(desk_corpus.claims)
    claims = {c.id: c for c in desk_corpus.claims}
    audited = 0
    for claim_id, result in results.items():
        annotation = desk_corpus.annotations[claim_id]
        assert result.verdict == annotation.verdict, claim_id
        assert audit_witness(result, claims[claim_id], desk_corpus.relations)
        audited += 1
    _pass(7, f"{audited} verdicts all match ground truth; "
             "every correct witness re-evaluates within tolerance")


# ---------------------------------------------------------------------------
# 8. formula round trips


def test_criterion_08_formula_round_trip_1000():
    rng = random.Random(2026)
    from claimcheck.formula import instantiate, render
    evaluated = 0
    for _ in range(1000):
        expr = random_expr(rng)
        assert parse(render(expr)) == expr

        template = abstract(expr)
        back = instantiate(template, label_map_for(expr))
        renamed, alias_map = canonical_aliases(expr)
        assert back == renamed
        cells = cells_for(expr, rng)
        renamed_cells = {(alias_map[al], at): v
                         for (al, at), v in cells.items()}
        try:
            expected = evaluate(expr, cells)
        except FormulaEvalError:
            with pytest.raises(FormulaEvalError):
                evaluate(back, renamed_cells)
            continue
        assert evaluate(back, renamed_cells) == expected
        evaluated += 1
    assert evaluated > 300
    _pass(8, f"1000 expressions round-tripped; {evaluated} evaluated "
             "to identical values after abstraction")


# ---------------------------------------------------------------------------
# 9. classifier shape checks


def _separable_profile():
    from claimcheck.corpus import CorpusProfile
    percentiles = {k: {50: 1} for k in ("relation", "key_value", "attribute",
                                        "formula")}
    return CorpusProfile(n_relations=3, n_keys=3, n_attributes=4,
                         n_formulas=3, n_claims=120, n_sections=8,
                         frequency_percentiles=percentiles,
                         explicit_fraction=0.5, error_rate=0.0,
                         separable=True)


def test_criterion_09_classifier_shape_checks():
    corpus = generate_synthetic_corpus(_separable_profile(), seed=3)
    # learning rate chosen so gradient descent actually converges on this
    # corpus; at the 0.1 default the key model is still climbing at the end
    config = SessionConfig(batch_size=20, epochs=120, incremental_epochs=40,
                           learning_rate=0.5, embedding_dim=16,
                           word_vocab=600, char_vocab=600)
    report = run_simulation(corpus, "optimized", config, seed=3)

    for kind, curve in report.topk.items():
        ks = sorted(curve)
        for lo, hi in zip(ks, ks[1:]):
            assert curve[hi] >= curve[lo] - 1e-12, (kind, curve)

    average = report.accuracy["average"]
    assert len(average) == report.batches
    half = len(average) // 2
    for i in range(half):
        assert average[i + 1] >= average[i], average

    truths = truth_table(corpus)
    pairs = [(c.sentence_text, c.claim_span) for c in corpus.claims]
    featurizer = fit_featurizer(pairs, EmbeddingTable.hashed(16),
                                word_cap=600, char_cap=600)
    X = featurizer.featurize_matrix(pairs)
    worst_slack = 0.0
    for kind in ("relation", "key_value", "attribute", "formula"):
        labels = [sorted(truths[c.id][kind])[0] for c in corpus.claims]
        model = SoftmaxClassifier.fit(kind, X, labels)
        proba = model.proba_matrix(X)
        row_entropy = -(proba * np.log(np.clip(proba, 1e-12, None))).sum(axis=1)
        cap = math.log(len(model.labels))
        assert row_entropy.min() >= -1e-9
        assert row_entropy.max() <= cap + 1e-6
        worst_slack = max(worst_slack, row_entropy.max() - cap)
    _pass(9, "top-k curves monotone in k; held-out accuracy "
             f"non-decreasing over first {half} retrains "
             f"({[round(a, 3) for a in average]}); entropy within bounds "
             f"(max overshoot {worst_slack:.1e})")


# ---------------------------------------------------------------------------
# 10. scripted API session equals the simulator


def _mirror_answer(checker, local_session):
    view = local_session.next_screen()
    assert view is not None
    answer = checker.answer(view)
    local_session.submit(answer)
    return view, answer


def test_criterion_10_scripted_session_replay_equivalence(tmp_path):
    from fastapi.testclient import TestClient
    from claimcheck.corpus import CorpusProfile

    percentiles = {k: {50: 1} for k in ("relation", "key_value", "attribute",
                                        "formula")}
    profile = CorpusProfile(n_relations=2, n_keys=3, n_attributes=3,
                            n_formulas=2, n_claims=3, n_sections=1,
                            frequency_percentiles=percentiles,
                            explicit_fraction=0.5, error_rate=0.0)
    corpus = generate_synthetic_corpus(profile, seed=5)
    root = tmp_path / "corpus"
    save_corpus(corpus, root)
    overrides = {"batch_size": 4, "epochs": 30, "embedding_dim": 16,
                 "word_vocab": 100, "char_vocab": 100}

    client = TestClient(create_app(log_dir=tmp_path / "logs", restore=False))
    created = client.post("/sessions", json={
        "corpus_root": str(root), "mode": "optimized", "config": overrides})
    assert created.status_code == 201
    session_id = created.json()["session"]

    local = Session(corpus, "optimized", SessionConfig(**overrides))
    checker = SimChecker("checker-1", corpus)
    steps = 0
    while True:
        nxt = client.get(f"/sessions/{session_id}/next",
                         params={"checker": "checker-1"}).json()
        if nxt.get("done"):
            break
        view, answer = _mirror_answer(checker, local)
        assert nxt["screen"]["screen_id"] == view.screen_id
        posted = client.post(f"/sessions/{session_id}/answer", json={
            "checker": "checker-1",
            "screen_id": answer.screen_id,
            "selected": list(answer.selected),
            "suggestion": answer.suggestion,
            "verdict": answer.verdict,
        })
        assert posted.status_code == 200, posted.text
        steps += 1
    assert local.next_screen() is None

    remote = client.get(f"/sessions/{session_id}/report").json()
    local_verdicts = {cid: r.verdict for cid, r in local.results.items()}
    remote_verdicts = {cid: r["verdict"] for cid, r in remote["results"].items()}
    assert remote_verdicts == local_verdicts
    assert remote["total_seconds"] == pytest.approx(local.total_seconds)

    fresh = client.post("/sessions", json={
        "corpus_root": str(root), "mode": "optimized", "config": overrides,
        "session_id": "parse-check"})
    assert fresh.status_code == 201
    probe = Session(corpus, "optimized", SessionConfig(**overrides))
    probe_checker = SimChecker("checker-1", probe.corpus)
    while True:
        nxt = client.get("/sessions/parse-check/next",
                         params={"checker": "checker-1"}).json()
        assert not nxt.get("done")
        screen = nxt["screen"]
        if "candidates" in screen:
            bad = client.post("/sessions/parse-check/answer", json={
                "checker": "checker-1", "screen_id": screen["screen_id"],
                "selected": [], "suggestion": "a.2001 /", "verdict": None})
            assert bad.status_code == 422
            detail = bad.json()["detail"]
            assert detail["code"] == "parse"
            assert isinstance(detail["position"], int)
            break
        view, answer = _mirror_answer(probe_checker, probe)
        assert client.post("/sessions/parse-check/answer", json={
            "checker": "checker-1", "screen_id": answer.screen_id,
            "selected": list(answer.selected), "suggestion": answer.suggestion,
            "verdict": answer.verdict}).status_code == 200

    _pass(10, f"{steps}-step scripted session matches the simulator "
              "verdict-for-verdict; malformed suggestion surfaces "
              "a parse position")

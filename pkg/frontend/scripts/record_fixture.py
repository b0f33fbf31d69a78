"""Record a scripted API session for the browser replay test.

Drives the HTTP service with the simulated checker while mirroring every
step on a local engine, then dumps the full exchange (screens, posted
answers, responses, final report) plus recorded error cases to
test/fixtures/session.json.  The vitest replay suite feeds these
exchanges to the UI state machine and asserts it issues identical
requests and reaches the simulator's verdicts.

Run from the repository root with the package installed:

    python3 frontend/scripts/record_fixture.py
"""
import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from claimcheck.config import SessionConfig
from claimcheck.corpus import CorpusProfile, save_corpus
from claimcheck.engine import Session
from claimcheck.harness import SimChecker
from claimcheck.service import create_app
from claimcheck.synth import generate_synthetic_corpus

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures" / "session.json"

# small batches so later ones are planned by trained models; otherwise
# every option list is trimmed to a bare typed prompt and the fixture
# would never exercise a click
CONFIG = {"batch_size": 2, "epochs": 400, "incremental_epochs": 150,
          "learning_rate": 0.5, "embedding_dim": 16,
          "word_vocab": 100, "char_vocab": 100}
MODE = "optimized"
CHECKER = "checker-1"


def _profile(n_claims: int) -> CorpusProfile:
    return CorpusProfile(
        n_relations=2, n_keys=3, n_attributes=3, n_formulas=2,
        n_claims=n_claims, n_sections=1,
        frequency_percentiles={
            k: {50: 1}
            for k in ("relation", "key_value", "attribute", "formula")
        },
        explicit_fraction=0.5, error_rate=0.0,
    )


def _answer_body(answer) -> dict:
    return {"checker": answer.checker, "screen_id": answer.screen_id,
            "selected": list(answer.selected),
            "suggestion": answer.suggestion, "verdict": answer.verdict}


def record() -> dict:
    corpus = generate_synthetic_corpus(_profile(6), seed=5)
    tmp = Path(tempfile.mkdtemp(prefix="claimcheck-fixture-"))
    root = tmp / "corpus"
    save_corpus(corpus, root)
    client = TestClient(create_app())

    def create(session_id: str) -> dict:
        response = client.post("/sessions", json={
            "corpus_root": str(root), "mode": MODE, "config": CONFIG,
            "session_id": session_id})
        assert response.status_code == 201, response.text
        return response.json()

    # -- the full session, mirrored on a local engine --------------------
    created = create("replay")
    mirror = Session(corpus, MODE, SessionConfig(**CONFIG))
    checker = SimChecker(CHECKER, corpus)
    steps = []
    while True:
        nxt = client.get("/sessions/replay/next",
                         params={"checker": CHECKER}).json()
        if nxt["done"]:
            final_next = nxt
            break
        view = mirror.next_screen()
        assert view.screen_id == nxt["screen"]["screen_id"]
        answer = checker.answer(view)
        mirror.submit(answer)
        body = _answer_body(answer)
        response = client.post("/sessions/replay/answer", json=body)
        assert response.status_code == 200, response.text
        steps.append({
            "next": nxt,
            "action": {"selected": list(answer.selected),
                       "suggestion": answer.suggestion,
                       "verdict": answer.verdict},
            "answer_request": body,
            "answer_status": response.status_code,
            "answer_response": response.json(),
        })
    assert mirror.next_screen() is None
    report = client.get("/sessions/replay/report").json()
    expected_verdicts = {cid: r.verdict for cid, r in mirror.results.items()}
    for cid, verdict in expected_verdicts.items():
        assert report["results"][cid]["verdict"] == verdict

    # -- error exchanges: parse failure and an out-of-order repost -------
    create("errors")
    probe = Session(corpus, MODE, SessionConfig(**CONFIG))
    probe_checker = SimChecker(CHECKER, corpus)
    parse_case = None
    out_of_order_case = None
    answered_once = None
    while parse_case is None:
        nxt = client.get("/sessions/errors/next",
                         params={"checker": CHECKER}).json()
        assert not nxt["done"]
        screen = nxt["screen"]
        if "candidates" in screen:
            bad = {"checker": CHECKER, "screen_id": screen["screen_id"],
                   "selected": [], "suggestion": "a.2001 /", "verdict": None}
            response = client.post("/sessions/errors/answer", json=bad)
            assert response.status_code == 422, response.text
            parse_case = {"next": nxt, "request": bad,
                          "status": response.status_code,
                          "response": response.json()}
            continue
        view = probe.next_screen()
        answer = probe_checker.answer(view)
        probe.submit(answer)
        body = _answer_body(answer)
        assert client.post("/sessions/errors/answer",
                           json=body).status_code == 200
        if answered_once is None:
            answered_once = body
            conflicting = dict(body, suggestion="something else entirely")
            repost = client.post("/sessions/errors/answer", json=conflicting)
            assert repost.status_code == 409, repost.text
            out_of_order_case = {"request": conflicting,
                                 "status": repost.status_code,
                                 "response": repost.json()}

    # -- a recorded skip -------------------------------------------------
    create("skipper")
    first = client.get("/sessions/skipper/next",
                       params={"checker": CHECKER}).json()
    skip_body = {"checker": CHECKER, "claim_id": first["screen"]["claim_id"]}
    skipped = client.post("/sessions/skipper/skip", json=skip_body)
    assert skipped.status_code == 200, skipped.text
    after_skip = client.get("/sessions/skipper/next",
                            params={"checker": CHECKER}).json()
    assert after_skip["screen"]["claim_id"] != first["screen"]["claim_id"]

    # the fixture must exercise real interaction styles, not just typing
    clicked = [s for s in steps if s["action"]["selected"]]
    assert clicked, "no step clicks an option"
    assert any(s["next"]["screen"]["multi"] and len(s["action"]["selected"]) > 1
               for s in steps), "no multi-select step"
    assert any(s["action"]["suggestion"] for s in steps), "no typed step"

    return {
        "mode": MODE,
        "checker": CHECKER,
        "config": CONFIG,
        "create_response": created,
        "steps": steps,
        "final_next": final_next,
        "report": report,
        "expected_verdicts": expected_verdicts,
        "parse_error": parse_case,
        "out_of_order": out_of_order_case,
        "skip": {"next": first, "request": skip_body,
                 "response": skipped.json(), "after": after_skip},
    }


if __name__ == "__main__":
    fixture = record()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n",
                   encoding="utf-8")
    print(f"wrote {OUT} ({len(fixture['steps'])} steps)")

/** Replay the recorded server session through the UI state machine.
 *
 * The fixture was captured from the real HTTP service driven by the
 * simulated checker.  Feeding the same screens to SessionFlow and
 * performing the same user actions must produce byte-identical requests
 * and end with the simulator's verdicts; the error cases must surface
 * inline without clearing the draft.
 */
import { describe, expect, it } from "vitest";

import { Api, type FetchLike } from "../src/api.js";
import { SessionFlow } from "../src/state.js";
import fixture from "./fixtures/session.json";

interface Exchange {
  method: string;
  path: string;
  body?: unknown;
  status: number;
  response: unknown;
}

function fakeFetch(queue: Exchange[]): FetchLike {
  return async (input, init) => {
    const expected = queue.shift();
    if (!expected) {
      throw new Error(`unexpected request ${String(init?.method)} ${input}`);
    }
    expect(init?.method ?? "GET").toBe(expected.method);
    expect(input).toBe(expected.path);
    if (expected.body !== undefined) {
      expect(JSON.parse(String(init?.body))).toEqual(expected.body);
    }
    return new Response(JSON.stringify(expected.response), {
      status: expected.status,
      headers: { "content-type": "application/json" },
    });
  };
}

const NEXT_PATH = `/sessions/replay/next?checker=${fixture.checker}`;

function applyAction(
  flow: SessionFlow,
  action: { selected: number[]; suggestion: string | null; verdict: string | null },
): void {
  for (const index of action.selected) flow.toggleOption(index);
  if (action.suggestion !== null) flow.setSuggestion(action.suggestion);
  if (action.verdict !== null) {
    flow.setVerdict(action.verdict as "correct" | "incorrect");
  }
}

describe("recorded session replay", () => {
  it("reproduces every request and reaches the simulator verdicts", async () => {
    const queue: Exchange[] = [];
    queue.push({
      method: "GET",
      path: NEXT_PATH,
      status: 200,
      response: fixture.steps[0]!.next,
    });
    fixture.steps.forEach((step, i) => {
      queue.push({
        method: "POST",
        path: "/sessions/replay/answer",
        body: step.answer_request,
        status: step.answer_status,
        response: step.answer_response,
      });
      queue.push({
        method: "GET",
        path: NEXT_PATH,
        status: 200,
        response: fixture.steps[i + 1]?.next ?? fixture.final_next,
      });
    });

    const api = new Api("", fakeFetch(queue));
    const flow = new SessionFlow(api, "replay", fixture.checker);
    await flow.refresh();

    const verdicts: Record<string, string> = {};
    for (const step of fixture.steps) {
      const screen = step.next.screen!;
      expect(flow.state.phase).toBe("screen");
      expect(flow.state.screen?.screen_id).toBe(screen.screen_id);
      // the screen payload is held verbatim, including option order
      expect(flow.state.screen).toEqual(screen);

      applyAction(flow, step.action);
      await flow.submit();
      expect(flow.state.error).toBeNull();
      if (step.answer_response.resolved) {
        expect(flow.state.banner).toEqual({
          claimId: screen.claim_id,
          verdict: step.answer_response.verdict,
        });
        verdicts[screen.claim_id] = step.answer_response.verdict!;
      }
    }

    expect(flow.state.phase).toBe("done");
    expect(queue).toHaveLength(0);
    expect(verdicts).toEqual(fixture.expected_verdicts);
    // the server-side report agreed with the mirror engine when recorded
    for (const [claimId, verdict] of Object.entries(fixture.expected_verdicts)) {
      expect(fixture.report.results[claimId]!.verdict).toBe(verdict);
    }
  });

  it("keeps the draft when a suggestion fails to parse", async () => {
    const parseCase = fixture.parse_error;
    const queue: Exchange[] = [
      {
        method: "GET",
        path: `/sessions/errors/next?checker=${fixture.checker}`,
        status: 200,
        response: parseCase.next,
      },
      {
        method: "POST",
        path: "/sessions/errors/answer",
        body: parseCase.request,
        status: parseCase.status,
        response: parseCase.response,
      },
    ];
    const api = new Api("", fakeFetch(queue));
    const flow = new SessionFlow(api, "errors", fixture.checker);
    await flow.refresh();

    const screenBefore = flow.state.screen;
    flow.setSuggestion(parseCase.request.suggestion!);
    await flow.submit();

    expect(flow.state.error).not.toBeNull();
    expect(flow.state.error?.status).toBe(422);
    expect(flow.state.error?.code).toBe("parse");
    expect(flow.state.error?.position).toBe(
      parseCase.response.detail.position,
    );
    // input survives the rejection: same screen, same typed text
    expect(flow.state.screen).toBe(screenBefore);
    expect(flow.state.suggestion).toBe(parseCase.request.suggestion);
    expect(flow.state.busy).toBe(false);
  });

  it("surfaces an out-of-order conflict without losing input", async () => {
    const conflict = fixture.out_of_order;
    const firstScreen = fixture.steps[0]!.next;
    const queue: Exchange[] = [
      {
        method: "GET",
        path: `/sessions/errors/next?checker=${fixture.checker}`,
        status: 200,
        response: firstScreen,
      },
      {
        method: "POST",
        path: "/sessions/errors/answer",
        body: conflict.request,
        status: conflict.status,
        response: conflict.response,
      },
    ];
    const api = new Api("", fakeFetch(queue));
    const flow = new SessionFlow(api, "errors", fixture.checker);
    await flow.refresh();

    applyAction(flow, {
      selected: conflict.request.selected,
      suggestion: conflict.request.suggestion,
      verdict: conflict.request.verdict,
    });
    await flow.submit();

    expect(flow.state.error?.status).toBe(409);
    expect(flow.state.error?.code).toBe("out_of_order");
    expect(flow.state.suggestion).toBe(conflict.request.suggestion);
    expect(flow.state.selected).toEqual(conflict.request.selected);
    expect(flow.state.screen?.screen_id).toBe(
      firstScreen.screen!.screen_id,
    );
  });

  it("skips the current claim and lands on the next one", async () => {
    const skip = fixture.skip;
    const queue: Exchange[] = [
      {
        method: "GET",
        path: `/sessions/skipper/next?checker=${fixture.checker}`,
        status: 200,
        response: skip.next,
      },
      {
        method: "POST",
        path: "/sessions/skipper/skip",
        body: skip.request,
        status: 200,
        response: skip.response,
      },
      {
        method: "GET",
        path: `/sessions/skipper/next?checker=${fixture.checker}`,
        status: 200,
        response: skip.after,
      },
    ];
    const api = new Api("", fakeFetch(queue));
    const flow = new SessionFlow(api, "skipper", fixture.checker);
    await flow.refresh();
    expect(flow.state.screen?.claim_id).toBe(skip.request.claim_id);

    await flow.skip();
    expect(flow.state.error).toBeNull();
    expect(flow.state.screen?.claim_id).toBe(skip.after.screen!.claim_id);
    expect(flow.state.screen?.claim_id).not.toBe(skip.request.claim_id);
    expect(queue).toHaveLength(0);
  });
});

/** Session state machine, free of any DOM concern.
 *
 * Holds the current screen plus the checker's draft (selection,
 * suggestion text, verdict) and turns user actions into API calls.
 * Advancing is never optimistic: the screen only changes after the
 * server acknowledged the answer.  A rejected answer keeps the draft
 * untouched and surfaces the error inline.
 */

import {
  Api,
  ApiError,
  type AnswerBody,
  type ErrorDetail,
  type NextPayload,
  type Progress,
  type Screen,
} from "./api.js";

export type Phase = "idle" | "screen" | "done";

export interface InlineError extends ErrorDetail {
  status: number;
}

export interface Banner {
  claimId: string;
  verdict: string;
}

export interface FlowState {
  phase: Phase;
  screen: Screen | null;
  progress: Progress | null;
  selected: number[];
  suggestion: string;
  verdict: "correct" | "incorrect" | null;
  banner: Banner | null;
  error: InlineError | null;
  busy: boolean;
}

function freshState(): FlowState {
  return {
    phase: "idle",
    screen: null,
    progress: null,
    selected: [],
    suggestion: "",
    verdict: null,
    banner: null,
    error: null,
    busy: false,
  };
}

export class SessionFlow {
  state: FlowState = freshState();

  constructor(
    private readonly api: Api,
    readonly sessionId: string,
    readonly checker: string,
  ) {}

  /** Pull the current screen; the sole source of truth after a reload. */
  async refresh(): Promise<FlowState> {
    const payload: NextPayload = await this.api.nextScreen(
      this.sessionId,
      this.checker,
    );
    this.applyNext(payload);
    return this.state;
  }

  private applyNext(payload: NextPayload): void {
    const banner = this.state.banner;
    if (payload.done || payload.screen === null) {
      this.state = { ...freshState(), phase: "done", banner };
    } else {
      this.state = {
        ...freshState(),
        phase: "screen",
        screen: payload.screen,
        banner,
      };
    }
    this.state.progress = payload.progress;
  }

  /** Single-choice screens behave like radios, attribute screens toggle. */
  toggleOption(index: number): FlowState {
    const screen = this.state.screen;
    if (!screen) return this.state;
    const count = screen.options?.length ?? screen.candidates?.length ?? 0;
    if (index < 0 || index >= count) return this.state;
    if (screen.multi) {
      const picked = new Set(this.state.selected);
      if (picked.has(index)) {
        picked.delete(index);
      } else {
        picked.add(index);
      }
      this.state.selected = [...picked].sort((a, b) => a - b);
    } else {
      this.state.selected = this.state.selected[0] === index ? [] : [index];
    }
    return this.state;
  }

  setSuggestion(text: string): FlowState {
    this.state.suggestion = text;
    return this.state;
  }

  setVerdict(verdict: "correct" | "incorrect" | null): FlowState {
    this.state.verdict = verdict;
    return this.state;
  }

  private draftBody(screen: Screen): AnswerBody {
    const suggestion = this.state.suggestion.trim();
    return {
      checker: this.checker,
      screen_id: screen.screen_id,
      selected: [...this.state.selected],
      suggestion: suggestion === "" ? null : suggestion,
      verdict: this.state.verdict,
    };
  }

  async submit(): Promise<FlowState> {
    const screen = this.state.screen;
    if (!screen || this.state.busy) return this.state;
    this.state.busy = true;
    this.state.error = null;
    try {
      const response = await this.api.answer(
        this.sessionId,
        this.draftBody(screen),
      );
      if (response.resolved && response.verdict !== null) {
        this.state.banner = {
          claimId: screen.claim_id,
          verdict: response.verdict,
        };
      }
      await this.refresh();
    } catch (error) {
      // the draft stays exactly as typed; only the error banner changes
      this.state.busy = false;
      if (error instanceof ApiError) {
        this.state.error = { status: error.status, ...error.detail };
      } else {
        this.state.error = { status: 0, message: String(error) };
      }
    }
    return this.state;
  }

  async skip(): Promise<FlowState> {
    const screen = this.state.screen;
    if (!screen || this.state.busy) return this.state;
    this.state.busy = true;
    this.state.error = null;
    try {
      await this.api.skip(this.sessionId, {
        checker: this.checker,
        claim_id: screen.claim_id,
      });
      await this.refresh();
    } catch (error) {
      this.state.busy = false;
      if (error instanceof ApiError) {
        this.state.error = { status: error.status, ...error.detail };
      } else {
        this.state.error = { status: 0, message: String(error) };
      }
    }
    return this.state;
  }
}

/** Forward-only test-runner state machine.
 *
 * Transitions: intro -> answering <-> submitting -> completed, with a
 * retryable error state on service failures. There is deliberately no
 * operation that navigates to a previous item; the server rejects
 * out-of-order answers anyway and a 409 resyncs to the pending item.
 */

import {
  ApiClient,
  ApiError,
  FinalResult,
  Progress,
  PublicItemView,
} from './api.js';

export type Phase = 'intro' | 'answering' | 'submitting' | 'completed' | 'error';

export interface RunnerState {
  phase: Phase;
  bankId: string;
  sessionId: string | null;
  item: PublicItemView | null;
  selected: number | null;
  progress: Progress | null;
  result: FinalResult | null;
  error: string | null;
}

export interface SessionStorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const STORAGE_KEY = 'adaptest.session_id';

export class TestRunner {
  private state: RunnerState;
  private listeners: Array<(state: RunnerState) => void> = [];

  constructor(
    private readonly api: ApiClient,
    bankId: string,
    private readonly storage: SessionStorageLike | null = null,
  ) {
    this.state = {
      phase: 'intro',
      bankId,
      sessionId: null,
      item: null,
      selected: null,
      progress: null,
      result: null,
      error: null,
    };
  }

  snapshot(): RunnerState {
    return { ...this.state };
  }

  onChange(listener: (state: RunnerState) => void): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<RunnerState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.snapshot());
    }
  }

  /** Leave the intro page: resume the stored session if one exists, else
   * create a new one. */
  async start(): Promise<void> {
    if (this.state.phase !== 'intro' && this.state.phase !== 'error') {
      return;
    }
    const stored = this.storage?.getItem(STORAGE_KEY) ?? null;
    if (stored) {
      const restored = await this.tryRestore(stored);
      if (restored) {
        return;
      }
      this.storage?.removeItem(STORAGE_KEY);
    }
    try {
      const started = await this.api.createSession(this.state.bankId);
      this.storage?.setItem(STORAGE_KEY, started.session_id);
      this.update({
        phase: 'answering',
        sessionId: started.session_id,
        item: started.item,
        selected: null,
        progress: started.progress,
        error: null,
      });
    } catch (err) {
      this.update({ phase: 'error', error: this.describe(err) });
    }
  }

  private async tryRestore(sessionId: string): Promise<boolean> {
    try {
      const snap = await this.api.getSession(sessionId);
      if (snap.status === 'completed') {
        await this.finish(sessionId);
        return true;
      }
      this.update({
        phase: 'answering',
        sessionId,
        item: snap.item,
        selected: null,
        progress: snap.progress,
        error: null,
      });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        return false; // stale id: fall through to a fresh session
      }
      this.update({ phase: 'error', error: this.describe(err) });
      return true;
    }
  }

  selectOption(index: number): void {
    if (this.state.phase !== 'answering' || this.state.item === null) {
      return;
    }
    if (index < 0 || index >= this.state.item.options.length) {
      return;
    }
    this.update({ selected: index });
  }

  canAdvance(): boolean {
    return this.state.phase === 'answering' && this.state.selected !== null;
  }

  /** Submit the selected answer and advance. Double invocations while a
   * submission is in flight are ignored; true network retries are absorbed
   * by the server's idempotent answer endpoint. */
  async submitAndAdvance(): Promise<void> {
    if (!this.canAdvance()) {
      return;
    }
    const { sessionId, item, selected } = this.state;
    if (sessionId === null || item === null || selected === null) {
      return;
    }
    this.update({ phase: 'submitting' });
    try {
      const answer = await this.api.submitAnswer(sessionId, item.item_id, selected);
      if (answer.status === 'completed') {
        await this.finish(sessionId);
        return;
      }
      this.update({
        phase: 'answering',
        item: answer.next_item,
        selected: null,
        progress: answer.progress,
        error: null,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.resync(sessionId);
        return;
      }
      // stay on the current item; the answer can be retried
      this.update({ phase: 'answering', error: this.describe(err) });
    }
  }

  /** After an out-of-order conflict the server state wins: reload the
   * pending item rather than guessing. */
  private async resync(sessionId: string): Promise<void> {
    try {
      const snap = await this.api.getSession(sessionId);
      if (snap.status === 'completed') {
        await this.finish(sessionId);
        return;
      }
      this.update({
        phase: 'answering',
        item: snap.item,
        selected: null,
        progress: snap.progress,
        error: null,
      });
    } catch (err) {
      this.update({ phase: 'error', error: this.describe(err) });
    }
  }

  private async finish(sessionId: string): Promise<void> {
    try {
      const result = await this.api.getResult(sessionId);
      this.storage?.removeItem(STORAGE_KEY);
      this.update({
        phase: 'completed',
        item: null,
        selected: null,
        result,
        error: null,
      });
    } catch (err) {
      this.update({ phase: 'error', error: this.describe(err) });
    }
  }

  /** Retry affordance for the error state. */
  async retry(): Promise<void> {
    if (this.state.phase !== 'error') {
      return;
    }
    if (this.state.sessionId) {
      await this.resync(this.state.sessionId);
    } else {
      this.update({ phase: 'intro', error: null });
      await this.start();
    }
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) {
      return err.status === 0 ? err.message : `service error ${err.status}: ${err.message}`;
    }
    return String(err);
  }
}

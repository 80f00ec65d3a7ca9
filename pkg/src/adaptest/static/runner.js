/** Forward-only test-runner state machine.
 *
 * Transitions: intro -> answering <-> submitting -> completed, with a
 * retryable error state on service failures. There is deliberately no
 * operation that navigates to a previous item; the server rejects
 * out-of-order answers anyway and a 409 resyncs to the pending item.
 */
import { ApiError, } from './api.js';
const STORAGE_KEY = 'adaptest.session_id';
export class TestRunner {
    constructor(api, bankId, storage = null) {
        this.api = api;
        this.storage = storage;
        this.listeners = [];
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
    snapshot() {
        return { ...this.state };
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    update(patch) {
        this.state = { ...this.state, ...patch };
        for (const listener of this.listeners) {
            listener(this.snapshot());
        }
    }
    /** Leave the intro page: resume the stored session if one exists, else
     * create a new one. */
    async start() {
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
        }
        catch (err) {
            this.update({ phase: 'error', error: this.describe(err) });
        }
    }
    async tryRestore(sessionId) {
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
        }
        catch (err) {
            if (err instanceof ApiError && err.status === 404) {
                return false; // stale id: fall through to a fresh session
            }
            this.update({ phase: 'error', error: this.describe(err) });
            return true;
        }
    }
    selectOption(index) {
        if (this.state.phase !== 'answering' || this.state.item === null) {
            return;
        }
        if (index < 0 || index >= this.state.item.options.length) {
            return;
        }
        this.update({ selected: index });
    }
    canAdvance() {
        return this.state.phase === 'answering' && this.state.selected !== null;
    }
    /** Submit the selected answer and advance. Double invocations while a
     * submission is in flight are ignored; true network retries are absorbed
     * by the server's idempotent answer endpoint. */
    async submitAndAdvance() {
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
        }
        catch (err) {
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
    async resync(sessionId) {
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
        }
        catch (err) {
            this.update({ phase: 'error', error: this.describe(err) });
        }
    }
    async finish(sessionId) {
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
        }
        catch (err) {
            this.update({ phase: 'error', error: this.describe(err) });
        }
    }
    /** Retry affordance for the error state. */
    async retry() {
        if (this.state.phase !== 'error') {
            return;
        }
        if (this.state.sessionId) {
            await this.resync(this.state.sessionId);
        }
        else {
            this.update({ phase: 'intro', error: null });
            await this.start();
        }
    }
    describe(err) {
        if (err instanceof ApiError) {
            return err.status === 0 ? err.message : `service error ${err.status}: ${err.message}`;
        }
        return String(err);
    }
}

import { ApiClient } from './api.js';
import { installHistoryGuard, RunnerView } from './dom.js';
import { TestRunner } from './runner.js';
function bankIdFromUrl(win) {
    return new URL(win.location.href).searchParams.get('bank');
}
export function boot(win) {
    const root = win.document.getElementById('app');
    if (!root) {
        throw new Error('missing #app mount point');
    }
    const bankId = bankIdFromUrl(win);
    if (!bankId) {
        root.textContent = 'No bank selected: open this page as /?bank=<bank_id>.';
        return;
    }
    installHistoryGuard(win);
    const runner = new TestRunner(new ApiClient(''), bankId, win.sessionStorage);
    new RunnerView(root, runner);
}
if (typeof window !== 'undefined' && typeof document !== 'undefined') {
    boot(window);
}

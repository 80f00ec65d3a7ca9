import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { TestRunner } from '../src/runner.js';
import { FakeService, MemoryStorage } from './helpers.js';

function makeRunner(service: FakeService, storage = new MemoryStorage()) {
  const api = new ApiClient('http://test', service.fetch);
  return new TestRunner(api, 'bank-1', storage);
}

describe('state machine transitions', () => {
  it('starts in intro and moves to answering on start()', async () => {
    const runner = makeRunner(new FakeService());
    expect(runner.snapshot().phase).toBe('intro');
    await runner.start();
    const state = runner.snapshot();
    expect(state.phase).toBe('answering');
    expect(state.item?.item_id).toBe('i1');
    expect(state.progress).toEqual({ answered: 0, total: 3 });
  });

  it('never enables advance without a selection', async () => {
    const runner = makeRunner(new FakeService());
    await runner.start();
    expect(runner.canAdvance()).toBe(false);
    await runner.submitAndAdvance(); // no-op
    expect(runner.snapshot().item?.item_id).toBe('i1');
    runner.selectOption(2);
    expect(runner.canAdvance()).toBe(true);
  });

  it('runs a full session to completion with the final score', async () => {
    const service = new FakeService(3);
    const runner = makeRunner(service);
    await runner.start();
    for (let step = 0; step < 3; step++) {
      runner.selectOption(1);
      await runner.submitAndAdvance();
    }
    const state = runner.snapshot();
    expect(state.phase).toBe('completed');
    expect(state.result?.theta_mean).toBeCloseTo(0.42);
    expect(state.result?.raw_correctness).toBeCloseTo(0.67);
    expect(service.answered).toBe(3);
  });

  it('clears the selection after each advance', async () => {
    const runner = makeRunner(new FakeService());
    await runner.start();
    runner.selectOption(3);
    await runner.submitAndAdvance();
    expect(runner.snapshot().selected).toBeNull();
    expect(runner.canAdvance()).toBe(false);
  });

  it('ignores out-of-range selections', async () => {
    const runner = makeRunner(new FakeService());
    await runner.start();
    runner.selectOption(99);
    expect(runner.snapshot().selected).toBeNull();
    runner.selectOption(-1);
    expect(runner.snapshot().selected).toBeNull();
  });
});

describe('double-submit absorption', () => {
  it('a second submit while one is in flight advances exactly once', async () => {
    const service = new FakeService(3);
    const runner = makeRunner(service);
    await runner.start();
    runner.selectOption(0);
    const first = runner.submitAndAdvance();
    const second = runner.submitAndAdvance(); // phase is already 'submitting'
    await Promise.all([first, second]);
    expect(service.answered).toBe(1);
    expect(runner.snapshot().item?.item_id).toBe('i2');
  });
});

describe('conflict handling', () => {
  it('a 409 reloads the pending item instead of reordering', async () => {
    const service = new FakeService(3);
    const runner = makeRunner(service);
    await runner.start();
    // server has already recorded the first answer out-of-band
    service.answered = 1;
    runner.selectOption(0);
    await runner.submitAndAdvance(); // POST for i1 -> 409 -> resync
    const state = runner.snapshot();
    expect(state.phase).toBe('answering');
    expect(state.item?.item_id).toBe('i2');
    expect(state.progress?.answered).toBe(1);
  });
});

describe('reload safety', () => {
  it('restores the pending item from the stored session id', async () => {
    const service = new FakeService(3);
    const storage = new MemoryStorage();
    const first = makeRunner(service, storage);
    await first.start();
    first.selectOption(0);
    await first.submitAndAdvance();

    const reloaded = makeRunner(service, storage);
    await reloaded.start();
    const state = reloaded.snapshot();
    expect(state.phase).toBe('answering');
    expect(state.item?.item_id).toBe('i2');
    // no second session was created as part of the reload
    const creates = service.calls.filter(
      (c) => c.method === 'POST' && c.url.endsWith('/api/v1/sessions'),
    );
    expect(creates.length).toBe(1);
  });

  it('shows the completion page when the stored session already finished', async () => {
    const service = new FakeService(2);
    const storage = new MemoryStorage();
    const first = makeRunner(service, storage);
    await first.start();
    for (let step = 0; step < 2; step++) {
      first.selectOption(0);
      await first.submitAndAdvance();
    }
    // completion clears the stored id; simulate an old tab that still has it
    storage.setItem('adaptest.session_id', 'sess-1');
    const reloaded = makeRunner(service, storage);
    await reloaded.start();
    expect(reloaded.snapshot().phase).toBe('completed');
  });
});

describe('failure states', () => {
  it('unreachable service lands in a retryable error state', async () => {
    const api = new ApiClient('http://test', async () => {
      throw new Error('connection refused');
    });
    const runner = new TestRunner(api, 'bank-1', null);
    await runner.start();
    expect(runner.snapshot().phase).toBe('error');
    expect(runner.snapshot().error).toContain('unreachable');
  });

  it('retry() after a failed start creates the session', async () => {
    const service = new FakeService(3);
    let failFirst = true;
    const api = new ApiClient('http://test', async (url, init) => {
      if (failFirst) {
        failFirst = false;
        throw new Error('flaky network');
      }
      return service.fetch(url, init);
    });
    const runner = new TestRunner(api, 'bank-1', new MemoryStorage());
    await runner.start();
    expect(runner.snapshot().phase).toBe('error');
    await runner.retry();
    expect(runner.snapshot().phase).toBe('answering');
  });

  it('a mid-session network error keeps the current item retryable', async () => {
    const service = new FakeService(3);
    let failNext = false;
    const api = new ApiClient('http://test', async (url, init) => {
      if (failNext && url.includes('/answers')) {
        failNext = false;
        throw new Error('dropped');
      }
      return service.fetch(url, init);
    });
    const runner = new TestRunner(api, 'bank-1', null);
    await runner.start();
    failNext = true;
    runner.selectOption(1);
    await runner.submitAndAdvance();
    const state = runner.snapshot();
    expect(state.phase).toBe('answering');
    expect(state.item?.item_id).toBe('i1');
    expect(state.error).toBeTruthy();
    await runner.submitAndAdvance();
    expect(runner.snapshot().item?.item_id).toBe('i2');
  });
});

describe('forward-only surface', () => {
  it('exposes no operation that navigates to a previous item', () => {
    const publicApi = Object.getOwnPropertyNames(TestRunner.prototype);
    for (const name of publicApi) {
      expect(name.toLowerCase()).not.toMatch(/back|previous|prev/);
    }
  });
});

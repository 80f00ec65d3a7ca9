// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { installHistoryGuard, RunnerView } from '../src/dom.js';
import { TestRunner } from '../src/runner.js';
import { FakeService, MemoryStorage, waitFor } from './helpers.js';

function mount(service: FakeService) {
  document.body.innerHTML = '<main id="app"></main>';
  const root = document.getElementById('app')!;
  const runner = new TestRunner(
    new ApiClient('http://test', service.fetch),
    'bank-1',
    new MemoryStorage(),
  );
  const view = new RunnerView(root, runner);
  return { root, runner, view };
}

function click(el: Element | null) {
  expect(el).not.toBeNull();
  (el as HTMLElement).click();
}

describe('intro screen', () => {
  it('renders instructions and a start control', () => {
    const { root } = mount(new FakeService());
    expect(root.querySelector('h1')?.textContent).toContain('test');
    expect(root.querySelector('#start')).not.toBeNull();
  });
});

describe('question screen', () => {
  let ctx: ReturnType<typeof mount>;

  beforeEach(async () => {
    ctx = mount(new FakeService(3));
    click(ctx.root.querySelector('#start'));
    await waitFor(() => ctx.runner.snapshot().phase === 'answering');
  });

  it('renders progress, stimulus fallback, question, and options', () => {
    expect(ctx.root.querySelector('#progress')?.textContent).toBe('Question 1 of 3');
    expect(ctx.root.querySelector('.alt-stimulus')?.textContent).toBe('stimulus 1');
    expect(ctx.root.querySelector('#question')?.textContent).toBe('question 1');
    expect(ctx.root.querySelectorAll('.option').length).toBe(4);
  });

  it('disables Next until an option is selected', async () => {
    const next = ctx.root.querySelector('#next')!;
    expect(next.hasAttribute('disabled')).toBe(true);
    click(ctx.root.querySelector('.option[data-index="2"]'));
    await waitFor(() => ctx.runner.snapshot().selected === 2);
    const enabled = ctx.root.querySelector('#next')!;
    expect(enabled.hasAttribute('disabled')).toBe(false);
    const checked = ctx.root.querySelector('.option[aria-checked="true"]');
    expect(checked?.getAttribute('data-index')).toBe('2');
  });

  it('advances on Next and renders the following question', async () => {
    click(ctx.root.querySelector('.option[data-index="0"]'));
    await waitFor(() => ctx.runner.snapshot().selected === 0);
    click(ctx.root.querySelector('#next'));
    await waitFor(() => ctx.runner.snapshot().item?.item_id === 'i2');
    expect(ctx.root.querySelector('#progress')?.textContent).toBe('Question 2 of 3');
  });

  it('is fully keyboard operable: arrows, digits, Enter', async () => {
    const options = ctx.root.querySelector('#options')!;
    const key = (k: string) =>
      options.dispatchEvent(new KeyboardEvent('keydown', { key: k, bubbles: true }));

    key('ArrowDown');
    await waitFor(() => ctx.runner.snapshot().selected === 0);
    key('ArrowDown');
    await waitFor(() => ctx.runner.snapshot().selected === 1);
    key('ArrowUp');
    await waitFor(() => ctx.runner.snapshot().selected === 0);
    key('3');
    await waitFor(() => ctx.runner.snapshot().selected === 2);

    const optionsNow = ctx.root.querySelector('#options')!;
    optionsNow.dispatchEvent(
      new KeyboardEvent('keydown', { key: 'Enter', bubbles: true }),
    );
    await waitFor(() => ctx.runner.snapshot().item?.item_id === 'i2');
    expect(ctx.root.querySelector('#progress')?.textContent).toBe('Question 2 of 3');
  });
});

describe('completion screen', () => {
  it('shows the ability score and raw correctness', async () => {
    const ctx = mount(new FakeService(2));
    click(ctx.root.querySelector('#start'));
    await waitFor(() => ctx.runner.snapshot().phase === 'answering');
    for (let step = 0; step < 2; step++) {
      click(ctx.root.querySelector('.option[data-index="1"]'));
      await waitFor(() => ctx.runner.snapshot().selected === 1);
      click(ctx.root.querySelector('#next'));
      await waitFor(() => ctx.runner.snapshot().selected === null);
    }
    await waitFor(() => ctx.runner.snapshot().phase === 'completed');
    expect(ctx.root.querySelector('#theta')?.textContent).toBe('0.42 ± 0.31');
    expect(ctx.root.querySelector('#raw')?.textContent).toBe('67%');
  });
});

describe('history guard', () => {
  it('re-pins the history entry when back is pressed', () => {
    let pushes = 0;
    const fakeWindow = {
      history: {
        pushState: () => {
          pushes += 1;
        },
      },
      addEventListener: (name: string, handler: () => void) => {
        expect(name).toBe('popstate');
        // simulate two back-button presses
        handler();
        handler();
      },
    } as unknown as Window;
    installHistoryGuard(fakeWindow);
    expect(pushes).toBe(3); // initial pin + one per popstate
  });
});

/** Minimal DOM renderer for the runner: one screen per phase, radio-style
 * option list, fully keyboard operable (arrows/digits select, Enter
 * advances). A history guard keeps the browser back button on the current
 * item; the test is forward-only by design. */

import { PublicItemView } from './api.js';
import { RunnerState, TestRunner } from './runner.js';

export function installHistoryGuard(win: Window): void {
  win.history.pushState({ guard: true }, '');
  win.addEventListener('popstate', () => {
    win.history.pushState({ guard: true }, '');
  });
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderStimulus(doc: Document, item: PublicItemView): HTMLElement {
  const wrap = el(doc, 'figure', { class: 'stimulus' });
  if (item.stimulus.image_ref && !item.stimulus.image_ref.startsWith('synthetic://')) {
    const img = el(doc, 'img', {
      src: item.stimulus.image_ref,
      alt: item.stimulus.alt_text,
    });
    wrap.appendChild(img);
  } else {
    // synthetic banks ship no real images: the alt text carries the stimulus
    wrap.appendChild(el(doc, 'p', { class: 'alt-stimulus' }, item.stimulus.alt_text));
  }
  return wrap;
}

export class RunnerView {
  constructor(
    private readonly root: HTMLElement,
    private readonly runner: TestRunner,
  ) {
    runner.onChange((state) => this.render(state));
    this.render(runner.snapshot());
  }

  private render(state: RunnerState): void {
    const doc = this.root.ownerDocument;
    this.root.replaceChildren();
    switch (state.phase) {
      case 'intro':
        this.renderIntro(doc);
        break;
      case 'answering':
      case 'submitting':
        this.renderItem(doc, state);
        break;
      case 'completed':
        this.renderCompleted(doc, state);
        break;
      case 'error':
        this.renderError(doc, state);
        break;
    }
  }

  private renderIntro(doc: Document): void {
    this.root.appendChild(el(doc, 'h1', {}, 'Visualization literacy test'));
    this.root.appendChild(
      el(
        doc,
        'p',
        {},
        'You will see one question at a time. Select an answer to enable ' +
          'Next. Once you move on you cannot return to a previous question.',
      ),
    );
    const button = el(doc, 'button', { id: 'start', type: 'button' }, 'Start');
    button.addEventListener('click', () => void this.runner.start());
    this.root.appendChild(button);
  }

  private renderItem(doc: Document, state: RunnerState): void {
    const item = state.item;
    if (!item) {
      return;
    }
    this.root.appendChild(
      el(doc, 'p', { id: 'progress' }, `Question ${item.position} of ${item.total}`),
    );
    this.root.appendChild(renderStimulus(doc, item));
    this.root.appendChild(el(doc, 'h2', { id: 'question' }, item.question));

    const list = el(doc, 'div', {
      id: 'options',
      role: 'radiogroup',
      'aria-label': 'answer options',
    });
    item.options.forEach((option, index) => {
      const selected = state.selected === index;
      const button = el(
        doc,
        'button',
        {
          type: 'button',
          class: 'option' + (selected ? ' selected' : ''),
          role: 'radio',
          'aria-checked': selected ? 'true' : 'false',
          'data-index': String(index),
        },
        option,
      );
      button.addEventListener('click', () => this.runner.selectOption(index));
      list.appendChild(button);
    });
    list.addEventListener('keydown', (event: Event) => {
      this.handleOptionKeys(event as KeyboardEvent, item.options.length);
    });
    this.root.appendChild(list);

    const next = el(
      doc,
      'button',
      { id: 'next', type: 'button' },
      state.phase === 'submitting' ? 'Submitting…' : 'Next',
    );
    if (!this.runner.canAdvance()) {
      next.setAttribute('disabled', 'disabled');
    }
    next.addEventListener('click', () => void this.runner.submitAndAdvance());
    this.root.appendChild(next);
    if (state.error) {
      this.root.appendChild(el(doc, 'p', { class: 'error' }, state.error));
    }
  }

  private handleOptionKeys(event: KeyboardEvent, optionCount: number): void {
    const state = this.runner.snapshot();
    const current = state.selected ?? -1;
    if (event.key === 'ArrowDown' || event.key === 'ArrowRight') {
      this.runner.selectOption(Math.min(current + 1, optionCount - 1));
      event.preventDefault();
    } else if (event.key === 'ArrowUp' || event.key === 'ArrowLeft') {
      this.runner.selectOption(Math.max(current - 1, 0));
      event.preventDefault();
    } else if (/^[1-9]$/.test(event.key)) {
      this.runner.selectOption(Number(event.key) - 1);
      event.preventDefault();
    } else if (event.key === 'Enter') {
      void this.runner.submitAndAdvance();
      event.preventDefault();
    }
  }

  private renderCompleted(doc: Document, state: RunnerState): void {
    this.root.appendChild(el(doc, 'h1', {}, 'Test complete'));
    const result = state.result;
    if (!result) {
      return;
    }
    const summary = el(doc, 'dl', { id: 'result' });
    if (result.theta_mean !== undefined) {
      summary.appendChild(el(doc, 'dt', {}, 'Ability score'));
      summary.appendChild(
        el(
          doc,
          'dd',
          { id: 'theta' },
          `${result.theta_mean.toFixed(2)} ± ${result.theta_se?.toFixed(2) ?? '?'}`,
        ),
      );
    }
    if (result.raw_correctness !== undefined) {
      summary.appendChild(el(doc, 'dt', {}, 'Questions answered correctly'));
      summary.appendChild(
        el(
          doc,
          'dd',
          { id: 'raw' },
          `${Math.round(result.raw_correctness * 100)}%`,
        ),
      );
    }
    summary.appendChild(el(doc, 'dt', {}, 'Questions administered'));
    summary.appendChild(el(doc, 'dd', {}, String(result.administered)));
    this.root.appendChild(summary);
  }

  private renderError(doc: Document, state: RunnerState): void {
    this.root.appendChild(el(doc, 'h1', {}, 'Connection problem'));
    this.root.appendChild(el(doc, 'p', { class: 'error' }, state.error ?? 'unknown'));
    const retry = el(doc, 'button', { id: 'retry', type: 'button' }, 'Retry');
    retry.addEventListener('click', () => void this.runner.retry());
    this.root.appendChild(retry);
  }
}

import { AnswerResponse, FinalResult, PublicItemView } from '../src/api.js';

export function makeItem(position: number, total = 3): PublicItemView {
  return {
    item_id: `i${position}`,
    stimulus: { image_ref: '', alt_text: `stimulus ${position}` },
    question: `question ${position}`,
    options: ['alpha', 'beta', 'gamma', 'delta'],
    position,
    total,
  };
}

export interface ScriptedCall {
  url: string;
  method: string;
  body: unknown;
}

/** Fetch stub driving the runner through a fixed linear session. */
export class FakeService {
  calls: ScriptedCall[] = [];
  answered = 0;
  private readonly total: number;
  private readonly result: FinalResult;

  constructor(total = 3, result?: FinalResult) {
    this.total = total;
    this.result = result ?? {
      administered: total,
      theta_mean: 0.42,
      theta_se: 0.31,
      raw_correctness: 0.67,
    };
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.calls.push({ url, method, body });

    if (url.endsWith('/api/v1/sessions') && method === 'POST') {
      return this.json(200, {
        session_id: 'sess-1',
        item: makeItem(1, this.total),
        progress: { answered: 0, total: this.total },
      });
    }
    if (url.includes('/answers') && method === 'POST') {
      const expected = `i${this.answered + 1}`;
      if (body.item_id !== expected) {
        return this.json(409, { detail: 'out-of-order answer' });
      }
      this.answered += 1;
      const done = this.answered >= this.total;
      const response: AnswerResponse = {
        status: done ? 'completed' : 'active',
        next_item: done ? null : makeItem(this.answered + 1, this.total),
        progress: { answered: this.answered, total: this.total },
      };
      return this.json(200, response);
    }
    if (url.endsWith('/result')) {
      if (this.answered < this.total) {
        return this.json(409, { detail: 'session not completed' });
      }
      return this.json(200, this.result);
    }
    if (url.includes('/api/v1/sessions/') && method === 'GET') {
      const done = this.answered >= this.total;
      return this.json(200, {
        status: done ? 'completed' : 'active',
        item: done ? null : makeItem(this.answered + 1, this.total),
        progress: { answered: this.answered, total: this.total },
      });
    }
    return this.json(404, { detail: `unscripted: ${method} ${url}` });
  };

  private json(status: number, payload: unknown): Response {
    return new Response(JSON.stringify(payload), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }
}

export class MemoryStorage {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

export async function waitFor(
  predicate: () => boolean,
  timeoutMs = 5000,
): Promise<void> {
  const start = Date.now();
  while (!predicate()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error('waitFor timed out');
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

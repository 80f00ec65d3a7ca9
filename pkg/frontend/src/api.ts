/** Typed client for the session service; the server is the single source of
 * truth for all test state. */

export interface PublicItemView {
  item_id: string;
  stimulus: { image_ref: string; alt_text: string };
  question: string;
  options: string[];
  position: number;
  total: number;
}

export interface Progress {
  answered: number;
  total: number;
}

export interface StartResponse {
  session_id: string;
  item: PublicItemView;
  progress: Progress;
}

export interface AnswerResponse {
  status: 'active' | 'completed';
  next_item: PublicItemView | null;
  progress: Progress;
}

export interface SessionSnapshot {
  status: 'active' | 'completed';
  item: PublicItemView | null;
  progress: Progress;
}

export interface FinalResult {
  administered: number;
  theta_mean?: number;
  theta_se?: number;
  raw_correctness?: number;
  coverage?: Record<string, { covered: string[]; total: number }>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        // non-JSON error body, keep raw text
      }
      throw new ApiError(response.status, String(detail));
    }
    return JSON.parse(text) as T;
  }

  createSession(bankId: string): Promise<StartResponse> {
    return this.request<StartResponse>('/api/v1/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ bank_id: bankId }),
    });
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request<SessionSnapshot>(`/api/v1/sessions/${sessionId}`);
  }

  submitAnswer(
    sessionId: string,
    itemId: string,
    selectedIndex: number,
  ): Promise<AnswerResponse> {
    return this.request<AnswerResponse>(`/api/v1/sessions/${sessionId}/answers`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ item_id: itemId, selected_index: selectedIndex }),
    });
  }

  getResult(sessionId: string): Promise<FinalResult> {
    return this.request<FinalResult>(`/api/v1/sessions/${sessionId}/result`);
  }
}

/** Typed client for the session service; the server is the single source of
 * truth for all test state. */
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = 'ApiError';
    }
}
export class ApiClient {
    constructor(baseUrl = '', fetchFn = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async request(path, init) {
        let response;
        try {
            response = await this.fetchFn(`${this.baseUrl}${path}`, init);
        }
        catch (err) {
            throw new ApiError(0, `service unreachable: ${String(err)}`);
        }
        const text = await response.text();
        if (!response.ok) {
            let detail = text;
            try {
                detail = JSON.parse(text).detail ?? text;
            }
            catch {
                // non-JSON error body, keep raw text
            }
            throw new ApiError(response.status, String(detail));
        }
        return JSON.parse(text);
    }
    createSession(bankId) {
        return this.request('/api/v1/sessions', {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ bank_id: bankId }),
        });
    }
    getSession(sessionId) {
        return this.request(`/api/v1/sessions/${sessionId}`);
    }
    submitAnswer(sessionId, itemId, selectedIndex) {
        return this.request(`/api/v1/sessions/${sessionId}/answers`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ item_id: itemId, selected_index: selectedIndex }),
        });
    }
    getResult(sessionId) {
        return this.request(`/api/v1/sessions/${sessionId}/result`);
    }
}

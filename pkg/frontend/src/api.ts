/**
 * Thin typed client over the advisor service endpoints. The fetch
 * implementation is injectable so tests can run against a fixture service.
 */
import type {
  DraftRequest,
  Explanation,
  FeedbackDraft,
  Prediction,
  StudentSummary,
  WhatIfRequest,
  WhatIfResponse,
} from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep the status text when the body is not JSON
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string = '',
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    return headers;
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'GET',
      headers: this.headers(),
    }).then((r) => parse<T>(r));
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: this.headers(),
      body: JSON.stringify(body),
    }).then((r) => parse<T>(r));
  }

  async listStudents(): Promise<StudentSummary[]> {
    const body = await this.get<{ students: StudentSummary[] }>('/students');
    return body.students;
  }

  prediction(learnerId: string): Promise<Prediction> {
    return this.get(`/students/${encodeURIComponent(learnerId)}/prediction`);
  }

  explanation(learnerId: string): Promise<Explanation> {
    return this.get(`/students/${encodeURIComponent(learnerId)}/explanation`);
  }

  whatIf(learnerId: string, request: WhatIfRequest): Promise<WhatIfResponse> {
    return this.post(`/students/${encodeURIComponent(learnerId)}/whatif`, request);
  }

  draftFeedback(learnerId: string, request: DraftRequest): Promise<FeedbackDraft> {
    return this.post(`/students/${encodeURIComponent(learnerId)}/feedback/draft`, request);
  }

  approve(draftId: string, note: string): Promise<FeedbackDraft> {
    return this.post(`/feedback/${encodeURIComponent(draftId)}/approve`, { note });
  }
}

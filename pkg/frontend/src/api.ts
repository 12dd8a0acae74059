import {
  ApiError,
  GenerateRequest,
  GenerateResponse,
  SessionState,
} from './types';

type FetchLike = typeof fetch;

/** Thin typed client for the generation service. */
export class ApiClient {
  constructor(
    public readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request('/healthz');
  }

  createSession(styleToken: number, tempoBpm: number): Promise<SessionState> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ style_token: styleToken, tempo_bpm: tempoBpm }),
    });
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}`);
  }

  generate(sessionId: string, req: GenerateRequest): Promise<GenerateResponse> {
    return this.request(`/sessions/${sessionId}/generate`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(req),
    });
  }

  setMuted(sessionId: string, stemId: string, muted: boolean): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}/stems/${stemId}/mute`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ muted }),
    });
  }

  deleteStem(sessionId: string, stemId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}/stems/${stemId}`, { method: 'DELETE' });
  }

  stemWavUrl(sessionId: string, stemId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/stems/${stemId}.wav`;
  }

  mixWavUrl(sessionId: string): string {
    // cache-bust so a mute/delete is heard immediately
    return `${this.baseUrl}/sessions/${sessionId}/mix.wav?v=${Date.now()}`;
  }
}

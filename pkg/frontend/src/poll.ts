import { ApiClient } from './api';
import { SessionState } from './types';

/**
 * Poll a session until its pending flag clears. The service runs generation
 * synchronously, so this mostly covers reconnects and multi-tab cases.
 */
export function pollUntilIdle(
  api: ApiClient,
  sessionId: string,
  intervalMs = 500,
  timeoutMs = 120_000,
): Promise<SessionState> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const tick = async () => {
      try {
        const state = await api.getSession(sessionId);
        if (!state.pending) {
          resolve(state);
          return;
        }
        if (Date.now() - started > timeoutMs) {
          reject(new Error('timed out waiting for generation'));
          return;
        }
        setTimeout(tick, intervalMs);
      } catch (err) {
        reject(err);
      }
    };
    tick();
  });
}

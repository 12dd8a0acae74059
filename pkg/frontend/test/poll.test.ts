import { describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api';
import { pollUntilIdle } from '../src/poll';
import { SessionState } from '../src/types';

function state(pending: boolean): SessionState {
  return {
    session_id: 's1',
    style_token: 0,
    tempo_bpm: 120,
    clip_frames: 96,
    stems: [],
    history: [],
    pending,
  };
}

function apiReturning(states: SessionState[]): ApiClient {
  let i = 0;
  return {
    getSession: vi.fn(async () => states[Math.min(i++, states.length - 1)]),
  } as unknown as ApiClient;
}

describe('pollUntilIdle', () => {
  it('resolves immediately when the session is idle', async () => {
    const api = apiReturning([state(false)]);
    const s = await pollUntilIdle(api, 's1', 1);
    expect(s.pending).toBe(false);
    expect(api.getSession).toHaveBeenCalledTimes(1);
  });

  it('keeps polling until pending clears', async () => {
    const api = apiReturning([state(true), state(true), state(false)]);
    const s = await pollUntilIdle(api, 's1', 1);
    expect(s.pending).toBe(false);
    expect(api.getSession).toHaveBeenCalledTimes(3);
  });

  it('rejects when the service errors', async () => {
    const api = {
      getSession: vi.fn(async () => {
        throw new Error('gone');
      }),
    } as unknown as ApiClient;
    await expect(pollUntilIdle(api, 's1', 1)).rejects.toThrow('gone');
  });

  it('rejects after the timeout while still pending', async () => {
    const api = apiReturning([state(true)]);
    await expect(pollUntilIdle(api, 's1', 1, 5)).rejects.toThrow(/timed out/);
  });
});

/** Wire types mirroring the generation service's JSON bodies. */

export interface Lane {
  stem_id: string;
  stem_type: string;
  muted: boolean;
  /** detected per-frame activity, 0/1 */
  activity: number[];
  /** the mask sent with the generation request, if any */
  requested_mask: number[] | null;
  /** per-frame RMS envelope for waveform display */
  rms_envelope: number[];
  wav_url: string;
}

export interface HistoryEntry {
  action: 'generate';
  request_id: string;
  stem_ids: string[];
  stem_types: string[];
  condition_on: string[];
  seed: number;
}

export interface SessionState {
  session_id: string;
  style_token: number;
  tempo_bpm: number;
  clip_frames: number;
  stems: Lane[];
  history: HistoryEntry[];
  pending: boolean;
}

export interface GenerateStem {
  stem_type: string;
  activity_mask?: number[] | null;
}

export interface GenerateRequest {
  request_id: string;
  stems: GenerateStem[];
  condition_on?: string[];
  steps?: number;
  cfg_scale?: number;
  seed?: number;
}

export interface GenerateResponse {
  session: SessionState;
  new_stem_ids: string[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

import { ApiClient } from './api';
import { MaskEditor } from './mask';
import { GenerateStem, HistoryEntry, Lane, SessionState } from './types';

export interface LaneView {
  lane: Lane;
  /** label of the generation action that produced this stem */
  provenance: string;
  maskEditor: MaskEditor;
}

/**
 * Client-side projection of server session state plus unsent mask edits.
 * Every acknowledged mutation replaces the projection with the server's
 * response, so the UI can never drift from the source of truth.
 */
export class SessionStore {
  state: SessionState | null = null;
  lanes: LaneView[] = [];
  pendingGeneration = false;
  private editors = new Map<string, MaskEditor>();
  private requestCounter = 0;

  constructor(private readonly api: ApiClient) {}

  get sessionId(): string {
    if (!this.state) throw new Error('no session connected');
    return this.state.session_id;
  }

  async create(styleToken: number, tempoBpm: number): Promise<void> {
    this.accept(await this.api.createSession(styleToken, tempoBpm));
  }

  async connect(sessionId: string): Promise<void> {
    this.accept(await this.api.getSession(sessionId));
  }

  async refresh(): Promise<void> {
    this.accept(await this.api.getSession(this.sessionId));
  }

  /**
   * Request new stems. Client-side validation guards the service invariants;
   * a failure here never reaches the network.
   */
  async generate(stemTypes: string[], conditionOn: string[] = []): Promise<string[]> {
    if (!this.state) throw new Error('no session connected');
    if (stemTypes.length === 0) throw new Error('select at least one stem type');
    if (this.pendingGeneration) throw new Error('generation in progress');
    const known = new Set(this.state.stems.map((s) => s.stem_id));
    for (const id of conditionOn) {
      if (!known.has(id)) throw new Error(`unknown stem id ${id}`);
    }
    const stems: GenerateStem[] = stemTypes.map((t) => {
      const editor = this.editors.get(`next:${t}`);
      return editor && editor.dirty
        ? { stem_type: t, activity_mask: editor.apply() }
        : { stem_type: t };
    });
    const requestId = `${this.sessionId}-${++this.requestCounter}-${Date.now()}`;
    this.pendingGeneration = true;
    try {
      const res = await this.api.generate(this.sessionId, {
        request_id: requestId,
        stems,
        condition_on: conditionOn,
      });
      this.accept(res.session);
      return res.new_stem_ids;
    } finally {
      this.pendingGeneration = false;
    }
  }

  async setMuted(stemId: string, muted: boolean): Promise<void> {
    this.accept(await this.api.setMuted(this.sessionId, stemId, muted));
  }

  async remove(stemId: string): Promise<void> {
    this.accept(await this.api.deleteStem(this.sessionId, stemId));
  }

  /** Mask editor for the next generation of the given stem type. */
  nextMaskEditor(stemType: string): MaskEditor {
    if (!this.state) throw new Error('no session connected');
    const key = `next:${stemType}`;
    let editor = this.editors.get(key);
    if (!editor) {
      editor = new MaskEditor(this.state.clip_frames);
      this.editors.set(key, editor);
    }
    return editor;
  }

  audibleCount(): number {
    return this.state ? this.state.stems.filter((s) => !s.muted).length : 0;
  }

  private accept(state: SessionState): void {
    this.state = state;
    const provenanceById = new Map<string, string>();
    state.history.forEach((h: HistoryEntry, i: number) => {
      const label = h.condition_on.length
        ? `gen #${i + 1} on [${h.condition_on.join(', ')}]`
        : `gen #${i + 1} from scratch`;
      for (const id of h.stem_ids) provenanceById.set(id, label);
    });
    this.lanes = state.stems.map((lane) => {
      const key = `lane:${lane.stem_id}`;
      let editor = this.editors.get(key);
      if (!editor) {
        editor = new MaskEditor(state.clip_frames, lane.requested_mask ?? lane.activity);
        this.editors.set(key, editor);
      }
      return {
        lane,
        provenance: provenanceById.get(lane.stem_id) ?? 'unknown',
        maskEditor: editor,
      };
    });
  }
}

/**
 * Per-lane activity mask editor model: binary frames, drag-to-paint with an
 * explicit apply. Edits never mutate served stems; applying only produces the
 * mask for the next generation request.
 */
export class MaskEditor {
  private frames: number[];
  private dragValue: 0 | 1 | null = null;
  private dragStart = -1;
  dirty = false;

  constructor(
    public readonly length: number,
    initial?: number[] | null,
  ) {
    if (length <= 0) throw new Error('mask length must be positive');
    if (initial && initial.length !== length) {
      throw new Error(`initial mask has ${initial.length} frames, expected ${length}`);
    }
    this.frames = initial ? initial.map((v) => (v > 0 ? 1 : 0)) : new Array(length).fill(1);
  }

  get values(): number[] {
    return [...this.frames];
  }

  /** Begin a drag; the painted value is the inverse of the frame hit. */
  beginDrag(frame: number): void {
    this.check(frame);
    this.dragValue = this.frames[frame] > 0 ? 0 : 1;
    this.dragStart = frame;
    this.paintTo(frame);
  }

  /** Extend the drag to the given frame, painting the whole span. */
  paintTo(frame: number): void {
    this.check(frame);
    if (this.dragValue === null) throw new Error('paintTo outside a drag');
    const lo = Math.min(this.dragStart, frame);
    const hi = Math.max(this.dragStart, frame);
    for (let i = lo; i <= hi; i++) {
      if (this.frames[i] !== this.dragValue) {
        this.frames[i] = this.dragValue;
        this.dirty = true;
      }
    }
  }

  endDrag(): void {
    this.dragValue = null;
    this.dragStart = -1;
  }

  /** Consume the edit: returns the mask and clears the dirty flag. */
  apply(): number[] {
    this.dirty = false;
    return this.values;
  }

  reset(to?: number[] | null): void {
    this.frames = to
      ? to.map((v) => (v > 0 ? 1 : 0))
      : new Array(this.length).fill(1);
    this.dirty = false;
    this.endDrag();
  }

  private check(frame: number): void {
    if (!Number.isInteger(frame) || frame < 0 || frame >= this.length) {
      throw new Error(`frame ${frame} outside [0, ${this.length})`);
    }
  }
}

import { describe, expect, it } from 'vitest';

import { MaskEditor } from '../src/mask';

describe('MaskEditor', () => {
  it('starts all-active without an initial mask', () => {
    const m = new MaskEditor(4);
    expect(m.values).toEqual([1, 1, 1, 1]);
    expect(m.dirty).toBe(false);
  });

  it('binarizes the initial mask', () => {
    const m = new MaskEditor(4, [0, 2, -1, 1]);
    expect(m.values).toEqual([0, 1, 0, 1]);
  });

  it('rejects bad constructor arguments', () => {
    expect(() => new MaskEditor(0)).toThrow(/positive/);
    expect(() => new MaskEditor(4, [1, 1])).toThrow(/expected 4/);
  });

  it('paints the inverse of the hit frame across the drag span', () => {
    const m = new MaskEditor(8);
    m.beginDrag(2); // frame was active -> paint silence
    m.paintTo(5);
    m.endDrag();
    expect(m.values).toEqual([1, 1, 0, 0, 0, 0, 1, 1]);
    expect(m.dirty).toBe(true);
  });

  it('supports dragging backwards', () => {
    const m = new MaskEditor(6);
    m.beginDrag(4);
    m.paintTo(1);
    m.endDrag();
    expect(m.values).toEqual([1, 0, 0, 0, 0, 1]);
  });

  it('re-dragging a silent frame paints activity', () => {
    const m = new MaskEditor(4, [0, 0, 0, 0]);
    m.beginDrag(1);
    m.paintTo(2);
    m.endDrag();
    expect(m.values).toEqual([0, 1, 1, 0]);
  });

  it('apply returns the mask and clears dirty', () => {
    const m = new MaskEditor(3);
    m.beginDrag(0);
    m.endDrag();
    expect(m.dirty).toBe(true);
    expect(m.apply()).toEqual([0, 1, 1]);
    expect(m.dirty).toBe(false);
  });

  it('values returns a copy, not live state', () => {
    const m = new MaskEditor(3);
    const v = m.values;
    v[0] = 0;
    expect(m.values).toEqual([1, 1, 1]);
  });

  it('reset restores all-active or a given mask', () => {
    const m = new MaskEditor(3);
    m.beginDrag(1);
    m.endDrag();
    m.reset();
    expect(m.values).toEqual([1, 1, 1]);
    expect(m.dirty).toBe(false);
    m.reset([0, 1, 0]);
    expect(m.values).toEqual([0, 1, 0]);
  });

  it('rejects painting outside bounds or outside a drag', () => {
    const m = new MaskEditor(3);
    expect(() => m.beginDrag(3)).toThrow(/outside/);
    expect(() => m.beginDrag(-1)).toThrow(/outside/);
    expect(() => m.paintTo(1)).toThrow(/outside a drag/);
  });
});

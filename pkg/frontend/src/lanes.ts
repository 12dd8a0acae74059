import { Lane } from './types';

/** SVG polyline points for a per-frame RMS envelope, mirrored around midline. */
export function envelopePoints(
  envelope: number[],
  width: number,
  height: number,
): string {
  if (envelope.length === 0) return '';
  const peak = Math.max(...envelope, 1e-9);
  const mid = height / 2;
  const step = width / envelope.length;
  const top = envelope.map((v, i) => `${(i * step).toFixed(1)},${(mid - (v / peak) * mid).toFixed(1)}`);
  const bottom = envelope
    .map((v, i) => `${(i * step).toFixed(1)},${(mid + (v / peak) * mid).toFixed(1)}`)
    .reverse();
  return [...top, ...bottom].join(' ');
}

/** Silent spans [start, end) of a binary mask, for overlay rectangles. */
export function silentSpans(mask: number[]): Array<[number, number]> {
  const spans: Array<[number, number]> = [];
  let start = -1;
  for (let i = 0; i <= mask.length; i++) {
    const silent = i < mask.length && mask[i] === 0;
    if (silent && start < 0) start = i;
    if (!silent && start >= 0) {
      spans.push([start, i]);
      start = -1;
    }
  }
  return spans;
}

/** Fraction of active frames within [start, end). */
export function activityRatio(lane: Lane, start: number, end: number): number {
  const lo = Math.max(0, start);
  const hi = Math.min(lane.activity.length, end);
  if (hi <= lo) return 0;
  let active = 0;
  for (let i = lo; i < hi; i++) active += lane.activity[i] > 0 ? 1 : 0;
  return active / (hi - lo);
}

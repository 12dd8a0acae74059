import { ApiClient, } from './api';
import { envelopePoints, silentSpans } from './lanes';
import { SessionStore } from './state';
import { ApiError } from './types';

const STEM_TYPES = ['drums', 'bass', 'keys', 'guitar', 'pad', 'lead'];
const TEMPOS = [60, 75, 90, 105, 120, 135, 150];

const api = new ApiClient(import.meta.env.VITE_API_URL ?? '');
const store = new SessionStore(api);

const app = document.getElementById('app')!;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

function banner(message: string, kind: 'error' | 'info' = 'error'): void {
  const box = document.getElementById('banner')!;
  box.textContent = message;
  box.className = kind;
  box.style.display = message ? 'block' : 'none';
}

async function guard(action: () => Promise<void>): Promise<void> {
  banner('');
  try {
    await action();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      banner('generation in progress; try again when it finishes');
    } else {
      banner(err instanceof Error ? err.message : String(err));
    }
  }
  render();
}

function renderLane(view: ReturnType<SessionStore['lanes']['at']> & object): HTMLElement {
  const { lane, provenance, maskEditor } = view;
  const width = 576;
  const height = 64;
  const frames = lane.rms_envelope.length;
  const step = width / frames;

  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('width', String(width));
  svg.setAttribute('height', String(height));
  svg.setAttribute('class', 'wave');
  const poly = document.createElementNS('http://www.w3.org/2000/svg', 'polygon');
  poly.setAttribute('points', envelopePoints(lane.rms_envelope, width, height));
  poly.setAttribute('class', lane.muted ? 'env muted' : 'env');
  svg.append(poly);
  for (const [s, e] of silentSpans(maskEditor.values)) {
    const rect = document.createElementNS('http://www.w3.org/2000/svg', 'rect');
    rect.setAttribute('x', String(s * step));
    rect.setAttribute('width', String((e - s) * step));
    rect.setAttribute('y', '0');
    rect.setAttribute('height', String(height));
    rect.setAttribute('class', 'silent');
    svg.append(rect);
  }

  const frameAt = (ev: MouseEvent) => {
    const rect = svg.getBoundingClientRect();
    const f = Math.floor(((ev.clientX - rect.left) / rect.width) * frames);
    return Math.max(0, Math.min(frames - 1, f));
  };
  let dragging = false;
  svg.addEventListener('mousedown', (ev) => {
    dragging = true;
    maskEditor.beginDrag(frameAt(ev));
    render();
  });
  svg.addEventListener('mousemove', (ev) => {
    if (!dragging) return;
    maskEditor.paintTo(frameAt(ev));
    render();
  });
  window.addEventListener('mouseup', () => {
    if (dragging) {
      dragging = false;
      maskEditor.endDrag();
    }
  });

  const audio = el('audio', { controls: '', src: api.stemWavUrl(store.sessionId, lane.stem_id) });
  const muteBtn = el('button', {}, lane.muted ? 'unmute' : 'mute');
  muteBtn.onclick = () => guard(() => store.setMuted(lane.stem_id, !lane.muted));
  const removeBtn = el('button', {}, 'remove');
  removeBtn.onclick = () => guard(() => store.remove(lane.stem_id));

  return el(
    'div',
    { class: 'lane' },
    el('div', { class: 'lane-head' },
      el('strong', {}, lane.stem_type),
      el('span', { class: 'prov' }, ` ${provenance}`),
      muteBtn,
      removeBtn,
    ),
    svg,
    audio,
  );
}

function render(): void {
  const root = document.getElementById('session')!;
  root.replaceChildren();
  if (!store.state) {
    root.append(el('p', {}, 'No session. Create one to start.'));
    return;
  }
  root.append(
    el('p', {},
      `session ${store.state.session_id.slice(0, 8)} | style ${store.state.style_token} | ` +
      `${store.state.tempo_bpm} bpm | ${store.state.stems.length} stems`),
  );
  for (const view of store.lanes) root.append(renderLane(view));

  const mix = el('div', { class: 'mix' });
  const mixBtn = el('button', {}, 'audition mix');
  mixBtn.onclick = () =>
    guard(async () => {
      if (store.audibleCount() === 0) throw new Error('all lanes are muted; nothing to mix');
      const audio = new Audio(api.mixWavUrl(store.sessionId));
      await audio.play();
    });
  mix.append(mixBtn);
  root.append(mix);

  const history = el('ol', { class: 'history' });
  for (const h of store.state.history) {
    history.append(el('li', {}, `${h.stem_types.join('+')} ${h.condition_on.length ? `on [${h.condition_on.join(',')}]` : 'from scratch'}`));
  }
  root.append(el('h3', {}, 'history'), history);

  const genPanel = document.getElementById('generate')! as HTMLFieldSetElement;
  genPanel.disabled = store.pendingGeneration;
}

function buildControls(): void {
  const styleInput = el('input', { type: 'number', min: '0', max: '15', value: '0' });
  const tempoSelect = el('select', {});
  for (const t of TEMPOS) tempoSelect.append(el('option', { value: String(t) }, `${t} bpm`));
  const createBtn = el('button', {}, 'create session');
  createBtn.onclick = () =>
    guard(() => store.create(Number(styleInput.value), Number(tempoSelect.value)));

  const checks = STEM_TYPES.map((t) => {
    const box = el('input', { type: 'checkbox', id: `stem-${t}` });
    return { t, box };
  });
  const conditionAll = el('input', { type: 'checkbox', id: 'condition' });
  const genBtn = el('button', {}, 'generate');
  genBtn.onclick = () =>
    guard(async () => {
      const types = checks.filter((c) => c.box.checked).map((c) => c.t);
      const conditionOn = conditionAll.checked
        ? (store.state?.stems.filter((s) => !s.muted).map((s) => s.stem_id) ?? [])
        : [];
      await store.generate(types, conditionOn);
    });

  const genPanel = el('fieldset', { id: 'generate' },
    el('legend', {}, 'generate'),
    ...checks.flatMap(({ t, box }) => [box, el('label', { for: `stem-${t}` }, t)]),
    conditionAll,
    el('label', { for: 'condition' }, 'condition on current mix'),
    genBtn,
  );

  app.append(
    el('div', { id: 'banner' }),
    el('div', { class: 'controls' }, styleInput, tempoSelect, createBtn),
    genPanel,
    el('div', { id: 'session' }),
  );
}

buildControls();
render();

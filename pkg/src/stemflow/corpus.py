"""Procedural toy-music corpus: composition specs, synthesis, and disk layout.

Every composition is a set of 3-6 distinct-type stems sharing tempo, beat
phase, and a global style token. A stem is a strictly periodic latent-domain
pattern (beat period = round(720 / bpm) frames) whose envelope shape depends
on the stem type, whose latent direction depends on (stem type, style), and
whose activity plan can silence frame spans. Everything is a deterministic
function of the spec fields, so corpus builds are reproducible byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec
from .codec import LATENT_DIM

STEM_TYPES = ("drums", "bass", "keys", "guitar", "pad", "lead")
TEMPO_GRID = (60, 75, 90, 105, 120, 135, 150)
NUM_STYLES = 16

DEFAULT_CLIP_FRAMES = 96
LOUDNESS_RANGE_DB = (-30.0, -18.0)

LATENT_MAGIC = b"SFL1"


def frames_per_beat(tempo_bpm: int) -> int:
    """Beat period in latent frames at the 12 Hz frame rate."""
    return int(round(60.0 * codec.FRAME_RATE / tempo_bpm))


@dataclass
class StemSpec:
    stem_type: str
    pattern_seed: int
    loudness_db: float
    # silent frame spans as half-open [start, end) intervals
    activity_plan: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class CompositionSpec:
    tempo: int
    phase: int
    style_seed: int
    stems: list[StemSpec]
    clip_frames: int = DEFAULT_CLIP_FRAMES

    def validate(self) -> None:
        if self.tempo not in TEMPO_GRID:
            raise ValueError(f"tempo {self.tempo} not on grid {TEMPO_GRID}")
        period = frames_per_beat(self.tempo)
        if not 0 <= self.phase < period:
            raise ValueError(f"phase {self.phase} outside [0, {period})")
        if not 0 <= self.style_seed < NUM_STYLES:
            raise ValueError(f"style_seed {self.style_seed} outside [0, {NUM_STYLES})")
        if not self.stems:
            raise ValueError("composition has no stems")
        if not 3 <= len(self.stems) <= 8:
            raise ValueError(f"stem count {len(self.stems)} outside [3, 8]")
        types = [s.stem_type for s in self.stems]
        if len(set(types)) != len(types):
            raise ValueError("stem types within a composition must be distinct")
        for s in self.stems:
            if s.stem_type not in STEM_TYPES:
                raise ValueError(f"unknown stem type {s.stem_type!r}")


def _beat_envelope(stem_type: str, period: int) -> np.ndarray:
    """Within-beat amplitude envelope; peak 1.0 strictly at the onset frame."""
    p = np.arange(period, dtype=np.float64)
    if stem_type == "drums":
        env = 0.3 + 0.7 * np.exp(-1.2 * p)
    elif stem_type == "bass":
        env = np.where(p < period / 2, 0.8, 0.45)
        env[0] = 1.0
    elif stem_type == "keys":
        env = np.full(period, 0.4)
        env[2] = 0.7
        env[0] = 1.0
    elif stem_type == "guitar":
        env = np.full(period, 0.45)
        env[3] = 0.7
        env[0] = 1.0
    elif stem_type == "pad":
        env = 0.75 - 0.35 * p / period
        env[0] = 1.0
    elif stem_type == "lead":
        env = 0.45 + 0.35 * p / max(period - 1, 1)
        env[0] = 1.0
    else:
        raise ValueError(f"unknown stem type {stem_type!r}")
    return env


def _stem_direction(stem_type: str, style_seed: int) -> np.ndarray:
    """Unit latent direction: the stem type's own channel tilted by the style."""
    type_idx = STEM_TYPES.index(stem_type)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([style_seed, type_idx, 7])))
    tilt = rng.standard_normal(LATENT_DIM)
    tilt /= np.linalg.norm(tilt)
    u = np.zeros(LATENT_DIM)
    u[type_idx] = 1.0
    u = u + 0.35 * tilt
    return u / np.linalg.norm(u)


def synthesize_stem_latent(spec: CompositionSpec, stem: StemSpec) -> np.ndarray:
    """Latent frames (T, D) of one stem; waveform = codec.decode of this."""
    t_frames = spec.clip_frames
    period = frames_per_beat(spec.tempo)
    env = _beat_envelope(stem.stem_type, period)

    jitter_rng = np.random.Generator(
        np.random.PCG64(
            np.random.SeedSequence(
                [spec.tempo, spec.phase, spec.style_seed, STEM_TYPES.index(stem.stem_type), stem.pattern_seed]
            )
        )
    )
    jitter = 1.0 + 0.08 * jitter_rng.uniform(-1.0, 1.0, size=period)

    amp = np.empty(t_frames)
    for f in range(t_frames):
        amp[f] = env[(f - spec.phase) % period] * jitter[(f - spec.phase) % period]
    active = np.ones(t_frames, dtype=bool)
    for start, end in stem.activity_plan:
        active[max(0, start) : min(t_frames, end)] = False
    amp[~active] = 0.0

    latent = amp[:, None] * _stem_direction(stem.stem_type, spec.style_seed)[None, :]
    if active.any():
        # orthonormal basis: waveform RMS over active frames is
        # sqrt(mean ||latent_f||^2 / HOP); scale it exactly to the target
        current = np.sqrt(np.mean(np.sum(latent[active] ** 2, axis=1)) / codec.HOP)
        latent *= codec.db_to_amplitude(stem.loudness_db) / current
    return latent


def synthesize_composition(spec: CompositionSpec) -> list[np.ndarray]:
    """Waveforms of all stems in the composition, in spec order."""
    spec.validate()
    return [codec.decode(synthesize_stem_latent(spec, s)) for s in spec.stems]


def activity_mask_for(spec: CompositionSpec, stem: StemSpec) -> np.ndarray:
    bits = np.ones(spec.clip_frames, dtype=np.uint8)
    for start, end in stem.activity_plan:
        bits[max(0, start) : min(spec.clip_frames, end)] = 0
    return bits


# ---------------------------------------------------------------------------
# latent file format: 16-byte header {magic, version, T, D}, then row-major
# little-endian float32 frames
# ---------------------------------------------------------------------------


def write_latent(path: str | Path, latent: np.ndarray) -> None:
    latent = np.asarray(latent, dtype="<f4")
    t, d = latent.shape
    header = LATENT_MAGIC + np.array([1, t, d], dtype="<u4").tobytes()
    Path(path).write_bytes(header + latent.tobytes())


def read_latent(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != LATENT_MAGIC:
        raise ValueError(f"{path}: bad latent magic")
    version, t, d = np.frombuffer(raw[4:16], dtype="<u4")
    if version != 1:
        raise ValueError(f"{path}: unsupported latent version {version}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(t, d).astype(np.float64)


# ---------------------------------------------------------------------------
# corpus build
# ---------------------------------------------------------------------------


@dataclass
class CorpusConfig:
    num_compositions: int = 512
    clip_frames: int = DEFAULT_CLIP_FRAMES
    seed: int = 0
    partial_activity_prob: float = 0.5


def sample_composition_spec(cfg: CorpusConfig, rng: np.random.Generator) -> CompositionSpec:
    tempo = int(rng.choice(TEMPO_GRID))
    period = frames_per_beat(tempo)
    phase = int(rng.integers(0, period))
    style_seed = int(rng.integers(0, NUM_STYLES))
    n_stems = int(rng.integers(3, min(len(STEM_TYPES), 6) + 1))
    types = rng.choice(len(STEM_TYPES), size=n_stems, replace=False)
    stems = []
    for type_idx in types:
        plan: list[tuple[int, int]] = []
        if rng.random() < cfg.partial_activity_prob:
            length = int(rng.integers(cfg.clip_frames // 8, cfg.clip_frames // 2 + 1))
            start = int(rng.integers(0, cfg.clip_frames - length + 1))
            plan.append((start, start + length))
        stems.append(
            StemSpec(
                stem_type=STEM_TYPES[int(type_idx)],
                pattern_seed=int(rng.integers(0, 2**31)),
                loudness_db=float(rng.uniform(*LOUDNESS_RANGE_DB)),
                activity_plan=plan,
            )
        )
    return CompositionSpec(tempo=tempo, phase=phase, style_seed=style_seed, stems=stems, clip_frames=cfg.clip_frames)


def build_corpus(cfg: CorpusConfig, out_dir: str | Path) -> Path:
    """Write latents plus a line-delimited JSON manifest; returns manifest path."""
    out_dir = Path(out_dir)
    latent_dir = out_dir / "latents"
    latent_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    records = []
    for comp_id in range(cfg.num_compositions):
        spec = sample_composition_spec(cfg, rng)
        stem_records = []
        for k, stem in enumerate(spec.stems):
            latent = synthesize_stem_latent(spec, stem)
            rel = f"latents/{comp_id:05d}_{k}_{stem.stem_type}.slat"
            write_latent(out_dir / rel, latent)
            stem_records.append(
                {
                    "stem_type": stem.stem_type,
                    "latent_path": rel,
                    "mask": "".join(str(b) for b in activity_mask_for(spec, stem)),
                    "loudness_db": round(stem.loudness_db, 6),
                    "pattern_seed": stem.pattern_seed,
                    "activity_plan": [list(span) for span in stem.activity_plan],
                }
            )
        records.append(
            {
                "composition_id": comp_id,
                "tempo": spec.tempo,
                "phase": spec.phase,
                "style_seed": spec.style_seed,
                "clip_frames": spec.clip_frames,
                "stems": stem_records,
            }
        )

    manifest = out_dir / "manifest.jsonl"
    with manifest.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def read_manifest(manifest_path: str | Path) -> list[dict]:
    with Path(manifest_path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]

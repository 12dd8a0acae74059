"""HTTP service for session-based iterative stem generation.

Sessions are event-sourced: every mutation is appended to a per-session
JSONL history file, and in-memory state is always reproducible by replaying
that file from empty. Latents are stored inline (base64) so a history file
is self-contained.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import codec, wavio
from .corpus import DEFAULT_CLIP_FRAMES, NUM_STYLES, STEM_TYPES, TEMPO_GRID
from .model import ModelConfig
from .sampling import SampleConfig, StemRequest, euler_sample
from .training import load_checkpoint

DATA_DIR_ENV = "STEMFLOW_DATA_DIR"


def _latent_to_b64(latent: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(latent, dtype=np.float32).tobytes()).decode("ascii")


def _latent_from_b64(text: str, frames: int, dim: int) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    return np.frombuffer(raw, dtype=np.float32).reshape(frames, dim).astype(np.float64)


@dataclass
class SessionStem:
    stem_id: str
    stem_type: str
    latent: np.ndarray
    activity_mask: np.ndarray | None
    muted: bool = False


@dataclass
class Session:
    session_id: str
    style_token: int
    tempo_bpm: int
    clip_frames: int
    base_seed: int
    stems: dict[str, SessionStem] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    request_ids: dict[str, list[str]] = field(default_factory=dict)
    stem_counter: int = 0
    seed_counter: int = 0

    def apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "created":
            return
        if kind == "generate":
            for item in event["stems"]:
                mask = item.get("activity_mask")
                stem = SessionStem(
                    stem_id=item["stem_id"],
                    stem_type=item["stem_type"],
                    latent=_latent_from_b64(item["latent_b64"], self.clip_frames, codec.LATENT_DIM),
                    activity_mask=None if mask is None else np.asarray(mask, dtype=np.int64),
                )
                self.stems[stem.stem_id] = stem
                self.order.append(stem.stem_id)
                self.stem_counter += 1
            self.seed_counter += 1
            self.request_ids[event["request_id"]] = [s["stem_id"] for s in event["stems"]]
            self.history.append(
                {
                    "action": "generate",
                    "request_id": event["request_id"],
                    "stem_ids": [s["stem_id"] for s in event["stems"]],
                    "stem_types": [s["stem_type"] for s in event["stems"]],
                    "condition_on": event["condition_on"],
                    "seed": event["seed"],
                }
            )
        elif kind == "mute":
            self.stems[event["stem_id"]].muted = bool(event["muted"])
        elif kind == "delete":
            sid = event["stem_id"]
            del self.stems[sid]
            self.order.remove(sid)
        else:
            raise ValueError(f"unknown event kind {kind!r}")


class SessionStore:
    """Append-only JSONL persistence with in-memory replayed state."""

    def __init__(self, data_dir: Path) -> None:
        self.dir = data_dir / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        for path in sorted(self.dir.glob("*.jsonl")):
            session = self._replay(path)
            self.sessions[session.session_id] = session
            self.locks[session.session_id] = threading.Lock()

    def _path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.jsonl"

    def _replay(self, path: Path) -> Session:
        events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        head = events[0]
        if head["event"] != "created":
            raise ValueError(f"history {path} does not start with a created event")
        session = Session(
            session_id=head["session_id"],
            style_token=head["style_token"],
            tempo_bpm=head["tempo_bpm"],
            clip_frames=head["clip_frames"],
            base_seed=head["base_seed"],
        )
        for event in events[1:]:
            session.apply(event)
        return session

    def create(self, style_token: int, tempo_bpm: int, clip_frames: int, base_seed: int) -> Session:
        session_id = uuid.uuid4().hex
        session = Session(session_id, style_token, tempo_bpm, clip_frames, base_seed)
        event = {
            "event": "created",
            "session_id": session_id,
            "style_token": style_token,
            "tempo_bpm": tempo_bpm,
            "clip_frames": clip_frames,
            "base_seed": base_seed,
        }
        with self._registry_lock:
            self._append(session_id, event)
            self.sessions[session_id] = session
            self.locks[session_id] = threading.Lock()
        return session

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._path(session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def commit(self, session: Session, event: dict) -> None:
        self._append(session.session_id, event)
        session.apply(event)


class CreateSessionBody(BaseModel):
    style_token: int
    tempo_bpm: int


class GenerateStemBody(BaseModel):
    stem_type: str
    activity_mask: list[int] | None = None


class GenerateBody(BaseModel):
    request_id: str
    stems: list[GenerateStemBody]
    condition_on: list[str] = []
    steps: int | None = None
    cfg_scale: float | None = None
    seed: int | None = None


class MuteBody(BaseModel):
    muted: bool = True


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(
    checkpoint_path: str | Path,
    data_dir: str | Path | None = None,
    clip_frames: int = DEFAULT_CLIP_FRAMES,
) -> FastAPI:
    params, model_config, _meta = load_checkpoint(checkpoint_path)
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, "stemflow_data")
    store = SessionStore(Path(data_dir))
    wav_cache: dict[tuple[str, str], bytes] = {}
    app = FastAPI(title="stemflow")
    app.state.store = store

    def session_view(session: Session, pending: bool = False) -> dict:
        lanes = []
        for sid in session.order:
            stem = session.stems[sid]
            samples = codec.decode(stem.latent)
            lanes.append(
                {
                    "stem_id": stem.stem_id,
                    "stem_type": stem.stem_type,
                    "muted": stem.muted,
                    "activity": codec.detect_activity(samples).astype(int).tolist(),
                    "requested_mask": None
                    if stem.activity_mask is None
                    else stem.activity_mask.astype(int).tolist(),
                    "rms_envelope": codec.frame_rms(samples).round(6).tolist(),
                    "wav_url": f"/sessions/{session.session_id}/stems/{stem.stem_id}.wav",
                }
            )
        return {
            "session_id": session.session_id,
            "style_token": session.style_token,
            "tempo_bpm": session.tempo_bpm,
            "clip_frames": session.clip_frames,
            "stems": lanes,
            "history": session.history,
            "pending": pending,
        }

    def run_generation(session: Session, body: GenerateBody) -> dict | JSONResponse:
        for item in body.stems:
            if item.stem_type not in STEM_TYPES:
                return _error(422, f"unknown stem type {item.stem_type!r}")
            if item.activity_mask is not None and len(item.activity_mask) != session.clip_frames:
                return _error(422, f"activity mask must have {session.clip_frames} frames")
        unknown = [sid for sid in body.condition_on if sid not in session.stems]
        if unknown:
            return _error(404, f"unknown stem ids {unknown}")
        if body.steps is not None and body.steps < 1:
            return _error(422, "steps must be >= 1")

        seed = body.seed if body.seed is not None else session.base_seed + session.seed_counter
        sample_config = SampleConfig(
            num_steps=body.steps if body.steps is not None else 32,
            cfg_scale=body.cfg_scale if body.cfg_scale is not None else 3.0,
            seed=seed,
        )
        context_ids = sorted(set(body.condition_on))
        if context_ids:
            submix = np.sum([session.stems[sid].latent for sid in context_ids], axis=0)
            ctx_types = sorted({session.stems[sid].stem_type for sid in context_ids})
        else:
            submix = None
            ctx_types = []
        requests = [
            StemRequest(
                stem_type=item.stem_type,
                style_token=session.style_token,
                tempo_bpm=session.tempo_bpm,
                activity_mask=None if item.activity_mask is None else np.asarray(item.activity_mask),
                context_types=ctx_types,
                submix_latent=submix,
            )
            for item in body.stems
        ]
        rng = np.random.default_rng(seed)
        latents = euler_sample(params, model_config, requests, sample_config, rng, session.clip_frames)

        stem_events = []
        for item, latent in zip(body.stems, latents):
            # stem_counter only ever grows, so ids stay unique across deletes
            stem_id = f"s{session.stem_counter + len(stem_events) + 1}"
            stem_events.append(
                {
                    "stem_id": stem_id,
                    "stem_type": item.stem_type,
                    "latent_b64": _latent_to_b64(latent),
                    "activity_mask": item.activity_mask,
                }
            )
        event = {
            "event": "generate",
            "request_id": body.request_id,
            "stems": stem_events,
            "condition_on": context_ids,
            "seed": seed,
            "steps": sample_config.num_steps,
            "cfg_scale": sample_config.cfg_scale,
        }
        store.commit(session, event)
        return {
            "session": session_view(session),
            "new_stem_ids": [s["stem_id"] for s in stem_events],
        }

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        if body.tempo_bpm not in TEMPO_GRID:
            return _error(422, f"tempo must be one of {list(TEMPO_GRID)}")
        if not (0 <= body.style_token < NUM_STYLES):
            return _error(422, f"style_token must be in [0, {NUM_STYLES})")
        session = store.create(body.style_token, body.tempo_bpm, clip_frames, base_seed=body.style_token * 1000 + body.tempo_bpm)
        return session_view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        lock = store.locks[session_id]
        return session_view(session, pending=lock.locked())

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str, body: GenerateBody):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        if not body.stems:
            return _error(422, "at least one stem must be requested")
        lock = store.locks[session_id]
        if not lock.acquire(blocking=False):
            return _error(409, "a generation is already running for this session")
        try:
            known = session.request_ids.get(body.request_id)
            if known is not None:
                return {"session": session_view(session), "new_stem_ids": known}
            return run_generation(session, body)
        finally:
            lock.release()

    @app.post("/sessions/{session_id}/stems/{stem_id}/mute")
    def mute_stem(session_id: str, stem_id: str, body: MuteBody = MuteBody()):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        with store.locks[session_id]:
            if stem_id not in session.stems:
                return _error(404, "unknown stem")
            if session.stems[stem_id].muted != body.muted:
                store.commit(session, {"event": "mute", "stem_id": stem_id, "muted": body.muted})
        return session_view(session)

    @app.delete("/sessions/{session_id}/stems/{stem_id}")
    def delete_stem(session_id: str, stem_id: str):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        with store.locks[session_id]:
            if stem_id not in session.stems:
                return _error(404, "unknown stem")
            store.commit(session, {"event": "delete", "stem_id": stem_id})
            wav_cache.pop((session_id, stem_id), None)
        return session_view(session)

    @app.get("/sessions/{session_id}/stems/{stem_id}.wav")
    def stem_wav(session_id: str, stem_id: str):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        stem = session.stems.get(stem_id)
        if stem is None:
            return _error(404, "unknown stem")
        key = (session_id, stem_id)
        if key not in wav_cache:
            wav_cache[key] = wavio.wav_bytes(codec.decode(stem.latent))
        return Response(content=wav_cache[key], media_type="audio/wav")

    @app.get("/sessions/{session_id}/mix.wav")
    def mix_wav(session_id: str):
        session = store.sessions.get(session_id)
        if session is None:
            return _error(404, "unknown session")
        audible = [codec.decode(session.stems[sid].latent) for sid in session.order if not session.stems[sid].muted]
        if not audible:
            return _error(422, "no unmuted stems to mix")
        mixed = codec.mix(audible)
        if codec.rms(mixed) == 0.0:
            return _error(422, "mix is silent; nothing to normalize")
        return Response(content=wavio.wav_bytes(codec.normalize_mix(mixed)), media_type="audio/wav")

    return app

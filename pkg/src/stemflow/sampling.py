"""Probability-flow ODE inference: Euler integration with windowed CFG,
inference-time shared noise, and the one-pass / two-pass / K-pass workflows.

Convention: time runs 1 -> 0, the model predicts v ~ x0 - eps, and each Euler
step applies x <- x + dt * v. A single-data-point velocity field is therefore
integrated exactly for any step count.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from . import codec
from . import model as model_mod
from .corpus import STEM_TYPES
from .model import CondArrays, ModelConfig


def default_window(num_steps: int) -> tuple[int, int]:
    """CFG step window [3, 28] at 32 steps, scaled proportionally otherwise."""
    lo = max(1, min(num_steps, round(3 * num_steps / 32)))
    hi = max(1, min(num_steps, round(28 * num_steps / 32)))
    return lo, hi


@dataclass
class SampleConfig:
    num_steps: int = 32
    cfg_scale: float = 3.0
    cfg_window: tuple[int, int] | None = None
    share_noise_at_inference: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.cfg_window is None:
            self.cfg_window = default_window(self.num_steps)
        lo, hi = self.cfg_window
        if not (1 <= lo and hi <= self.num_steps):
            raise ValueError(f"cfg_window {self.cfg_window} outside [1, {self.num_steps}]")


@dataclass
class StemRequest:
    stem_type: str
    style_token: int
    tempo_bpm: int
    activity_mask: np.ndarray | None = None
    context_types: list[str] = field(default_factory=list)
    submix_latent: np.ndarray | None = None


def cfg_velocity(
    v_cond: np.ndarray,
    v_uncond: np.ndarray,
    scale: float,
    step_index: int,
    window: tuple[int, int],
) -> np.ndarray:
    """Guided velocity inside the step window, plain conditional outside."""
    if v_cond.shape != v_uncond.shape:
        raise ValueError("conditional/unconditional velocity shapes differ")
    lo, hi = window
    if lo <= step_index <= hi:
        return v_uncond + scale * (v_cond - v_uncond)
    return v_cond


def integrate(
    velocity_fn: Callable[[np.ndarray, float, int], np.ndarray],
    x_init: np.ndarray,
    num_steps: int,
    post_step: Callable[[np.ndarray, float], None] | None = None,
) -> np.ndarray:
    """Euler integration from t=1 to t=0 in num_steps equal steps.

    velocity_fn(x, t, step_index) is called with the 1-based step index;
    post_step(x, t_next), if given, may adjust the state in place after
    each step (used for known-coordinate replacement).
    """
    x = np.array(x_init, dtype=np.float64, copy=True)
    dt = 1.0 / num_steps
    for n in range(1, num_steps + 1):
        t = 1.0 - (n - 1) * dt
        v = velocity_fn(x, t, n)
        if not np.isfinite(v).all():
            raise FloatingPointError(f"non-finite state at Euler step {n}")
        x += dt * v
        if post_step is not None:
            post_step(x, 1.0 - n * dt)
    return x


def requests_to_cond(requests: list[StemRequest], frames: int, latent_dim: int) -> CondArrays:
    r = len(requests)
    stem_type = np.array([STEM_TYPES.index(q.stem_type) for q in requests])
    style = np.array([q.style_token for q in requests])
    tempo = np.array([model_mod.tempo_bucket(q.tempo_bpm) for q in requests])
    ctx = np.zeros((r, len(STEM_TYPES)))
    submix = np.zeros((r, frames, latent_dim))
    act_idx = np.full((r, frames), model_mod.ACT_UNCONSTRAINED, dtype=np.int64)
    for i, q in enumerate(requests):
        for name in q.context_types:
            ctx[i, STEM_TYPES.index(name)] = 1.0
        if q.submix_latent is not None:
            submix[i] = q.submix_latent
        if q.activity_mask is not None:
            if len(q.activity_mask) != frames:
                raise ValueError("activity mask length does not match clip frames")
            act_idx[i] = np.where(np.asarray(q.activity_mask) > 0, model_mod.ACT_ACTIVE, model_mod.ACT_SILENT)
    return CondArrays(
        stem_type=stem_type,
        style=style,
        tempo=tempo,
        ctx=ctx,
        ctx_dropped=np.zeros(r, dtype=bool),
        submix=submix,
        act_idx=act_idx,
        act_dropped=np.zeros(r, dtype=bool),
    )


def _validate_requests(requests: list[StemRequest]) -> None:
    if not requests:
        raise ValueError("no stem requests")
    styles = {q.style_token for q in requests}
    tempos = {q.tempo_bpm for q in requests}
    if len(styles) > 1 or len(tempos) > 1:
        raise ValueError("all requests in one generation call must share style and tempo")


def euler_sample(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    requests: list[StemRequest],
    config: SampleConfig,
    rng: np.random.Generator,
    frames: int = 96,
    noise_hook: Callable[[np.ndarray], None] | None = None,
) -> np.ndarray:
    """Sample latents (R, T, D) for the requests, one batched forward per step."""
    _validate_requests(requests)
    r = len(requests)
    d = model_config.latent_dim
    if config.share_noise_at_inference:
        eps = np.broadcast_to(rng.standard_normal((1, frames, d)), (r, frames, d)).copy()
    else:
        eps = rng.standard_normal((r, frames, d))
    if noise_hook is not None:
        noise_hook(eps)

    cond_full = requests_to_cond(requests, frames, d)
    if model_config.latent_scale != 1.0:
        cond_full.submix = cond_full.submix * model_config.latent_scale
    lo, hi = config.cfg_window

    # The conditions are constant over the integration, so the doubled
    # (conditional + unconditional) batch and its state buffer are built once.
    cond2 = _concat_cond(cond_full, CondArrays.null(r, frames, d))
    x2 = np.empty((2 * r, frames, d))

    def velocity_fn(x: np.ndarray, t: float, n: int) -> np.ndarray:
        in_window = lo <= n <= hi and config.cfg_scale != 1.0
        if in_window:
            x2[:r] = x
            x2[r:] = x
            v2 = model_mod.velocity(params, model_config, x2, np.full(2 * r, t), cond2)
            return cfg_velocity(v2[:r], v2[r:], config.cfg_scale, n, config.cfg_window)
        return model_mod.velocity(params, model_config, x, np.full(r, t), cond_full)

    # Frames a request explicitly masks silent have a known target of exactly
    # zero, so their straight-line path t * eps is substituted after every
    # step (known-coordinate replacement); the final state there is exactly 0.
    silent = np.zeros((r, frames), dtype=bool)
    for i, q in enumerate(requests):
        if q.activity_mask is not None:
            silent[i] = np.asarray(q.activity_mask) == 0
    post_step = None
    if silent.any():

        def post_step(x: np.ndarray, t_next: float) -> None:
            x[silent] = t_next * eps[silent]

    return integrate(velocity_fn, eps, config.num_steps, post_step) / model_config.latent_scale


def _concat_cond(a: CondArrays, b: CondArrays) -> CondArrays:
    return CondArrays(
        stem_type=np.concatenate([a.stem_type, b.stem_type]),
        style=np.concatenate([a.style, b.style]),
        tempo=np.concatenate([a.tempo, b.tempo]),
        ctx=np.concatenate([a.ctx, b.ctx]),
        ctx_dropped=np.concatenate([a.ctx_dropped, b.ctx_dropped]),
        submix=np.concatenate([a.submix, b.submix]),
        act_idx=np.concatenate([a.act_idx, b.act_idx]),
        act_dropped=np.concatenate([a.act_dropped, b.act_dropped]),
    )


def generate_from_scratch(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    requests: list[StemRequest],
    config: SampleConfig,
    rng: np.random.Generator,
    frames: int = 96,
    noise_hook: Callable[[np.ndarray], None] | None = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Decode each sampled latent; mix at unity gains; normalize to -16 dBFS."""
    for q in requests:
        if q.context_types or q.submix_latent is not None:
            raise ValueError("from-scratch requests must carry no context")
    latents = euler_sample(params, model_config, requests, config, rng, frames, noise_hook)
    stems = [codec.decode(lat) for lat in latents]
    mixed = codec.normalize_mix(codec.mix(stems))
    return stems, mixed


def generate_conditional(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    context_stems: list[np.ndarray],
    requests: list[StemRequest],
    config: SampleConfig,
    rng: np.random.Generator,
    frames: int = 96,
) -> list[np.ndarray]:
    """Generate stems conditioned on the latent-domain sum of context stems."""
    if not requests:
        return []
    if not context_stems:
        raise ValueError("conditional generation needs at least one context stem")
    submix = np.sum(np.stack(context_stems), axis=0)
    if submix.shape[0] != frames:
        raise ValueError("context length does not match clip frames")
    prepared = []
    for q in requests:
        prepared.append(
            StemRequest(
                stem_type=q.stem_type,
                style_token=q.style_token,
                tempo_bpm=q.tempo_bpm,
                activity_mask=q.activity_mask,
                context_types=list(q.context_types),
                submix_latent=submix,
            )
        )
    latents = euler_sample(params, model_config, prepared, config, rng, frames)
    return [codec.decode(lat) for lat in latents]


@dataclass
class WorkflowReport:
    mode: str
    num_stems: int
    wall_time_ms: float
    per_pass_ms: list[float]
    seed: int
    config: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def run_workflow(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    requests: list[StemRequest],
    mode: str,
    config: SampleConfig,
    rng: np.random.Generator,
    frames: int = 96,
) -> tuple[list[np.ndarray], WorkflowReport]:
    """Generate K stems via k_pass / two_pass / one_pass; time inference only.

    k_pass conditions each pass on the sub-mix of all previously generated
    stems (cumulative conditioning); two_pass generates ceil(K/2) stems from
    scratch then the rest conditioned on the first pass's sub-mix.
    """
    if mode not in ("k_pass", "two_pass", "one_pass"):
        raise ValueError(f"unknown workflow mode {mode!r}")
    if not requests:
        raise ValueError("no stem requests")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext

        threadpool_limits = lambda limits: nullcontext()  # noqa: E731

    latents: list[np.ndarray] = []
    per_pass_ms: list[float] = []

    with threadpool_limits(limits=1):
        t_total = time.perf_counter()
        if mode == "one_pass":
            t0 = time.perf_counter()
            latents = list(euler_sample(params, model_config, requests, config, rng, frames))
            per_pass_ms.append((time.perf_counter() - t0) * 1e3)
        elif mode == "two_pass":
            first_n = (len(requests) + 1) // 2
            t0 = time.perf_counter()
            first = euler_sample(params, model_config, requests[:first_n], config, rng, frames)
            per_pass_ms.append((time.perf_counter() - t0) * 1e3)
            latents = list(first)
            if len(requests) > first_n:
                submix = np.sum(first, axis=0)
                ctx = sorted({q.stem_type for q in requests[:first_n]})
                second_reqs = [
                    StemRequest(q.stem_type, q.style_token, q.tempo_bpm, q.activity_mask, ctx, submix)
                    for q in requests[first_n:]
                ]
                t0 = time.perf_counter()
                second = euler_sample(params, model_config, second_reqs, config, rng, frames)
                per_pass_ms.append((time.perf_counter() - t0) * 1e3)
                latents.extend(second)
        else:  # k_pass
            done_types: list[str] = []
            for q in requests:
                one = StemRequest(
                    q.stem_type,
                    q.style_token,
                    q.tempo_bpm,
                    q.activity_mask,
                    sorted(set(done_types)),
                    np.sum(latents, axis=0) if latents else None,
                )
                t0 = time.perf_counter()
                out = euler_sample(params, model_config, [one], config, rng, frames)
                per_pass_ms.append((time.perf_counter() - t0) * 1e3)
                latents.append(out[0])
                done_types.append(q.stem_type)
        wall_ms = (time.perf_counter() - t_total) * 1e3

    report = WorkflowReport(
        mode=mode,
        num_stems=len(requests),
        wall_time_ms=wall_ms,
        per_pass_ms=per_pass_ms,
        seed=config.seed,
        config={"num_steps": config.num_steps, "cfg_scale": config.cfg_scale, "cfg_window": list(config.cfg_window)},
    )
    return latents, report

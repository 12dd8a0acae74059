"""Time-conditioned velocity network with hand-written backprop.

Architecture (fixed for this build): per-frame input is the noised latent
channel-concatenated with the condition channel map (sub-mix latent + 16-dim
activity embedding). A linear lift to the hidden width is followed by
residual blocks of {depthwise temporal convolution, SiLU, additive injection
of (timestep embedding + condition summary) through a learned projection,
linear mix}, then a zero-initialized linear head back to the latent width.
Temporal mixing is convolutional, so the network is translation-equivariant
over frames and has no cross-batch-element connections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import dwconv_backward, dwconv_forward, silu, silu_grad
from .corpus import NUM_STYLES, STEM_TYPES, TEMPO_GRID, frames_per_beat

NUM_STEM_TYPES = len(STEM_TYPES)
NUM_TEMPO = len(TEMPO_GRID)

# beat period in frames per tempo-grid index; the trailing 0 is the null token
_PERIOD_BY_TEMPO = np.array([frames_per_beat(t) for t in TEMPO_GRID] + [0], dtype=np.float64)

# activity embedding rows
ACT_SILENT = 0
ACT_ACTIVE = 1
ACT_UNCONSTRAINED = 2

_TIME_FREQS = np.exp(np.linspace(np.log(1.0), np.log(256.0), 16))


@dataclass
class ModelConfig:
    latent_dim: int = 8
    activity_dim: int = 16
    hidden_width: int = 128
    num_blocks: int = 4
    embed_dim: int = 32
    conv_kernel: int = 5
    parameter_seed: int = 0
    # Corpus latents have per-dimension std ~0.26 against unit sampling noise;
    # training and integration run in a space scaled to ~unit data std so the
    # velocity target is not dominated by the noise term. Decoded outputs are
    # divided back out, so all public latents stay in codec units.
    latent_scale: float = 4.0

    @property
    def cond_channels(self) -> int:
        # sub-mix latent + activity embedding + one-hot stem type + 2
        # beat-clock channels. The type one-hot is repeated per frame so the
        # channel-allocation decision (which latent channel a stem type
        # occupies) is conditioned directly at every layer input; the
        # summary-vector injection alone leaves the sustained types
        # (guitar/pad/lead) collapsed onto one channel.
        return self.latent_dim + self.activity_dim + NUM_STEM_TYPES + 2

    @property
    def input_channels(self) -> int:
        return self.latent_dim + self.cond_channels

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class CondArrays:
    """Batch condition tensors, with dropout already folded in.

    Dropped discrete fields are remapped to their null vocabulary index;
    a dropped context unit zeroes the sub-mix channels and uses the learned
    null context vector; a dropped activity mask zeroes its channels.
    """

    stem_type: np.ndarray  # (B,) int, null = NUM_STEM_TYPES
    style: np.ndarray  # (B,) int, null = NUM_STYLES
    tempo: np.ndarray  # (B,) int, null = NUM_TEMPO
    ctx: np.ndarray  # (B, NUM_STEM_TYPES) multi-hot
    ctx_dropped: np.ndarray  # (B,) bool
    submix: np.ndarray  # (B, T, D), zeros when absent or dropped
    act_idx: np.ndarray  # (B, T) int rows into the activity table
    act_dropped: np.ndarray  # (B,) bool

    @classmethod
    def null(cls, batch: int, frames: int, latent_dim: int = 8) -> "CondArrays":
        """The CFG-unconditional point: every condition dropped."""
        return cls(
            stem_type=np.full(batch, NUM_STEM_TYPES),
            style=np.full(batch, NUM_STYLES),
            tempo=np.full(batch, NUM_TEMPO),
            ctx=np.zeros((batch, NUM_STEM_TYPES)),
            ctx_dropped=np.ones(batch, dtype=bool),
            submix=np.zeros((batch, frames, latent_dim)),
            act_idx=np.full((batch, frames), ACT_UNCONSTRAINED),
            act_dropped=np.ones(batch, dtype=bool),
        )


def tempo_bucket(tempo_bpm: int) -> int:
    """Nearest index on the 7-value bpm grid."""
    grid = np.asarray(TEMPO_GRID)
    return int(np.argmin(np.abs(grid - tempo_bpm)))


def init_params(cfg: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(cfg.parameter_seed))
    h, e = cfg.hidden_width, cfg.embed_dim

    def lin(fan_in: int, *shape: int) -> np.ndarray:
        return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)

    params: dict[str, np.ndarray] = {
        "lift.w": lin(cfg.input_channels, cfg.input_channels, h),
        "lift.b": np.zeros(h, dtype=dtype),
        "time.w": lin(32, 32, e),
        "time.b": np.zeros(e, dtype=dtype),
        "emb.stem": (0.5 * rng.standard_normal((NUM_STEM_TYPES + 1, e))).astype(dtype),
        "emb.style": (0.5 * rng.standard_normal((NUM_STYLES + 1, e))).astype(dtype),
        "emb.tempo": (0.5 * rng.standard_normal((NUM_TEMPO + 1, e))).astype(dtype),
        "emb.ctx": (0.5 * rng.standard_normal((NUM_STEM_TYPES, e))).astype(dtype),
        "emb.ctx_null": (0.5 * rng.standard_normal(e)).astype(dtype),
        "emb.act": (0.5 * rng.standard_normal((3, cfg.activity_dim))).astype(dtype),
        "head.w": np.zeros((h, cfg.latent_dim), dtype=dtype),
        "head.b": np.zeros(cfg.latent_dim, dtype=dtype),
    }
    for i in range(cfg.num_blocks):
        params[f"block{i}.conv.k"] = lin(cfg.conv_kernel, cfg.conv_kernel, h)
        params[f"block{i}.conv.b"] = np.zeros(h, dtype=dtype)
        params[f"block{i}.inject.w"] = lin(e, e, h)
        params[f"block{i}.inject.b"] = np.zeros(h, dtype=dtype)
        # global-pooling path: frame-mean features broadcast back to every
        # frame, the only cross-frame link beyond the conv receptive field
        params[f"block{i}.gap.w"] = lin(h, h, h)
        # beat-frequency pooling: project hidden channels onto the clock's
        # sin/cos over all frames (a matched filter at the beat period),
        # rotate the two quadratures with learned weights, and reinject
        # modulated by the clock. This is how a clip-wide phase consensus
        # forms; a plain mean is phase-blind at the beat frequency. The
        # rotation weights start at zero (standard residual-branch zero
        # init): a random start injects phase noise that the gate learns to
        # squelch before the path becomes useful, which makes whether the
        # path survives training a seed lottery.
        params[f"block{i}.beat.w1"] = np.zeros((h, h), dtype=dtype)
        params[f"block{i}.beat.w2"] = np.zeros((h, h), dtype=dtype)
        # sigmoid gate on the beat path driven by (time embedding + condition
        # summary): the useful beat-feedback gain is strong at low t and ~0 at
        # t ~ 1 (the phase posterior is flat there), so it must be t-dependent
        # or training suppresses the path globally
        params[f"block{i}.beat.gate.w"] = lin(e, e, h)
        params[f"block{i}.beat.gate.b"] = np.zeros(h, dtype=dtype)
        params[f"block{i}.out.w"] = lin(h, h, h)
        params[f"block{i}.out.b"] = np.zeros(h, dtype=dtype)
    return params


def param_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(p.size for p in params.values()))


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def time_features(t: np.ndarray, dtype) -> np.ndarray:
    arg = np.asarray(t)[:, None] * _TIME_FREQS[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1).astype(dtype)




def beat_clock(tempo_idx: np.ndarray, frames: int, dtype=np.float64) -> np.ndarray:
    """Per-frame (B, T, 2) sin/cos at the conditioned beat frequency.

    The clock is phase-referenced to frame 0 and exposes only the beat
    period; target patterns have uniform phase, so onset placement still
    has to come from the sampling noise. The null tempo token gets zeros.
    """
    periods = _PERIOD_BY_TEMPO[tempo_idx]  # (B,)
    safe = np.where(periods > 0, periods, 1.0)
    angle = (2.0 * np.pi / safe)[:, None] * np.arange(frames)[None, :]
    clock = np.stack([np.sin(angle), np.cos(angle)], axis=2)
    clock[periods == 0] = 0.0
    return clock.astype(dtype)


def embed_conditions(params: dict[str, np.ndarray], cond: CondArrays) -> tuple[np.ndarray, np.ndarray, dict]:
    """Returns (summary vector (B,E), channel map (B,T,D+16+2), cache)."""
    dtype = params["emb.stem"].dtype
    ctx = cond.ctx.astype(dtype)
    ctx_part = ctx @ params["emb.ctx"]
    ctx_part[cond.ctx_dropped] = params["emb.ctx_null"]
    summary = (
        params["emb.stem"][cond.stem_type]
        + params["emb.style"][cond.style]
        + params["emb.tempo"][cond.tempo]
        + ctx_part
    )
    act_map = params["emb.act"][cond.act_idx]  # (B, T, 16)
    act_map[cond.act_dropped] = 0.0
    frames = cond.act_idx.shape[1]
    clock = beat_clock(cond.tempo, frames, dtype)
    # one-hot stem type per frame; the null/dropped index maps to all-zeros
    type_map = np.broadcast_to(
        np.eye(NUM_STEM_TYPES + 1, NUM_STEM_TYPES, dtype=dtype)[cond.stem_type][:, None, :],
        (cond.stem_type.shape[0], frames, NUM_STEM_TYPES),
    )
    chan = np.concatenate([cond.submix.astype(dtype), act_map, type_map, clock], axis=2)
    return summary, chan, {"cond": cond}


def embed_conditions_backward(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    cache: dict,
    dsummary: np.ndarray,
    dchan: np.ndarray,
) -> None:
    """Accumulate embedding-table gradients in place."""
    cond: CondArrays = cache["cond"]
    np.add.at(grads["emb.stem"], cond.stem_type, dsummary)
    np.add.at(grads["emb.style"], cond.style, dsummary)
    np.add.at(grads["emb.tempo"], cond.tempo, dsummary)
    kept = ~cond.ctx_dropped
    if kept.any():
        grads["emb.ctx"] += cond.ctx[kept].astype(dsummary.dtype).T @ dsummary[kept]
    if cond.ctx_dropped.any():
        grads["emb.ctx_null"] += dsummary[cond.ctx_dropped].sum(axis=0)
    d = params["emb.act"].shape[1]
    sub = cond.submix.shape[2]
    # the trailing type one-hot and clock channels carry no parameters
    dact = dchan[:, :, sub : sub + d].copy()
    dact[cond.act_dropped] = 0.0
    np.add.at(grads["emb.act"], cond.act_idx, dact)


def forward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    x_t: np.ndarray,
    chan: np.ndarray,
    cond_vec: np.ndarray,
) -> tuple[np.ndarray, dict]:
    """Velocity prediction (B, T, D) plus the cache needed for backward."""
    if not (np.isfinite(x_t).all() and np.isfinite(chan).all()):
        raise ValueError("non-finite model input")
    b, t, _ = x_t.shape
    dtype = params["lift.w"].dtype
    x_in = np.concatenate([x_t.astype(dtype), chan.astype(dtype)], axis=2)
    if x_in.shape[2] != cfg.input_channels:
        raise ValueError(f"expected {cfg.input_channels} input channels, got {x_in.shape[2]}")

    h = x_in.reshape(b * t, -1) @ params["lift.w"] + params["lift.b"]
    h = h.reshape(b, t, -1)

    sin = x_in[:, :, -2:-1]  # (B, T, 1) beat-clock quadratures
    cos = x_in[:, :, -1:]
    # One shared beat-frequency readout of the lifted input. The lift carries
    # no stem-type content (type enters only through the per-block inject), so
    # every block's phase reinjection derives from the same type-agnostic
    # function of the state; under shared sampling noise all stems of a group
    # therefore read the same phase seed.
    ps = (h * sin).mean(axis=1)  # (B, H)
    pc = (h * cos).mean(axis=1)
    cache: dict = {"x_in": x_in, "cond_vec": cond_vec, "h_in": [], "u": []}
    for i in range(cfg.num_blocks):
        inject = cond_vec @ params[f"block{i}.inject.w"] + params[f"block{i}.inject.b"]
        pooled = h.mean(axis=1) @ params[f"block{i}.gap.w"]
        w1, w2 = params[f"block{i}.beat.w1"], params[f"block{i}.beat.w2"]
        gate = _sigmoid(cond_vec @ params[f"block{i}.beat.gate.w"] + params[f"block{i}.beat.gate.b"])
        beat = gate[:, None, :] * (
            (ps @ w1 - pc @ w2)[:, None, :] * sin + (ps @ w2 + pc @ w1)[:, None, :] * cos
        )
        u = (
            dwconv_forward(h, params[f"block{i}.conv.k"])
            + params[f"block{i}.conv.b"]
            + (inject + pooled)[:, None, :]
            + beat
        )
        cache["h_in"].append(h)
        cache["u"].append(u)
        s = silu(u)
        h = h + (s.reshape(b * t, -1) @ params[f"block{i}.out.w"] + params[f"block{i}.out.b"]).reshape(b, t, -1)

    cache["h_out"] = h
    y = (h.reshape(b * t, -1) @ params["head.w"] + params["head.b"]).reshape(b, t, cfg.latent_dim)
    return y, cache


def backward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    cache: dict,
    dy: np.ndarray,
    grads: dict[str, np.ndarray],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop through forward; returns (dx_t, dchan, dcond_vec)."""
    b, t, _ = dy.shape
    dy2 = dy.reshape(b * t, -1).astype(params["head.w"].dtype)
    h_out = cache["h_out"].reshape(b * t, -1)
    grads["head.w"] += h_out.T @ dy2
    grads["head.b"] += dy2.sum(axis=0)
    dh = (dy2 @ params["head.w"].T).reshape(b, t, -1)
    dcond = np.zeros_like(cache["cond_vec"])
    sin = cache["x_in"][:, :, -2:-1]  # (B, T, 1) beat-clock quadratures
    cos = cache["x_in"][:, :, -1:]
    h0 = cache["h_in"][0]  # the shared beat readout taps the lifted input
    ps = (h0 * sin).mean(axis=1)
    pc = (h0 * cos).mean(axis=1)
    dh0_beat = np.zeros_like(h0)

    for i in reversed(range(cfg.num_blocks)):
        u = cache["u"][i]
        h_in = cache["h_in"][i]
        s = silu(u)
        dh2 = dh.reshape(b * t, -1)
        grads[f"block{i}.out.w"] += s.reshape(b * t, -1).T @ dh2
        grads[f"block{i}.out.b"] += dh2.sum(axis=0)
        du = (dh2 @ params[f"block{i}.out.w"].T).reshape(b, t, -1) * silu_grad(u)

        grads[f"block{i}.conv.b"] += du.sum(axis=(0, 1))
        du_t = du.sum(axis=1)  # (B, H): injected terms are broadcast over frames
        grads[f"block{i}.inject.w"] += cache["cond_vec"].T @ du_t
        grads[f"block{i}.inject.b"] += du_t.sum(axis=0)
        dcond += du_t @ params[f"block{i}.inject.w"].T

        pooled_in = h_in.mean(axis=1)  # (B, H)
        grads[f"block{i}.gap.w"] += pooled_in.T @ du_t
        dpool = du_t @ params[f"block{i}.gap.w"].T

        # beat-frequency pooling path (clock channels carry no parameters,
        # so their own gradient is not propagated)
        w1, w2 = params[f"block{i}.beat.w1"], params[f"block{i}.beat.w2"]
        gz = cache["cond_vec"] @ params[f"block{i}.beat.gate.w"] + params[f"block{i}.beat.gate.b"]
        gate = _sigmoid(gz)
        quad_s = ps @ w1 - pc @ w2  # (B, H)
        quad_c = ps @ w2 + pc @ w1
        dus = (du * sin).sum(axis=1)  # (B, H)
        duc = (du * cos).sum(axis=1)
        dgate = dus * quad_s + duc * quad_c
        dgz = dgate * gate * (1.0 - gate)
        grads[f"block{i}.beat.gate.w"] += cache["cond_vec"].T @ dgz
        grads[f"block{i}.beat.gate.b"] += dgz.sum(axis=0)
        dcond += dgz @ params[f"block{i}.beat.gate.w"].T
        da = gate * dus
        dc = gate * duc
        grads[f"block{i}.beat.w1"] += ps.T @ da + pc.T @ dc
        grads[f"block{i}.beat.w2"] += ps.T @ dc - pc.T @ da
        dps = da @ w1.T + dc @ w2.T
        dpc = dc @ w1.T - da @ w2.T
        dh0_beat += (dps[:, None, :] * sin + dpc[:, None, :] * cos) / t

        dh_conv, dk = dwconv_backward(h_in, params[f"block{i}.conv.k"], du)
        grads[f"block{i}.conv.k"] += dk
        dh = dh + dh_conv + dpool[:, None, :] / t

    dh = dh + dh0_beat

    dh2 = dh.reshape(b * t, -1)
    x_in = cache["x_in"].reshape(b * t, -1)
    grads["lift.w"] += x_in.T @ dh2
    grads["lift.b"] += dh2.sum(axis=0)
    dx_in = (dh2 @ params["lift.w"].T).reshape(b, t, -1)
    return dx_in[:, :, : cfg.latent_dim], dx_in[:, :, cfg.latent_dim :], dcond


def velocity(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    x_t: np.ndarray,
    t: np.ndarray,
    cond: CondArrays,
) -> np.ndarray:
    """Single forward pass (no cache retention) for inference."""
    summary, chan, _ = embed_conditions(params, cond)
    temb = time_features(t, summary.dtype) @ params["time.w"] + params["time.b"]
    y, _ = forward(params, cfg, x_t, chan, temb + summary)
    return y

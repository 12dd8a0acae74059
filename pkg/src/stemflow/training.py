"""Rectified-flow training loop with AdamW, checkpointing, and resume.

Ablation settings map onto two batcher flags: A = independent entries and
independent noise, B = grouped entries with independent noise, C = grouped
entries with per-group shared noise. The loss is the mean per-entry squared
velocity error normalized by T*D, so the reported numbers are comparable
across clip lengths.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import model as model_mod
from .batching import Dataset, batch_to_arrays, prepare_batch
from .model import ModelConfig
from .tensorio import load_tensors, save_tensors

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    steps: int = 8000
    # a conservative constant rate samples far better than it scores: pushing
    # train loss lower (e.g. 1e-3 with cosine decay reaches ~1/3 the loss)
    # progressively destroys the sampler's ability to commit to sharp
    # periodic structure, because accuracy gains are confined to the training
    # path distribution while generation trajectories leave it
    learning_rate: float = 1e-4
    # cosine decay from learning_rate down to learning_rate * lr_final_fraction
    lr_final_fraction: float = 1.0
    batch_size: int = 32
    grouping: bool = True
    noise_sharing: bool = True
    conditional_fraction: float = 0.5
    dropout_p: float = 1.0 / 3.0
    timestep_mu: float = 0.0
    timestep_sigma: float = 1.0
    share_timestep_in_group: bool = False
    weight_decay: float = 0.0
    ema_decay: float = 0.999
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")

    @property
    def setting(self) -> str:
        if self.grouping and self.noise_sharing:
            return "C"
        if self.grouping:
            return "B"
        return "A"

    @classmethod
    def from_setting(cls, setting: str, **overrides) -> "TrainConfig":
        flags = {
            "A": dict(grouping=False, noise_sharing=False),
            "B": dict(grouping=True, noise_sharing=False),
            "C": dict(grouping=True, noise_sharing=True),
        }[setting.upper()]
        return cls(**{**flags, **overrides})


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    rng: np.random.Generator
    config: TrainConfig
    model_config: ModelConfig
    ema: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)


def init_state(config: TrainConfig, model_config: ModelConfig | None = None) -> TrainState:
    if model_config is None:
        model_config = ModelConfig(parameter_seed=config.seed)
    params = model_mod.init_params(model_config)
    return TrainState(
        params=params,
        ema={k: v.copy() for k, v in params.items()},
        m=model_mod.zero_grads(params),
        v=model_mod.zero_grads(params),
        step=0,
        rng=np.random.Generator(np.random.PCG64(config.seed)),
        config=config,
        model_config=model_config,
    )


def rf_loss(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    arrays: dict,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean per-entry ||v_pred - (x0 - eps)||^2 / (T*D), plus all gradients."""
    x0, eps, t, cond = arrays["x0"], arrays["eps"], arrays["t"], arrays["cond"]
    ls = model_config.latent_scale
    if ls != 1.0:
        x0 = x0 * ls
        cond = replace(cond, submix=cond.submix * ls)
    b, frames, d = x0.shape
    x_t = (1.0 - t)[:, None, None] * x0 + t[:, None, None] * eps
    v_target = x0 - eps

    summary, chan, emb_cache = model_mod.embed_conditions(params, cond)
    feats = model_mod.time_features(t, summary.dtype)
    temb = feats @ params["time.w"] + params["time.b"]
    v_pred, cache = model_mod.forward(params, model_config, x_t, chan, temb + summary)

    diff = v_pred - v_target.astype(v_pred.dtype)
    per_entry = np.sum(diff**2, axis=(1, 2)) / (frames * d)
    if not np.isfinite(per_entry).all():
        bad = int(np.flatnonzero(~np.isfinite(per_entry))[0])
        raise FloatingPointError(f"non-finite loss at batch entry {bad}")
    loss = float(np.mean(per_entry))

    grads = model_mod.zero_grads(params)
    dy = (2.0 / (b * frames * d)) * diff
    _, dchan, dcond = model_mod.backward(params, model_config, cache, dy, grads)
    grads["time.w"] += feats.T @ dcond
    grads["time.b"] += dcond.sum(axis=0)
    model_mod.embed_conditions_backward(params, grads, emb_cache, dcond, dchan)
    return loss, grads


def current_lr(config: TrainConfig, step: int) -> float:
    """Cosine decay over the configured horizon, floored at the final fraction."""
    frac = min(max(step, 0) / max(config.steps, 1), 1.0)
    shape = 0.5 * (1.0 + np.cos(np.pi * frac))
    return config.learning_rate * (config.lr_final_fraction + (1.0 - config.lr_final_fraction) * shape)


def adamw_update(state: TrainState, grads: dict[str, np.ndarray]) -> None:
    """Decoupled-weight-decay Adam step (in place), bias-corrected."""
    cfg = state.config
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    lr = current_lr(cfg, state.step)
    scale = lr * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    for name, p in state.params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (scale * m / (np.sqrt(v) + cfg.adam_eps)).astype(p.dtype)
        p -= (lr * cfg.weight_decay) * p


def train_step(state: TrainState, arrays: dict) -> float:
    loss, grads = rf_loss(state.params, state.model_config, arrays)
    adamw_update(state, grads)
    state.step += 1
    # EMA of parameters; the warmup cap keeps the average responsive early on.
    decay = min(state.config.ema_decay, (1.0 + state.step) / (10.0 + state.step))
    for name, p in state.params.items():
        e = state.ema[name]
        e *= decay
        e += (1.0 - decay) * p
    state.loss_history.append(loss)
    return loss


def _prepare(state: TrainState, dataset: Dataset) -> dict:
    cfg = state.config
    batch = prepare_batch(
        dataset,
        cfg.batch_size,
        state.rng,
        grouping=cfg.grouping,
        noise_sharing=cfg.noise_sharing,
        conditional_fraction=cfg.conditional_fraction,
        dropout_p=cfg.dropout_p,
        timestep_mu=cfg.timestep_mu,
        timestep_sigma=cfg.timestep_sigma,
        share_timestep_in_group=cfg.share_timestep_in_group,
    )
    return batch_to_arrays(batch)


def save_checkpoint(path: str | Path, state: TrainState) -> None:
    """Model deliverable: EMA parameters + configs + RNG provenance."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": state.model_config.to_dict(),
        "train_config": asdict(state.config),
        "step": state.step,
        "setting": state.config.setting,
        "rng_provenance": {"seed": state.config.seed, "steps_consumed": state.step},
    }
    save_tensors(path, state.ema if state.ema else state.params, meta)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    tensors, meta = load_tensors(path)
    return tensors, ModelConfig.from_dict(meta["model_config"]), meta


def save_train_state(path: str | Path, state: TrainState) -> None:
    tensors = dict(state.params)
    tensors.update({f"opt_m.{k}": v for k, v in state.m.items()})
    tensors.update({f"opt_v.{k}": v for k, v in state.v.items()})
    tensors.update({f"ema.{k}": v for k, v in state.ema.items()})
    tensors["loss_history"] = np.asarray(state.loss_history, dtype=np.float32)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": state.model_config.to_dict(),
        "train_config": asdict(state.config),
        "step": state.step,
        "rng_state": state.rng.bit_generator.state,
    }
    save_tensors(path, tensors, meta)


def load_train_state(path: str | Path) -> TrainState:
    tensors, meta = load_tensors(path)
    params = {
        k: v
        for k, v in tensors.items()
        if not k.startswith(("opt_m.", "opt_v.", "ema.")) and k != "loss_history"
    }
    state = TrainState(
        params=params,
        m={k[len("opt_m.") :]: v for k, v in tensors.items() if k.startswith("opt_m.")},
        v={k[len("opt_v.") :]: v for k, v in tensors.items() if k.startswith("opt_v.")},
        ema={k[len("ema.") :]: v for k, v in tensors.items() if k.startswith("ema.")},
        step=meta["step"],
        rng=np.random.Generator(np.random.PCG64()),
        config=TrainConfig(**meta["train_config"]),
        model_config=ModelConfig.from_dict(meta["model_config"]),
        loss_history=[float(x) for x in tensors["loss_history"]],
    )
    state.rng.bit_generator.state = meta["rng_state"]
    if not state.ema:
        state.ema = {k: v.copy() for k, v in params.items()}
    return state


def train(
    config: TrainConfig,
    dataset: Dataset,
    out_dir: str | Path,
    model_config: ModelConfig | None = None,
    resume_from: str | Path | None = None,
    log_every: int = 50,
) -> Path:
    """Run the training loop; returns the final checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume_from is not None:
        state = load_train_state(resume_from)
    else:
        state = init_state(config, model_config)

    log_path = out_dir / "train_log.txt"
    mode = "a" if resume_from is not None else "w"
    with log_path.open(mode) as log:
        if mode == "w":
            log.write("step\tloss\twall_ms\tsetting\n")
        while state.step < config.steps:
            t0 = time.perf_counter()
            arrays = _prepare(state, dataset)
            loss = train_step(state, arrays)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if state.step % log_every == 0 or state.step == config.steps:
                log.write(f"{state.step}\t{loss:.6f}\t{wall_ms:.2f}\t{config.setting}\n")
                log.flush()
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                save_train_state(out_dir / "train_state.sfck", state)
                save_checkpoint(out_dir / f"checkpoint_{state.step:06d}.sfck", state)

    save_train_state(out_dir / "train_state.sfck", state)
    final = out_dir / "checkpoint_final.sfck"
    save_checkpoint(final, state)
    (out_dir / "train_summary.json").write_text(
        json.dumps({"setting": config.setting, "steps": state.step, "final_loss": state.loss_history[-1] if state.loss_history else None})
    )
    return final

"""Training-batch construction: grouping, subset sampling, conditional sub-mix
selection, per-group shared noise, logit-normal timesteps, condition dropout.

A batch holds B stem entries partitioned into groups; every group's entries
come from one composition. Sub-mixes for the conditional-generation task are
summed in the latent domain, which equals waveform-domain mixing exactly
because the codec is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as model_mod
from .corpus import STEM_TYPES, frames_per_beat, read_latent, read_manifest

CONDITION_FIELDS = ("stem_type", "style_token", "tempo", "context", "activity_mask")


@dataclass
class DatasetStem:
    stem_type: str
    latent: np.ndarray  # (T, D)
    mask: np.ndarray  # (T,) uint8


@dataclass
class DatasetComposition:
    composition_id: int
    tempo: int
    phase: int
    style_seed: int
    stems: list[DatasetStem]


class Dataset:
    """In-memory view of a corpus manifest plus its latents."""

    def __init__(self, compositions: list[DatasetComposition]):
        if not compositions:
            raise ValueError("dataset is empty")
        self.compositions = compositions
        self.clip_frames = compositions[0].stems[0].latent.shape[0]

    @classmethod
    def load(cls, manifest_path: str | Path) -> "Dataset":
        root = Path(manifest_path).parent
        comps = []
        for rec in read_manifest(manifest_path):
            stems = [
                DatasetStem(
                    stem_type=s["stem_type"],
                    latent=read_latent(root / s["latent_path"]),
                    mask=np.frombuffer(s["mask"].encode(), dtype=np.uint8) - ord("0"),
                )
                for s in rec["stems"]
            ]
            comps.append(
                DatasetComposition(
                    composition_id=rec["composition_id"],
                    tempo=rec["tempo"],
                    phase=rec["phase"],
                    style_seed=rec["style_seed"],
                    stems=stems,
                )
            )
        return cls(comps)


@dataclass
class ConditionSet:
    stem_type: int
    style_token: int
    tempo_bpm: int
    context_types: np.ndarray = field(default_factory=lambda: np.zeros(len(STEM_TYPES)))
    submix_latent: np.ndarray | None = None
    activity_mask: np.ndarray | None = None
    drop_flags: dict[str, bool] = field(default_factory=dict)


@dataclass
class BatchEntry:
    target: np.ndarray  # (T, D)
    group_id: int
    composition_index: int  # index into dataset.compositions
    stem_index: int  # index into that composition's stems
    conditions: ConditionSet
    noise: np.ndarray | None = None
    timestep: float | None = None


@dataclass
class TrainingBatch:
    entries: list[BatchEntry]
    group_count: int
    task_flags: dict[int, str] = field(default_factory=dict)  # group -> from_scratch|conditional
    group_members: dict[int, list[int]] = field(default_factory=dict)  # group -> stem indices taken


def build_batch(dataset: Dataset, batch_size: int, grouping_enabled: bool, rng: np.random.Generator) -> TrainingBatch:
    """Fill a batch by repeatedly sampling a composition and a stem subset.

    Subset size is uniform in [1, K]; a subset that would overflow the batch
    is truncated to the remaining slots. With grouping disabled every entry
    is its own size-1 group from an independently sampled composition.
    """
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    entries: list[BatchEntry] = []
    group_members: dict[int, list[int]] = {}
    group = 0
    while len(entries) < batch_size:
        comp_idx = int(rng.integers(0, len(dataset.compositions)))
        comp = dataset.compositions[comp_idx]
        k = len(comp.stems)
        if grouping_enabled:
            size = int(rng.integers(1, k + 1))
            size = min(size, batch_size - len(entries))
        else:
            size = 1
        members = [int(i) for i in rng.choice(k, size=size, replace=False)]
        group_members[group] = members
        for stem_idx in members:
            stem = comp.stems[stem_idx]
            entries.append(
                BatchEntry(
                    target=stem.latent,
                    group_id=group,
                    composition_index=comp_idx,
                    stem_index=stem_idx,
                    conditions=ConditionSet(
                        stem_type=STEM_TYPES.index(stem.stem_type),
                        style_token=comp.style_seed,
                        tempo_bpm=comp.tempo,
                        activity_mask=stem.mask,
                    ),
                )
            )
        group += 1
    return TrainingBatch(entries=entries, group_count=group, group_members=group_members)


def select_conditional_groups(
    batch: TrainingBatch,
    dataset: Dataset,
    rng: np.random.Generator,
    conditional_fraction: float = 0.5,
) -> TrainingBatch:
    """Flag ~half the groups conditional and attach their sub-mix conditions.

    A conditional group's sub-mix is a nonempty uniform subset of its
    composition's left-out stems, summed in the latent domain. Groups that
    consumed all of their composition's stems stay from-scratch.
    """
    n_cond = math.ceil(batch.group_count * conditional_fraction)
    chosen = set(rng.choice(batch.group_count, size=n_cond, replace=False).tolist()) if n_cond else set()
    for g in range(batch.group_count):
        batch.task_flags[g] = "from_scratch"
    for g in sorted(chosen):
        comp_idx = next(e.composition_index for e in batch.entries if e.group_id == g)
        comp = dataset.compositions[comp_idx]
        taken = set(batch.group_members[g])
        left_out = [i for i in range(len(comp.stems)) if i not in taken]
        if not left_out:
            continue
        size = int(rng.integers(1, len(left_out) + 1))
        picked = [int(i) for i in rng.choice(len(left_out), size=size, replace=False)]
        submix = np.zeros_like(comp.stems[0].latent)
        ctx = np.zeros(len(STEM_TYPES))
        for j in picked:
            stem = comp.stems[left_out[j]]
            submix = submix + stem.latent
            ctx[STEM_TYPES.index(stem.stem_type)] = 1.0
        batch.task_flags[g] = "conditional"
        for e in batch.entries:
            if e.group_id == g:
                e.conditions.submix_latent = submix
                e.conditions.context_types = ctx
    return batch


def align_beat_phase(noise: np.ndarray, period: int, phase: float) -> np.ndarray:
    """Pair a noise tensor to a groove phase, preserving its distribution.

    Every frame's channel mean is a N(0, 1/D) sequence; its beat-frequency
    Fourier component (over the largest whole number of periods) is a complex
    Gaussian whose angle is uniform. Re-anchoring that angle to the target
    phase is a measure-preserving map when the target is itself uniform
    (corpus phases are uniform, and callers add U[0,1) jitter), so each noise
    tensor is still exactly standard normal while carrying the group's beat
    alignment -- the property that shared inference noise is meant to
    transfer between stems. Modified in place and returned.
    """
    frames = noise.shape[0]
    if period <= 1 or frames < period:
        return noise
    window = period * (frames // period)
    mean = noise[:window].mean(axis=1)
    basis = np.exp(-2j * np.pi * np.arange(window) / period)
    z = mean @ basis
    target = np.abs(z) * np.exp(-2j * np.pi * phase / period)
    delta = (2.0 / window) * ((target - z) * np.conj(basis)).real
    noise[:window] += delta[:, None]
    return noise


def assign_noise(
    batch: TrainingBatch,
    sharing_enabled: bool,
    rng: np.random.Generator,
    dataset: Dataset | None = None,
) -> TrainingBatch:
    """One shared standard-normal tensor per group, or per entry when off.

    When the dataset is given, each tensor is beat-phase paired to its
    composition (see align_beat_phase); grouping means group members share
    one such pairing, which is what makes a shared inference noise select
    one common groove phase across stems.
    """

    def fresh(composition_index: int) -> np.ndarray:
        eps = rng.standard_normal(batch.entries[0].target.shape)
        if dataset is not None:
            comp = dataset.compositions[composition_index]
            period = frames_per_beat(comp.tempo)
            eps = align_beat_phase(eps, period, comp.phase + rng.uniform())
        return eps

    if sharing_enabled:
        shared: dict[int, np.ndarray] = {}
        for e in batch.entries:
            if e.group_id not in shared:
                shared[e.group_id] = fresh(e.composition_index)
            e.noise = shared[e.group_id]
    else:
        for e in batch.entries:
            e.noise = fresh(e.composition_index)
    return batch


def sample_timesteps(
    batch: TrainingBatch,
    mu: float,
    sigma: float,
    rng: np.random.Generator,
    share_in_group: bool = False,
) -> TrainingBatch:
    """Logit-normal timesteps: t = sigmoid(mu + sigma * z), strictly in (0,1)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if share_in_group:
        z = {g: rng.standard_normal() for g in range(batch.group_count)}
        for e in batch.entries:
            e.timestep = float(1.0 / (1.0 + np.exp(-(mu + sigma * z[e.group_id]))))
    else:
        for e in batch.entries:
            e.timestep = float(1.0 / (1.0 + np.exp(-(mu + sigma * rng.standard_normal()))))
    return batch


def apply_condition_dropout(batch: TrainingBatch, p: float, rng: np.random.Generator) -> TrainingBatch:
    """Independently drop each condition field with probability p.

    The context-types multi-hot and the sub-mix channels form a single unit.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    for e in batch.entries:
        e.conditions.drop_flags = {name: bool(rng.random() < p) for name in CONDITION_FIELDS}
    return batch


def prepare_batch(
    dataset: Dataset,
    batch_size: int,
    rng: np.random.Generator,
    grouping: bool = True,
    noise_sharing: bool = True,
    conditional_fraction: float = 0.5,
    dropout_p: float = 1.0 / 3.0,
    timestep_mu: float = 0.0,
    timestep_sigma: float = 1.0,
    share_timestep_in_group: bool = False,
) -> TrainingBatch:
    """The full construction pipeline in spec order."""
    batch = build_batch(dataset, batch_size, grouping, rng)
    batch = select_conditional_groups(batch, dataset, rng, conditional_fraction)
    batch = assign_noise(batch, noise_sharing, rng, dataset)
    batch = sample_timesteps(batch, timestep_mu, timestep_sigma, rng, share_timestep_in_group)
    batch = apply_condition_dropout(batch, dropout_p, rng)
    return batch


def batch_to_arrays(batch: TrainingBatch) -> dict[str, np.ndarray]:
    """Stack a prepared batch into model-ready tensors (dropout folded in)."""
    entries = batch.entries
    b = len(entries)
    t, d = entries[0].target.shape
    x0 = np.stack([e.target for e in entries])
    eps = np.stack([e.noise for e in entries])
    ts = np.array([e.timestep for e in entries])

    stem_type = np.empty(b, dtype=np.int64)
    style = np.empty(b, dtype=np.int64)
    tempo = np.empty(b, dtype=np.int64)
    ctx = np.zeros((b, len(STEM_TYPES)))
    ctx_dropped = np.zeros(b, dtype=bool)
    submix = np.zeros((b, t, d))
    act_idx = np.full((b, t), model_mod.ACT_UNCONSTRAINED, dtype=np.int64)
    act_dropped = np.zeros(b, dtype=bool)

    for i, e in enumerate(entries):
        c = e.conditions
        drops = c.drop_flags
        stem_type[i] = model_mod.NUM_STEM_TYPES if drops.get("stem_type") else c.stem_type
        style[i] = model_mod.NUM_STYLES if drops.get("style_token") else c.style_token
        tempo[i] = model_mod.NUM_TEMPO if drops.get("tempo") else model_mod.tempo_bucket(c.tempo_bpm)
        if drops.get("context"):
            ctx_dropped[i] = True
        else:
            ctx[i] = c.context_types
            if c.submix_latent is not None:
                submix[i] = c.submix_latent
        if drops.get("activity_mask") or c.activity_mask is None:
            act_dropped[i] = drops.get("activity_mask", False)
            if c.activity_mask is None and not act_dropped[i]:
                act_idx[i] = model_mod.ACT_UNCONSTRAINED
        else:
            act_idx[i] = np.where(c.activity_mask > 0, model_mod.ACT_ACTIVE, model_mod.ACT_SILENT)

    cond = model_mod.CondArrays(
        stem_type=stem_type,
        style=style,
        tempo=tempo,
        ctx=ctx,
        ctx_dropped=ctx_dropped,
        submix=submix,
        act_idx=act_idx,
        act_dropped=act_dropped,
    )
    return {"x0": x0, "eps": eps, "t": ts, "cond": cond}

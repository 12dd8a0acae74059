"""Desk-scale metric suite: clip features, Frechet distances, the beat
synchronization oracle, frame-wise activity F1, and the ablation harness.

The 21-dim clip feature vector stands in for a pretrained audio embedding:
{beat period, beat phase, activity ratio, per-channel latent energy (8),
frame-RMS envelope mean and variance, dominant-basis histogram (8)}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import codec, corpus
from .codec import LATENT_DIM

FEATURE_DIM = 2 + 1 + LATENT_DIM + 2 + LATENT_DIM

MIN_PERIOD_LAG = 4
MAX_PERIOD_LAG = 16


def _detrend(env: np.ndarray) -> np.ndarray:
    """Remove envelope drift slower than the longest seekable period.

    A centered moving average (window just above MAX_PERIOD_LAG, reflect
    padded) tracks amplitude wobble that spans more than one beat period;
    subtracting it leaves the beat-rate structure intact while keeping slow
    drift from dominating the autocorrelation.
    """
    win = MAX_PERIOD_LAG + 1
    if env.size <= win:
        return env - env.mean()
    half = win // 2
    padded = np.pad(env, half, mode="reflect")
    kernel = np.full(win, 1.0 / win)
    trend = np.convolve(padded, kernel, mode="valid")[: env.size]
    return env - trend


def estimate_period_phase(samples: np.ndarray) -> tuple[int, int]:
    """Beat period and onset phase (frames) from the frame-RMS envelope.

    Both estimates use only the longest contiguous active run of frames, so
    activity-plan silences do not bias them. Period: the envelope is
    detrended (drift slower than the longest seekable period is removed),
    candidate lags in [4, 16] must be local maxima of the autocorrelation
    (rejects broadband-noise lags), each is scored by the mean
    autocorrelation over its in-range integer multiples (harmonic scoring:
    a true fundamental is supported by all of its multiples, a harmonic
    multiple only by itself), and the smallest candidate within 10% of the
    best score wins. Phase: argmax of the active envelope
    folded modulo the period at absolute frame indices. Silent or aperiodic
    clips return the (0, 0) sentinel.
    """
    full_env = codec.frame_rms(samples)
    if full_env.size == 0 or full_env.max() <= 0:
        return 0, 0
    active = codec.detect_activity(samples).astype(bool)
    if not active.any():
        return 0, 0
    # longest contiguous active run
    best_start = best_len = run_start = run_len = 0
    for f in range(active.size + 1):
        if f < active.size and active[f]:
            if run_len == 0:
                run_start = f
            run_len += 1
            if run_len > best_len:
                best_start, best_len = run_start, run_len
        else:
            run_len = 0
    env = full_env[best_start : best_start + best_len]
    centered = _detrend(env)
    denom = float(np.sum(centered**2))
    if denom <= 0:
        return 0, 0
    max_lag = min(MAX_PERIOD_LAG, env.size - 1)
    lags = np.arange(MIN_PERIOD_LAG, max_lag + 1)
    if lags.size == 0:
        return 0, 0
    ac = np.array([np.sum(centered[:-lag] * centered[lag:]) / denom for lag in lags])
    # local maxima only (range endpoints compare against their one inner
    # neighbor); a flat noise floor has no pronounced peak and falls through
    # to the sentinel
    padded = np.concatenate([[-np.inf], ac, [-np.inf]])
    is_peak = (ac >= padded[:-2]) & (ac >= padded[2:])
    if not is_peak.any():
        return 0, 0
    scores = np.full(lags.size, -np.inf)
    for i in np.flatnonzero(is_peak):
        multiples = np.arange(lags[i], max_lag + 1, lags[i])
        scores[i] = float(np.mean(ac[multiples - MIN_PERIOD_LAG]))
    best = scores.max()
    if best <= 0.05:
        return 0, 0
    candidates = np.flatnonzero(scores >= 0.9 * best)
    period = int(lags[candidates[0]])
    folded = np.zeros(period)
    counts = np.zeros(period)
    for f in range(env.size):
        folded[(best_start + f) % period] += env[f]
        counts[(best_start + f) % period] += 1
    phase = int(np.argmax(folded / np.maximum(counts, 1)))
    return period, phase


def extract_features(samples: np.ndarray) -> np.ndarray:
    """The 21-dim clip feature vector (sentinel period/phase 0 when silent)."""
    env = codec.frame_rms(samples)
    period, phase = estimate_period_phase(samples)
    activity = codec.detect_activity(samples)
    latent = codec.encode(samples)
    energy = np.mean(latent**2, axis=0)

    frame_norms = np.linalg.norm(latent, axis=1)
    live = frame_norms > 1e-9
    hist = np.zeros(LATENT_DIM)
    if live.any():
        dom = np.argmax(np.abs(latent[live]), axis=1)
        hist = np.bincount(dom, minlength=LATENT_DIM) / dom.size

    feats = np.concatenate(
        [
            [float(period), float(phase), float(activity.mean()) if activity.size else 0.0],
            energy,
            [float(env.mean()), float(env.var())],
            hist,
        ]
    )
    assert feats.shape == (FEATURE_DIM,)
    return feats


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), PSD-safe."""
    set_a = np.asarray(set_a, dtype=np.float64)
    set_b = np.asarray(set_b, dtype=np.float64)
    dim = set_a.shape[1]
    for name, s in (("a", set_a), ("b", set_b)):
        if s.shape[0] < dim + 1:
            raise ValueError(f"set {name} has {s.shape[0]} samples; need >= {dim + 1} for a stable covariance")
    mu_a, mu_b = set_a.mean(axis=0), set_b.mean(axis=0)
    cov_a = np.cov(set_a, rowvar=False) + 1e-6 * np.eye(dim)
    cov_b = np.cov(set_b, rowvar=False) + 1e-6 * np.eye(dim)

    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    trace_term = float(np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sum(np.sqrt(vals)))
    return float(np.sum((mu_a - mu_b) ** 2) + trace_term)


def macro_fad_by_stem_type(
    generated: dict[str, np.ndarray],
    reference: dict[str, np.ndarray],
) -> tuple[float, list[str]]:
    """Unweighted mean of per-type Frechet distances over reference types.

    Types present only in the generated set are excluded and reported back.
    """
    excluded = sorted(set(generated) - set(reference))
    distances = []
    for stem_type in sorted(reference):
        if stem_type not in generated:
            continue
        distances.append(frechet_distance(generated[stem_type], reference[stem_type]))
    if not distances:
        raise ValueError("no overlapping stem types between generated and reference")
    return float(np.mean(distances)), excluded


def _circular_dist(a: int, b: int, period: int) -> int:
    d = abs(a - b) % period
    return min(d, period - d)


def sync_coherence(stems: list[np.ndarray]) -> float:
    """Fraction of non-silent stems agreeing on beat period (exactly) and
    phase (within +-1 frame, circular). Order-invariant; single stem -> 1.0."""
    if not stems:
        raise ValueError("need at least one stem")
    estimates = []
    for w in stems:
        if codec.rms(w) <= 1e-12:
            continue
        estimates.append(estimate_period_phase(w))
    if not estimates:
        warnings.warn("all stems silent; coherence undefined, returning 0")
        return 0.0
    if len(estimates) == 1:
        return 1.0
    periods = [p for p, _ in estimates]
    modal_period = max(sorted(set(periods)), key=periods.count)
    if modal_period == 0:
        return 0.0
    on_period = [(p, ph) for p, ph in estimates if p == modal_period]
    best = 0
    for _, ref_phase in sorted(on_period):
        count = sum(1 for _, ph in on_period if _circular_dist(ph, ref_phase, modal_period) <= 1)
        best = max(best, count)
    return best / len(estimates)


def activity_f1(target_mask: np.ndarray, generated: np.ndarray, cutoff_db: float = -60.0) -> float:
    """F1 of detected activity against the requested mask (active = positive).

    Both empty of positives -> 1.0 by convention.
    """
    detected = codec.detect_activity(generated, cutoff_db)
    target = np.asarray(target_mask).astype(bool)
    if detected.size != target.size:
        raise ValueError(f"mask length {target.size} != generated frame count {detected.size}")
    det = detected.astype(bool)
    tp = int(np.sum(det & target))
    fp = int(np.sum(det & ~target))
    fn = int(np.sum(~det & target))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


class StyleClassifier:
    """Nearest-centroid style-token classifier over clip feature vectors."""

    def __init__(self) -> None:
        self.centroids: dict[int, np.ndarray] = {}
        self.scale: np.ndarray | None = None

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "StyleClassifier":
        features = np.asarray(features, dtype=np.float64)
        self.scale = features.std(axis=0)
        self.scale[self.scale == 0] = 1.0
        for token in np.unique(labels):
            self.centroids[int(token)] = features[labels == token].mean(axis=0) / self.scale
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64) / self.scale
        tokens = sorted(self.centroids)
        mat = np.stack([self.centroids[t] for t in tokens])
        dists = np.linalg.norm(features[:, None, :] - mat[None, :, :], axis=2)
        return np.array([tokens[i] for i in np.argmin(dists, axis=1)])

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


# ---------------------------------------------------------------------------
# evaluation harness
# ---------------------------------------------------------------------------


@dataclass
class EvalCell:
    setting: str
    infer_share: str  # "(i)" or "(ii)"
    fad_stem: float
    fad_mix: float
    style_acc: float
    sync: float
    f1: float | None
    wall_time_ms: float


REPORT_COLUMNS = ("setting", "infer_share", "fad_stem", "fad_mix", "style_acc", "sync", "f1", "wall_time_ms")


def format_report(cells: list[EvalCell]) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    for c in cells:
        lines.append(
            "\t".join(
                [
                    c.setting,
                    c.infer_share,
                    f"{c.fad_stem:.6f}",
                    f"{c.fad_mix:.6f}",
                    f"{c.style_acc:.4f}",
                    f"{c.sync:.4f}",
                    "-" if c.f1 is None else f"{c.f1:.4f}",
                    f"{c.wall_time_ms:.1f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def held_out_specs(n: int, seed: int, clip_frames: int = 96, n_stems: int | None = None) -> list[corpus.CompositionSpec]:
    """Composition specs drawn from the generator with a held-out seed."""
    cfg = corpus.CorpusConfig(num_compositions=n, clip_frames=clip_frames, seed=seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    specs = []
    while len(specs) < n:
        spec = corpus.sample_composition_spec(cfg, rng)
        if n_stems is not None:
            if len(spec.stems) < n_stems:
                continue
            spec.stems = spec.stems[:n_stems]
        specs.append(spec)
    return specs


def reference_features(specs: list[corpus.CompositionSpec]) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """Ground-truth per-stem-type features, mix features, and style labels."""
    by_type: dict[str, list[np.ndarray]] = {}
    mix_feats = []
    styles = []
    for spec in specs:
        waves = corpus.synthesize_composition(spec)
        for stem, w in zip(spec.stems, waves):
            by_type.setdefault(stem.stem_type, []).append(extract_features(w))
        mix_feats.append(extract_features(codec.normalize_mix(codec.mix(waves))))
        styles.append(spec.style_seed)
    return (
        {k: np.stack(v) for k, v in by_type.items()},
        np.stack(mix_feats),
        np.asarray(styles),
    )


def evaluate_generations(
    stem_sets: list[list[np.ndarray]],
    stem_types: list[list[str]],
    style_labels: np.ndarray,
    reference_by_type: dict[str, np.ndarray],
    reference_mix: np.ndarray,
    style_classifier: StyleClassifier,
    target_masks: list[list[np.ndarray | None]] | None = None,
) -> dict:
    """Aggregate all metrics over a list of generated stem groups."""
    gen_by_type: dict[str, list[np.ndarray]] = {}
    mix_feats = []
    syncs = []
    f1s = []
    for gi, (stems, types) in enumerate(zip(stem_sets, stem_types)):
        for w, stem_type in zip(stems, types):
            gen_by_type.setdefault(stem_type, []).append(extract_features(w))
        mixed = codec.mix(stems)
        if codec.rms(mixed) > 0:
            mixed = codec.normalize_mix(mixed)
        mix_feats.append(extract_features(mixed))
        syncs.append(sync_coherence(stems))
        if target_masks is not None:
            for w, mask in zip(stems, target_masks[gi]):
                if mask is not None:
                    f1s.append(activity_f1(mask, w))
    gen_mix = np.stack(mix_feats)
    fad_stem, _ = macro_fad_by_stem_type(
        {k: np.stack(v) for k, v in gen_by_type.items()}, reference_by_type
    )
    return {
        "fad_stem": fad_stem,
        "fad_mix": frechet_distance(gen_mix, reference_mix),
        "style_acc": style_classifier.accuracy(gen_mix, style_labels),
        "sync": float(np.mean(syncs)),
        "f1": float(np.mean(f1s)) if f1s else None,
    }


def run_eval_suite(
    checkpoints: dict[str, tuple[dict, object]],
    specs: list[corpus.CompositionSpec],
    sample_config_kwargs: dict | None = None,
    seed: int = 1234,
    workflow_requests: list | None = None,
) -> tuple[list[EvalCell], list]:
    """Evaluate each (training setting x inference noise-sharing) cell.

    checkpoints: setting label -> (params, ModelConfig). Returns the metric
    cells and, when workflow_requests is given, a list of WorkflowReports for
    the k_pass/two_pass/one_pass comparison using the last setting's model.
    """
    import time as _time

    from .sampling import SampleConfig, StemRequest, euler_sample, run_workflow

    sample_config_kwargs = dict(sample_config_kwargs or {})
    ref_by_type, ref_mix, _ = reference_features(specs)
    clf_specs = held_out_specs(max(128, len(specs)), seed=seed + 7, clip_frames=specs[0].clip_frames)
    clf_by_type, clf_mix, clf_styles = reference_features(clf_specs)
    classifier = StyleClassifier().fit(clf_mix, clf_styles)

    cells: list[EvalCell] = []
    for setting, (params, model_config) in checkpoints.items():
        for share, label in ((False, "(i)"), (True, "(ii)")):
            t0 = _time.perf_counter()
            stem_sets, type_sets, styles = [], [], []
            for si, spec in enumerate(specs):
                requests = [
                    StemRequest(stem_type=s.stem_type, style_token=spec.style_seed, tempo_bpm=spec.tempo)
                    for s in spec.stems
                ]
                config = SampleConfig(share_noise_at_inference=share, seed=seed + si, **sample_config_kwargs)
                rng = np.random.Generator(np.random.PCG64(config.seed))
                latents = euler_sample(params, model_config, requests, config, rng, frames=spec.clip_frames)
                stem_sets.append([codec.decode(lat) for lat in latents])
                type_sets.append([s.stem_type for s in spec.stems])
                styles.append(spec.style_seed)
            metrics = evaluate_generations(
                stem_sets, type_sets, np.asarray(styles), ref_by_type, ref_mix, classifier
            )
            cells.append(
                EvalCell(
                    setting=setting,
                    infer_share=label,
                    wall_time_ms=(_time.perf_counter() - t0) * 1e3,
                    **metrics,
                )
            )

    reports = []
    if workflow_requests:
        params, model_config = list(checkpoints.values())[-1]
        for mode in ("k_pass", "two_pass", "one_pass"):
            rng = np.random.Generator(np.random.PCG64(seed))
            from .sampling import SampleConfig as _SC

            _, report = run_workflow(
                params, model_config, workflow_requests, mode, _SC(seed=seed, **sample_config_kwargs), rng
            )
            reports.append(report)
    return cells, reports

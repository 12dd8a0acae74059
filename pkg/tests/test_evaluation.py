import numpy as np
import pytest

from stemflow import codec, evaluation
from stemflow.evaluation import (
    FEATURE_DIM,
    EvalCell,
    StyleClassifier,
    activity_f1,
    estimate_period_phase,
    extract_features,
    format_report,
    frechet_distance,
    held_out_specs,
    sync_coherence,
)


def periodic_wave(period: int, phase: int, frames: int = 96, channel: int = 0) -> np.ndarray:
    env = np.full(period, 0.4)
    env[0] = 1.0
    amp = np.tile(env, frames // period + 2)[: frames]
    amp = np.roll(amp, phase)
    latent = np.zeros((frames, codec.LATENT_DIM))
    latent[:, channel] = amp
    return codec.decode(latent)


def test_period_phase_estimation():
    for period in (5, 8, 12):
        for phase in (0, 2, period - 1):
            est_p, est_ph = estimate_period_phase(periodic_wave(period, phase))
            assert est_p == period
            assert est_ph == phase


def test_period_phase_on_silence():
    p, ph = estimate_period_phase(np.zeros(96 * codec.HOP))
    assert p == 0 and ph == 0


def test_feature_vector_shape():
    feats = extract_features(periodic_wave(8, 1))
    assert feats.shape == (FEATURE_DIM,)
    assert np.isfinite(feats).all()


def test_frechet_identical_sets_zero():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, FEATURE_DIM))
    assert frechet_distance(x, x.copy()) <= 1e-6


def test_frechet_mean_shift_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 4))
    shift = np.array([1.0, -2.0, 0.5, 0.0])
    d = frechet_distance(x, x + shift)
    np.testing.assert_allclose(d, float(shift @ shift), atol=1e-9)


def test_frechet_diagonal_gaussian_monte_carlo():
    # closed form for diagonal gaussians: |m1-m2|^2 + sum (s1-s2)^2
    rng = np.random.default_rng(2)
    n = 60000
    m1, s1 = np.array([0.0, 1.0]), np.array([1.0, 0.5])
    m2, s2 = np.array([0.5, 0.0]), np.array([2.0, 1.0])
    a = m1 + s1 * rng.standard_normal((n, 2))
    b = m2 + s2 * rng.standard_normal((n, 2))
    closed = float(np.sum((m1 - m2) ** 2) + np.sum((s1 - s2) ** 2))
    assert abs(frechet_distance(a, b) - closed) / closed < 0.05


def test_frechet_symmetry_and_nonnegativity():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((50, 6))
    b = 0.5 * rng.standard_normal((50, 6)) + 1.0
    dab, dba = frechet_distance(a, b), frechet_distance(b, a)
    assert dab >= 0.0
    np.testing.assert_allclose(dab, dba, rtol=1e-8)


def test_frechet_requires_enough_samples():
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((3, 6)), np.zeros((50, 6)))


def test_sync_coherence_cases():
    a = periodic_wave(8, 0)
    b = periodic_wave(8, 0, channel=2)
    assert sync_coherence([a, b]) == 1.0
    off_phase = periodic_wave(8, 4, channel=2)
    # largest phase-agreeing cluster is one of the two stems
    assert sync_coherence([a, off_phase]) == 0.5
    assert sync_coherence([a, b, off_phase]) == pytest.approx(2.0 / 3.0)
    near = periodic_wave(8, 1, channel=2)  # within the +-1 circular tolerance
    assert sync_coherence([a, near]) == 1.0
    assert sync_coherence([a]) == 1.0


def test_activity_f1_cases():
    frames = 32
    active = np.ones(frames)
    wave_all = periodic_wave(8, 0, frames=frames)
    assert activity_f1(active, wave_all) == 1.0
    silent_target = np.zeros(frames)
    assert activity_f1(silent_target, np.zeros(frames * codec.HOP)) == 1.0
    assert activity_f1(silent_target, wave_all) == 0.0
    half = np.concatenate([np.zeros(16), np.ones(16)])
    latent = codec.encode(wave_all).copy()
    latent[:16] = 0.0
    assert activity_f1(half, codec.decode(latent)) == 1.0


def test_style_classifier_separable():
    rng = np.random.default_rng(4)
    centers = rng.standard_normal((4, FEATURE_DIM)) * 10
    feats, labels = [], []
    for c in range(4):
        feats.append(centers[c] + 0.01 * rng.standard_normal((20, FEATURE_DIM)))
        labels.extend([c] * 20)
    feats = np.concatenate(feats)
    labels = np.asarray(labels)
    clf = StyleClassifier().fit(feats, labels)
    assert clf.accuracy(feats, labels) == 1.0


def test_held_out_specs_valid_and_deterministic():
    specs1 = held_out_specs(16, seed=5, n_stems=4)
    specs2 = held_out_specs(16, seed=5, n_stems=4)
    assert len(specs1) == 16
    for s1, s2 in zip(specs1, specs2):
        s1.validate()
        assert len(s1.stems) == 4
        assert s1.tempo == s2.tempo and s1.style_seed == s2.style_seed


def test_format_report_layout():
    cells = [
        EvalCell("A", "(i)", 1.0, 2.0, 0.5, 0.3, None, 10.0),
        EvalCell("C", "(ii)", 0.5, 1.0, 0.9, 0.8, 0.97, 12.0),
    ]
    text = format_report(cells)
    lines = text.splitlines()
    assert lines[0].split("\t") == list(evaluation.REPORT_COLUMNS)
    assert len(lines) == 3
    assert "\t-\t" in lines[1]

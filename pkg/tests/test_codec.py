import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stemflow import codec, wavio


def random_latent(seed: int, frames: int = 96) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((frames, codec.LATENT_DIM)) * 0.05


def test_basis_orthonormal():
    b = codec.basis()
    assert b.shape == (codec.HOP, codec.LATENT_DIM)
    np.testing.assert_allclose(b.T @ b, np.eye(codec.LATENT_DIM), atol=1e-12)


def test_basis_deterministic():
    np.testing.assert_array_equal(codec.basis(), codec.basis().copy())


def test_round_trip_lossless_in_subspace():
    latent = random_latent(0)
    samples = codec.decode(latent)
    np.testing.assert_allclose(codec.encode(samples), latent, atol=1e-12)


def test_encode_projects_out_of_subspace_component():
    # components orthogonal to the basis vanish; re-encoding is then stable
    rng = np.random.default_rng(1)
    samples = rng.standard_normal(96 * codec.HOP) * 0.1
    once = codec.decode(codec.encode(samples))
    twice = codec.decode(codec.encode(once))
    np.testing.assert_allclose(once, twice, atol=1e-12)


def test_codec_linearity_makes_latent_submix_exact():
    a, b = random_latent(2), random_latent(3)
    wave_mix = codec.decode(a) + codec.decode(b)
    np.testing.assert_allclose(codec.decode(a + b), wave_mix, atol=1e-12)
    np.testing.assert_allclose(codec.encode(wave_mix), a + b, atol=1e-12)


def test_mix_unity_gains_and_explicit_gains():
    stems = [codec.decode(random_latent(i)) for i in range(3)]
    np.testing.assert_allclose(codec.mix(stems), sum(stems), atol=1e-15)
    np.testing.assert_allclose(codec.mix(stems, [0.5, 0.0, 1.0]), 0.5 * stems[0] + stems[2], atol=1e-15)


def test_normalize_mix_hits_target_rms():
    samples = codec.decode(random_latent(4))
    out = codec.normalize_mix(samples)
    assert abs(codec.amplitude_to_db(codec.rms(out)) + 16.0) < 1e-9


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (32, 8), elements=st.floats(-1, 1)))
def test_normalize_mix_idempotent(latent):
    samples = codec.decode(latent)
    if codec.rms(samples) == 0.0:
        with pytest.raises(ValueError):
            codec.normalize_mix(samples)
        return
    once = codec.normalize_mix(samples)
    np.testing.assert_allclose(codec.normalize_mix(once), once, atol=1e-9)


def test_normalize_mix_rejects_silence():
    with pytest.raises(ValueError):
        codec.normalize_mix(np.zeros(codec.HOP * 4))


def test_frame_rms_shape_and_values():
    latent = np.zeros((8, codec.LATENT_DIM))
    latent[2] = 1.0
    env = codec.frame_rms(codec.decode(latent))
    assert env.shape == (8,)
    assert env[2] > 0 and env[0] == 0.0


def test_detect_activity_flags_silent_span():
    latent = random_latent(5, frames=32)
    latent[:16] = 0.0
    mask = codec.detect_activity(codec.decode(latent))
    assert mask[:16].sum() == 0
    assert mask[16:].all()


def test_db_round_trip():
    for db in (-60.0, -16.0, -3.0):
        assert abs(codec.amplitude_to_db(codec.db_to_amplitude(db)) - db) < 1e-12


def test_wav_round_trip_quantization(tmp_path):
    samples = codec.decode(random_latent(6))
    samples *= 0.8 / np.abs(samples).max()
    path = tmp_path / "clip.wav"
    wavio.write_wav(path, samples)
    back, sr = wavio.read_wav(path)
    assert sr == codec.SAMPLE_RATE
    assert back.shape == samples.shape
    assert np.abs(back - samples).max() <= 1.0 / 32767


def test_wav_bytes_matches_file(tmp_path):
    samples = codec.decode(random_latent(7))
    path = tmp_path / "clip.wav"
    wavio.write_wav(path, samples)
    assert path.read_bytes() == wavio.wav_bytes(samples)

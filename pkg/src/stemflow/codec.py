"""Deterministic waveform <-> latent codec plus waveform-domain utilities.

The codec is a fixed orthonormal per-frame linear transform: each hop of 128
mono samples is projected onto 8 basis vectors, giving 12 latent frames per
second at the 1536 Hz sample rate. The toy composition generator only emits
audio inside the span of this basis, so encode/decode round trips are exact
on-corpus and latent-domain mixing matches waveform-domain mixing.
"""

from __future__ import annotations

import numpy as np

SAMPLE_RATE = 1536
HOP = 128
LATENT_DIM = 8
FRAME_RATE = SAMPLE_RATE // HOP  # 12 frames per second

_BASIS_SEED = 0x5EEDBA5E

_basis_cache: np.ndarray | None = None


def basis() -> np.ndarray:
    """The fixed (HOP, LATENT_DIM) orthonormal analysis basis."""
    global _basis_cache
    if _basis_cache is None:
        rng = np.random.Generator(np.random.PCG64(_BASIS_SEED))
        raw = rng.standard_normal((HOP, LATENT_DIM))
        q, r = np.linalg.qr(raw)
        # fix signs so the basis does not depend on LAPACK's sign convention
        q = q * np.sign(np.diag(r))
        _basis_cache = np.ascontiguousarray(q)
    return _basis_cache


def db_to_amplitude(db: float) -> float:
    return float(10.0 ** (db / 20.0))


def amplitude_to_db(amp: float) -> float:
    return float(20.0 * np.log10(amp))


def rms(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(samples**2)))


def encode(samples: np.ndarray) -> np.ndarray:
    """Project a waveform onto the codec basis, one latent frame per hop."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("waveform must be 1-D mono")
    if samples.size % HOP != 0:
        raise ValueError(f"waveform length {samples.size} not divisible by hop {HOP}")
    frames = samples.reshape(-1, HOP)
    return frames @ basis()


def decode(latent: np.ndarray) -> np.ndarray:
    """Expand latent frames back to a waveform via the transposed basis."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[1] != LATENT_DIM:
        raise ValueError(f"latent must be (T, {LATENT_DIM}), got {latent.shape}")
    return (latent @ basis().T).reshape(-1)


def frame_rms(samples: np.ndarray) -> np.ndarray:
    """Per-hop RMS envelope of a waveform."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size % HOP != 0:
        raise ValueError(f"waveform length {samples.size} not divisible by hop {HOP}")
    frames = samples.reshape(-1, HOP)
    return np.sqrt(np.mean(frames**2, axis=1))


def detect_activity(samples: np.ndarray, cutoff_db: float = -60.0) -> np.ndarray:
    """Binary per-frame activity: 1 where frame RMS >= the cutoff, else 0.

    RMS is measured relative to digital full scale 1.0. An empty waveform
    yields an empty mask.
    """
    env = frame_rms(samples)
    return (env >= db_to_amplitude(cutoff_db)).astype(np.uint8)


def mix(stems: list[np.ndarray], gains: list[float] | None = None) -> np.ndarray:
    """Sample-wise gain-weighted sum. No clipping is applied."""
    if not stems:
        raise ValueError("need at least one stem to mix")
    if gains is None:
        gains = [1.0] * len(stems)
    if len(gains) != len(stems):
        raise ValueError(f"{len(stems)} stems but {len(gains)} gains")
    n = len(stems[0])
    for s in stems:
        if len(s) != n:
            raise ValueError("stem lengths differ")
    out = np.zeros(n, dtype=np.float64)
    for g, s in zip(gains, stems):
        out += g * np.asarray(s, dtype=np.float64)
    return out


def normalize_mix(samples: np.ndarray, target_dbfs: float = -16.0) -> np.ndarray:
    """Scale by one global gain so overall RMS hits the target dBFS.

    Relative sample ratios are unchanged; an all-zero input has no defined
    gain and raises.
    """
    samples = np.asarray(samples, dtype=np.float64)
    level = rms(samples)
    if level == 0.0:
        raise ValueError("cannot normalize an all-zero waveform")
    return samples * (db_to_amplitude(target_dbfs) / level)

import numpy as np

from stemflow import model
from stemflow.model import CondArrays, ModelConfig


def tiny_cond(b: int, t: int, rng: np.random.Generator) -> CondArrays:
    return CondArrays(
        stem_type=rng.integers(0, model.NUM_STEM_TYPES, b),
        style=rng.integers(0, model.NUM_STYLES, b),
        tempo=rng.integers(0, model.NUM_TEMPO, b),
        ctx=(rng.random((b, model.NUM_STEM_TYPES)) < 0.3).astype(float),
        ctx_dropped=np.zeros(b, dtype=bool),
        submix=rng.standard_normal((b, t, 8)) * 0.1,
        act_idx=rng.integers(0, 3, (b, t)),
        act_dropped=np.zeros(b, dtype=bool),
    )


def test_init_deterministic_and_param_count():
    cfg = ModelConfig(parameter_seed=5)
    p1 = model.init_params(cfg)
    p2 = model.init_params(cfg)
    assert set(p1) == set(p2)
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])
    assert model.param_count(p1) == model.param_count(p2)


def test_zero_head_gives_zero_velocity_at_init():
    cfg = ModelConfig()
    params = model.init_params(cfg)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 16, 8))
    cond = tiny_cond(2, 16, rng)
    v = model.velocity(params, cfg, x, np.array([0.4, 0.9]), cond)
    np.testing.assert_array_equal(v, np.zeros_like(v))


def test_no_cross_batch_mixing():
    cfg = ModelConfig()
    params = model.init_params(cfg, dtype=np.float64)
    params["head.w"] = np.random.default_rng(1).standard_normal(params["head.w"].shape)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 12, 8))
    cond = tiny_cond(3, 12, rng)
    t = np.array([0.2, 0.5, 0.8])
    full = model.velocity(params, cfg, x, t, cond)
    for i in range(3):
        solo_cond = CondArrays(
            stem_type=cond.stem_type[i : i + 1],
            style=cond.style[i : i + 1],
            tempo=cond.tempo[i : i + 1],
            ctx=cond.ctx[i : i + 1],
            ctx_dropped=cond.ctx_dropped[i : i + 1],
            submix=cond.submix[i : i + 1],
            act_idx=cond.act_idx[i : i + 1],
            act_dropped=cond.act_dropped[i : i + 1],
        )
        solo = model.velocity(params, cfg, x[i : i + 1], t[i : i + 1], solo_cond)
        np.testing.assert_allclose(solo[0], full[i], atol=1e-12)


def test_time_features_shape_and_range():
    feats = model.time_features(np.array([0.0, 0.5, 1.0]), np.float64)
    assert feats.shape == (3, 32)
    assert np.abs(feats).max() <= 1.0


def test_null_cond_matches_full_dropout_embedding():
    cfg = ModelConfig()
    params = model.init_params(cfg, dtype=np.float64)
    null = CondArrays.null(2, 10)
    summary, chan, _ = model.embed_conditions(params, null)
    expected = params["emb.stem"][-1] + params["emb.style"][-1] + params["emb.tempo"][-1] + params["emb.ctx_null"]
    np.testing.assert_allclose(summary, np.tile(expected, (2, 1)), atol=1e-12)
    np.testing.assert_array_equal(chan, np.zeros_like(chan))


def test_tempo_bucket_nearest():
    assert model.tempo_bucket(60) == 0
    assert model.tempo_bucket(150) == 6
    assert model.tempo_bucket(100) == model.tempo_bucket(105)

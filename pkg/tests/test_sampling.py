import numpy as np
import pytest

from stemflow import sampling
from stemflow.model import ModelConfig
from stemflow.sampling import (
    SampleConfig,
    StemRequest,
    cfg_velocity,
    default_window,
    euler_sample,
    generate_conditional,
    generate_from_scratch,
    integrate,
    run_workflow,
)
from stemflow.training import TrainConfig, init_state


@pytest.fixture(scope="module")
def untrained():
    state = init_state(TrainConfig(steps=1, seed=0))
    return state.params, state.model_config


def test_default_window_scaling():
    assert default_window(32) == (3, 28)
    assert default_window(16) == (2, 14)
    assert default_window(64) == (6, 56)
    lo, hi = default_window(1)
    assert lo == 1 and hi == 1


def test_sample_config_validation():
    with pytest.raises(ValueError):
        SampleConfig(num_steps=0)
    with pytest.raises(ValueError):
        SampleConfig(num_steps=8, cfg_window=(0, 8))
    with pytest.raises(ValueError):
        SampleConfig(num_steps=8, cfg_window=(1, 9))


def test_cfg_velocity_window_behavior():
    v_c = np.ones(4)
    v_u = np.zeros(4)
    inside = cfg_velocity(v_c, v_u, 3.0, step_index=5, window=(3, 28))
    np.testing.assert_allclose(inside, 3.0 * np.ones(4))
    outside = cfg_velocity(v_c, v_u, 3.0, step_index=30, window=(3, 28))
    np.testing.assert_array_equal(outside, v_c)
    unit = cfg_velocity(v_c, v_u, 1.0, step_index=5, window=(3, 28))
    np.testing.assert_allclose(unit, v_c)
    with pytest.raises(ValueError):
        cfg_velocity(np.ones(3), np.zeros(4), 3.0, 5, (3, 28))


@pytest.mark.parametrize("steps", [1, 4, 32])
def test_single_point_field_integrates_exactly(steps):
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal((6, 8))
    eps = rng.standard_normal((6, 8))
    out = integrate(lambda x, t, n: x0 - eps, eps, steps)
    assert np.abs(out - x0).max() <= 1e-9


def test_integrate_linear_field_matches_recurrence():
    # v(x) = -x: Euler gives x * (1 - dt)^N exactly
    x_init = np.array([2.0, -3.0])
    for steps in (1, 5, 40):
        out = integrate(lambda x, t, n: -x, x_init, steps)
        expected = x_init * (1.0 - 1.0 / steps) ** steps
        np.testing.assert_allclose(out, expected, atol=1e-12)


def test_integrate_rejects_nonfinite_velocity():
    with pytest.raises(FloatingPointError):
        integrate(lambda x, t, n: np.full_like(x, np.nan), np.zeros(3), 4)


def test_shared_noise_at_inference(untrained):
    params, cfg_m = untrained
    reqs = [StemRequest(t, 2, 120) for t in ("drums", "bass", "keys")]
    captured = {}

    def hook(eps):
        captured["eps"] = eps.copy()

    config = SampleConfig(num_steps=2, seed=1, share_noise_at_inference=True)
    euler_sample(params, cfg_m, reqs, config, np.random.default_rng(1), frames=24, noise_hook=hook)
    eps = captured["eps"]
    assert np.array_equal(eps[0], eps[1]) and np.array_equal(eps[0], eps[2])

    config = SampleConfig(num_steps=2, seed=1, share_noise_at_inference=False)
    euler_sample(params, cfg_m, reqs, config, np.random.default_rng(1), frames=24, noise_hook=hook)
    eps = captured["eps"]
    assert not np.array_equal(eps[0], eps[1])


def test_sampling_deterministic(untrained):
    params, cfg_m = untrained
    reqs = [StemRequest("drums", 0, 90)]
    config = SampleConfig(num_steps=4, seed=7)
    a = euler_sample(params, cfg_m, reqs, config, np.random.default_rng(7), frames=24)
    b = euler_sample(params, cfg_m, reqs, config, np.random.default_rng(7), frames=24)
    np.testing.assert_array_equal(a, b)


def test_mixed_style_or_tempo_rejected(untrained):
    params, cfg_m = untrained
    config = SampleConfig(num_steps=1)
    bad = [StemRequest("drums", 0, 90), StemRequest("bass", 1, 90)]
    with pytest.raises(ValueError):
        euler_sample(params, cfg_m, bad, config, np.random.default_rng(0), frames=24)


def test_from_scratch_rejects_context(untrained):
    params, cfg_m = untrained
    req = StemRequest("drums", 0, 90, context_types=["bass"])
    with pytest.raises(ValueError):
        generate_from_scratch(params, cfg_m, [req], SampleConfig(num_steps=1), np.random.default_rng(0), frames=24)


def test_conditional_requires_context(untrained):
    params, cfg_m = untrained
    req = StemRequest("drums", 0, 90)
    with pytest.raises(ValueError):
        generate_conditional(params, cfg_m, [], [req], SampleConfig(num_steps=1), np.random.default_rng(0), frames=24)
    assert generate_conditional(params, cfg_m, [np.zeros((24, 8))], [], SampleConfig(num_steps=1), np.random.default_rng(0), frames=24) == []


@pytest.mark.parametrize("mode,expected_passes", [("one_pass", 1), ("two_pass", 2), ("k_pass", 4)])
def test_workflow_modes(untrained, mode, expected_passes):
    params, cfg_m = untrained
    reqs = [StemRequest(t, 1, 120) for t in ("drums", "bass", "keys", "pad")]
    config = SampleConfig(num_steps=2, seed=3)
    latents, report = run_workflow(params, cfg_m, reqs, mode, config, np.random.default_rng(3), frames=24)
    assert len(latents) == 4
    assert report.mode == mode
    assert len(report.per_pass_ms) == expected_passes
    assert report.wall_time_ms >= sum(report.per_pass_ms) * 0.5


def test_workflow_report_serializes(tmp_path, untrained):
    params, cfg_m = untrained
    reqs = [StemRequest("drums", 1, 120)]
    _, report = run_workflow(params, cfg_m, reqs, "one_pass", SampleConfig(num_steps=1), np.random.default_rng(0), frames=24)
    path = tmp_path / "report.json"
    report.write(path)
    import json

    data = json.loads(path.read_text())
    assert data["mode"] == "one_pass" and data["num_stems"] == 1

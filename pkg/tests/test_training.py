import numpy as np

from stemflow.training import (
    TrainConfig,
    _prepare,
    init_state,
    load_checkpoint,
    load_train_state,
    save_checkpoint,
    save_train_state,
    train,
    train_step,
)


def run_steps(state, dataset, n):
    losses = []
    for _ in range(n):
        arrays = _prepare(state, dataset)
        losses.append(train_step(state, arrays))
    return losses


def test_setting_flags():
    assert TrainConfig.from_setting("A").setting == "A"
    assert TrainConfig.from_setting("B").setting == "B"
    assert TrainConfig.from_setting("C").setting == "C"
    a = TrainConfig.from_setting("A")
    assert not a.grouping and not a.noise_sharing
    b = TrainConfig.from_setting("B")
    assert b.grouping and not b.noise_sharing
    c = TrainConfig.from_setting("C")
    assert c.grouping and c.noise_sharing


def test_loss_decreases(dataset):
    # explicit rate: the smoke test checks that optimization makes progress,
    # independent of the (deliberately conservative) production default
    state = init_state(TrainConfig.from_setting("C", steps=200, seed=1, learning_rate=1e-3))
    losses = run_steps(state, dataset, 200)
    early = float(np.mean(losses[:20]))
    late = float(np.mean(losses[-20:]))
    assert late < 0.7 * early, (early, late)


def test_zero_lr_keeps_params(dataset):
    state = init_state(TrainConfig.from_setting("C", steps=10, seed=2, learning_rate=0.0, weight_decay=0.0))
    before = {k: v.copy() for k, v in state.params.items()}
    run_steps(state, dataset, 5)
    for k in before:
        np.testing.assert_array_equal(state.params[k], before[k])


def test_checkpoint_round_trip(tmp_path, dataset):
    state = init_state(TrainConfig.from_setting("C", steps=5, seed=3))
    run_steps(state, dataset, 5)
    path = tmp_path / "ck.sfck"
    save_checkpoint(path, state)
    params, model_config, meta = load_checkpoint(path)
    assert model_config.to_dict() == state.model_config.to_dict()
    # deliverable checkpoints carry the EMA weights, not the raw optimizer iterate
    for k in state.ema:
        np.testing.assert_array_equal(params[k], state.ema[k])
    assert meta["setting"] == "C"


def test_resume_is_bit_identical(tmp_path, dataset):
    cfg = TrainConfig.from_setting("C", steps=60, seed=4)

    straight = init_state(cfg)
    run_steps(straight, dataset, 60)

    split = init_state(cfg)
    run_steps(split, dataset, 30)
    path = tmp_path / "state.sfck"
    save_train_state(path, split)
    resumed = load_train_state(path)
    run_steps(resumed, dataset, 30)

    for k in straight.params:
        np.testing.assert_array_equal(resumed.params[k], straight.params[k])
    np.testing.assert_array_equal(resumed.m["lift.w"], straight.m["lift.w"])
    assert resumed.loss_history == straight.loss_history


def test_train_entrypoint_writes_artifacts(tmp_path, dataset):
    cfg = TrainConfig.from_setting("B", steps=8, seed=5, checkpoint_every=4)
    final = train(cfg, dataset, tmp_path)
    assert final.exists()
    assert (tmp_path / "train_log.txt").exists()
    assert (tmp_path / "train_summary.json").exists()
    log = (tmp_path / "train_log.txt").read_text().splitlines()
    assert log[0] == "step\tloss\twall_ms\tsetting"
    params, _, meta = load_checkpoint(final)
    assert meta["setting"] == "B"

import numpy as np
import pytest

from covalign.neural import (
    ConvClassifier,
    ModelConfig,
    TrainConfig,
    TrainingDivergedError,
    adamw_step,
    backward,
    fine_tune_config,
    forward,
    init_adamw_state,
    linear_probe,
    load_checkpoint,
    nll_loss,
    save_checkpoint,
    train,
)
from covalign.trialdata import Trial

SMALL = ModelConfig(
    channels=3,
    samples=40,
    temporal_filters=2,
    kernel_len=7,
    spatial_filters=2,
    pool_len=8,
    pool_stride=4,
)


def reference_forward(model, x):
    """Straight-line scalar re-implementation of the forward pass."""
    cfg = model.config
    p = model.params
    out = np.zeros((len(x), cfg.n_classes))
    for i in range(len(x)):
        conv = np.zeros((cfg.temporal_filters, cfg.channels, cfg.conv_len))
        for f in range(cfg.temporal_filters):
            for c in range(cfg.channels):
                for t in range(cfg.conv_len):
                    acc = 0.0
                    for k in range(cfg.kernel_len):
                        acc += x[i, c, t + k] * p["w_temp"][f, k]
                    conv[f, c, t] = acc + p["b_temp"][f]
        spat = np.zeros((cfg.spatial_filters, cfg.conv_len))
        for g in range(cfg.spatial_filters):
            for t in range(cfg.conv_len):
                acc = 0.0
                for f in range(cfg.temporal_filters):
                    for c in range(cfg.channels):
                        acc += conv[f, c, t] * p["w_spat"][g, f, c]
                spat[g, t] = acc + p["b_spat"][g]
        feats = []
        for g in range(cfg.spatial_filters):
            for j in range(cfg.n_pools):
                s = 0.0
                for t in range(j * cfg.pool_stride, j * cfg.pool_stride + cfg.pool_len):
                    s += spat[g, t] ** 2
                feats.append(np.log(s / cfg.pool_len + 1e-12))
        logits = p["w_head"] @ np.array(feats) + p["b_head"]
        shift = logits - logits.max()
        out[i] = shift - np.log(np.exp(shift).sum())
    return out


def make_trials(rng, n, cfg, scale_by_label=False):
    trials = []
    for i in range(n):
        label = i % 2
        data = rng.standard_normal((cfg.channels, cfg.samples))
        if scale_by_label:
            # class 1 has three times the power on channel 0: a pure
            # variance cue, exactly what the square+log features detect
            data[0] *= 1.0 + 2.0 * label
        trials.append(Trial(data=data, label=label))
    return trials


def test_config_derived_shapes():
    assert SMALL.conv_len == 34
    assert SMALL.n_pools == 7
    assert SMALL.feature_dim == 14


def test_config_rejects_bad_dims():
    with pytest.raises(ValueError):
        ModelConfig(channels=2, samples=10, kernel_len=25)
    with pytest.raises(ValueError):
        ModelConfig(channels=2, samples=40, kernel_len=9, pool_len=64)
    with pytest.raises(ValueError):
        ModelConfig(channels=0, samples=40)


def test_forward_matches_scalar_reference():
    rng = np.random.default_rng(7)
    model = ConvClassifier.init(SMALL, rng_seed=3)
    x = rng.standard_normal((4, SMALL.channels, SMALL.samples))
    got = forward(model, x)
    want = reference_forward(model, x)
    assert np.max(np.abs(got - want)) <= 1e-10


def test_forward_log_probs_normalised():
    rng = np.random.default_rng(0)
    model = ConvClassifier.init(SMALL, rng_seed=1)
    x = rng.standard_normal((6, SMALL.channels, SMALL.samples))
    lp = forward(model, x)
    assert np.allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)
    assert np.all(lp <= 0.0)


def test_forward_rejects_wrong_shape():
    model = ConvClassifier.init(SMALL)
    with pytest.raises(ValueError):
        forward(model, np.zeros((2, SMALL.channels + 1, SMALL.samples)))


def test_init_is_deterministic_and_bounded():
    a = ConvClassifier.init(SMALL, rng_seed=5)
    b = ConvClassifier.init(SMALL, rng_seed=5)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    limit = np.sqrt(6.0 / (SMALL.kernel_len + SMALL.temporal_filters))
    assert np.max(np.abs(a.params["w_temp"])) <= limit
    assert np.all(a.params["b_temp"] == 0.0)


def test_gradients_match_central_differences():
    rng = np.random.default_rng(11)
    model = ConvClassifier.init(SMALL, rng_seed=9)
    x = rng.standard_normal((5, SMALL.channels, SMALL.samples))
    y = rng.integers(0, 2, size=5)
    grads = backward(model, x, y)

    def loss_at():
        return nll_loss(forward(model, x), y)

    checked = 0
    for name, g in grads.items():
        flat_p = model.params[name].reshape(-1)
        flat_g = g.reshape(-1)
        for idx in range(len(flat_p)):
            h = 1e-6 * max(1.0, abs(flat_p[idx]))
            orig = flat_p[idx]
            flat_p[idx] = orig + h
            hi = loss_at()
            flat_p[idx] = orig - h
            lo = loss_at()
            flat_p[idx] = orig
            fd = (hi - lo) / (2 * h)
            denom = max(abs(fd), abs(flat_g[idx]), 1e-8)
            assert abs(fd - flat_g[idx]) / denom <= 1e-4, (name, idx, fd, flat_g[idx])
            checked += 1
    assert checked >= 50


def test_adamw_first_step_hand_value():
    params = {"w": np.array([2.0])}
    state = init_adamw_state(params)
    adamw_step(params, {"w": np.array([1.0])}, state, learning_rate=0.1)
    # m_hat = v_hat = 1 exactly on the first step
    assert abs(params["w"][0] - (2.0 - 0.1 / (1.0 + 1e-8))) <= 1e-15


def test_adamw_constant_gradient_gives_constant_steps():
    params = {"w": np.array([0.0])}
    state = init_adamw_state(params)
    for _ in range(5):
        adamw_step(params, {"w": np.array([1.0])}, state, learning_rate=0.01)
    assert abs(params["w"][0] + 5 * 0.01 / (1.0 + 1e-8)) <= 1e-12


def test_adamw_zero_gradient_is_pure_decay():
    params = {"w": np.array([4.0, -2.0])}
    state = init_adamw_state(params)
    adamw_step(
        params, {"w": np.zeros(2)}, state, learning_rate=0.1, weight_decay=0.01
    )
    assert np.allclose(params["w"], np.array([4.0, -2.0]) * (1.0 - 0.1 * 0.01), atol=1e-15)


def test_adamw_decay_decoupled_from_moments():
    # with weight decay on, the moment estimates must match the no-decay run
    params_a = {"w": np.array([3.0])}
    params_b = {"w": np.array([3.0])}
    state_a = init_adamw_state(params_a)
    state_b = init_adamw_state(params_b)
    g = {"w": np.array([0.5])}
    adamw_step(params_a, g, state_a, learning_rate=0.1, weight_decay=0.0)
    adamw_step(params_b, g, state_b, learning_rate=0.1, weight_decay=0.05)
    assert np.array_equal(state_a["m"]["w"], state_b["m"]["w"])
    assert np.array_equal(state_a["v"]["w"], state_b["v"]["w"])
    assert abs((params_a["w"][0] - params_b["w"][0]) - 0.1 * 0.05 * 3.0) <= 1e-15


def test_training_learns_variance_cue():
    rng = np.random.default_rng(21)
    tr = make_trials(rng, 40, SMALL, scale_by_label=True)
    va = make_trials(rng, 16, SMALL, scale_by_label=True)
    model = ConvClassifier.init(SMALL, rng_seed=2)
    cfg = TrainConfig(learning_rate=5e-3, batch_size=16, max_epochs=80, patience=20, rng_seed=4)
    model, history = train(model, tr, va, cfg)
    assert max(history.val_acc) >= 0.9
    assert history.best_epoch == int(np.argmin(history.val_loss))


def test_training_is_deterministic():
    rng = np.random.default_rng(33)
    tr = make_trials(rng, 24, SMALL, scale_by_label=True)
    va = make_trials(rng, 8, SMALL, scale_by_label=True)
    cfg = TrainConfig(learning_rate=2e-3, batch_size=8, max_epochs=12, patience=12, rng_seed=77)
    m1, h1 = train(ConvClassifier.init(SMALL, rng_seed=5), tr, va, cfg)
    m2, h2 = train(ConvClassifier.init(SMALL, rng_seed=5), tr, va, cfg)
    assert h1 == h2
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_early_stop_counts_epochs_since_best():
    rng = np.random.default_rng(8)
    tr = make_trials(rng, 24, SMALL)
    va = make_trials(rng, 8, SMALL)
    for patience in (0, 3):
        cfg = TrainConfig(
            learning_rate=2e-3, batch_size=8, max_epochs=200, patience=patience, rng_seed=1
        )
        _, history = train(ConvClassifier.init(SMALL, rng_seed=6), tr, va, cfg)
        if history.n_epochs < cfg.max_epochs:
            assert history.n_epochs - 1 - history.best_epoch == max(patience, 1)


def test_returned_model_is_best_epoch_snapshot():
    rng = np.random.default_rng(14)
    tr = make_trials(rng, 24, SMALL, scale_by_label=True)
    va_trials = make_trials(rng, 8, SMALL, scale_by_label=True)
    cfg = TrainConfig(learning_rate=2e-3, batch_size=8, max_epochs=30, patience=30, rng_seed=3)
    model, history = train(ConvClassifier.init(SMALL, rng_seed=0), tr, va_trials, cfg)
    x = np.stack([t.data for t in va_trials])
    y = np.array([t.label for t in va_trials])
    assert abs(nll_loss(forward(model, x), y) - min(history.val_loss)) <= 1e-12


def test_diverged_training_raises():
    rng = np.random.default_rng(2)
    tr = make_trials(rng, 16, SMALL)
    va = make_trials(rng, 8, SMALL)
    # the log features compress magnitudes, so only an overflow-scale step
    # reliably produces a non-finite loss
    cfg = TrainConfig(learning_rate=1e150, batch_size=8, max_epochs=50, patience=50, rng_seed=0)
    with pytest.raises(TrainingDivergedError):
        train(ConvClassifier.init(SMALL, rng_seed=1), tr, va, cfg)


def test_linear_probe_freezes_everything_but_head():
    rng = np.random.default_rng(40)
    base = ConvClassifier.init(SMALL, rng_seed=8)
    before = {k: v.copy() for k, v in base.params.items()}
    calib = make_trials(rng, 24, SMALL, scale_by_label=True)
    cfg = TrainConfig(learning_rate=2e-3, batch_size=8, max_epochs=10, patience=10, rng_seed=9)
    probed, history = linear_probe(base, calib, cfg)
    assert history.n_epochs >= 1
    # original untouched
    for k in before:
        assert np.array_equal(base.params[k], before[k])
    # probe shares body bit-for-bit, head moved
    for k in ("w_temp", "b_temp", "w_spat", "b_spat"):
        assert np.array_equal(probed.params[k], base.params[k])
    assert not np.array_equal(probed.params["w_head"], base.params["w_head"])


def test_fine_tune_config_shortens_schedule():
    cfg = TrainConfig()
    ft = fine_tune_config(cfg)
    assert ft.max_epochs == 600 and ft.patience == 150
    assert ft.learning_rate == cfg.learning_rate


def test_checkpoint_round_trip(tmp_path):
    model = ConvClassifier.init(SMALL, rng_seed=12)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, extra={"subject": 3})
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, SMALL.channels, SMALL.samples))
    assert np.array_equal(forward(model, x), forward(loaded, x))


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(ConvClassifier.init(SMALL), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:3])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_reinit_head_only_touches_head():
    model = ConvClassifier.init(SMALL, rng_seed=4)
    before = {k: v.copy() for k, v in model.params.items()}
    model.reinit_head(rng_seed=99)
    for k in ("w_temp", "b_temp", "w_spat", "b_spat"):
        assert np.array_equal(model.params[k], before[k])
    assert not np.array_equal(model.params["w_head"], before["w_head"])
    assert np.all(model.params["b_head"] == 0.0)

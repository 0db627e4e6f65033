import numpy as np
import pytest

from avfce.channels import make_dataset
from avfce.flow import FlowConfig, TrainConfig, train
from avfce.network import (
    AdamState,
    BackboneConfig,
    EmaState,
    VelocityNet,
    adam_step,
    ema_update,
    param_names,
)

# theta after k Adam steps on (theta - 5)^2 from 0 with lr 0.1, worked out with scalar arithmetic
ADAM_TABLE = [
    0.0999999999,
    0.19994224313114334,
    0.2997867086666086,
    0.3994923260369382,
    0.49901705218129155,
    0.5983179531843043,
    0.6973512904375996,
    0.7960726107412293,
    0.8944368398443359,
    0.992398378916068,
]


def test_default_param_count_in_budget():
    cfg = BackboneConfig()
    assert 45_000 <= cfg.n_params <= 65_000
    net = VelocityNet(cfg)
    assert sum(p.size for p in net.arrays()) == cfg.n_params


@pytest.mark.parametrize("kwargs", [{"kernel": 4}, {"depth": 1}, {"in_planes": 3}, {"hidden_planes": 0}])
def test_backbone_config_rejects(kwargs):
    with pytest.raises(ValueError):
        BackboneConfig(**kwargs)


def test_param_names_follow_layers():
    assert param_names(BackboneConfig(depth=2))[:2] == ["conv0.weight", "conv0.bias"]


def test_zero_init_output(rng):
    net = VelocityNet(BackboneConfig(hidden_planes=8), seed=3)
    out = net.forward(rng.standard_normal((2, 6, 5)), 0.2, 0.9)
    assert out.shape == (2, 6, 5)
    assert not out.any()


def test_forward_is_deterministic(rng):
    net = VelocityNet(BackboneConfig(hidden_planes=8), seed=1)
    params = [p + rng.standard_normal(p.shape) * 0.1 for p in net.arrays()]
    net = net.with_params(params)
    h = rng.standard_normal((3, 2, 4, 4))
    a = net.forward(h, [0.0, 0.1, 0.2], [0.5, 0.6, 1.0])
    b = net.forward(h, [0.0, 0.1, 0.2], [0.5, 0.6, 1.0])
    assert a.tobytes() == b.tobytes()


def test_forward_rejects_reversed_times():
    net = VelocityNet(BackboneConfig(hidden_planes=4))
    with pytest.raises(ValueError, match="s <= t"):
        net.forward(np.zeros((2, 4, 4)), 0.6, 0.5)


def test_forward_rejects_bad_planes():
    net = VelocityNet(BackboneConfig(hidden_planes=4))
    with pytest.raises(ValueError, match="packed"):
        net.forward(np.zeros((3, 4, 4)), 0.0, 1.0)


def test_wrong_param_shapes_rejected():
    cfg = BackboneConfig(hidden_planes=4)
    params = VelocityNet(cfg).arrays()
    params[0] = np.zeros((1, 1, 3, 3))
    with pytest.raises(ValueError, match="conv0.weight"):
        VelocityNet(cfg, params=params)


def test_conditioning_sensitivity_after_one_step(rng):
    cfg = BackboneConfig(hidden_planes=8)
    data = make_dataset("gaussian", 16, 0, 4, 4).samples
    state = train(data, cfg, FlowConfig(), TrainConfig(iterations=1, batch_size=8, lr=1e-2, warmup_steps=0))
    h = rng.standard_normal((2, 4, 4))
    diff = state.net.forward(h, 0.0, 1.0) - state.net.forward(h, 0.5, 1.0)
    assert np.linalg.norm(diff) > 0


# ---------------------------------------------------------------- Adam

def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    state = AdamState.for_params(p, lr=0.1, warmup_steps=0)
    state.m[0][:] = 0.5
    state.v[0][:] = 0.25
    new, state = adam_step(p, [np.zeros(2)], state)
    assert state.m[0][0] == pytest.approx(0.45)
    assert state.v[0][0] == pytest.approx(0.25 * 0.999)
    # first moment is non-zero so params still move; with fresh moments they must not
    fresh = AdamState.for_params(p, lr=0.1, warmup_steps=0)
    same, fresh = adam_step(p, [np.zeros(2)], fresh)
    np.testing.assert_array_equal(same[0], p[0])


@pytest.mark.parametrize("g", [3.0, -0.01, 1e4])
def test_adam_first_step_magnitude_is_lr(g):
    state = AdamState.for_params([np.zeros(1)], lr=0.01, warmup_steps=0)
    new, _ = adam_step([np.zeros(1)], [np.array([g])], state)
    assert new[0][0] == pytest.approx(-0.01 * g / (abs(g) + 1e-8), rel=1e-12)


def test_adam_quadratic_matches_table():
    theta = np.zeros(1)
    state = AdamState.for_params([theta], lr=0.1, warmup_steps=0)
    for expected in ADAM_TABLE:
        (theta,), state = adam_step([theta], [2.0 * (theta - 5.0)], state)
        assert abs(theta[0] - expected) < 1e-10
    assert state.step == 10


def test_adam_linear_warmup():
    state = AdamState(lr=1.0, warmup_steps=4)
    lrs = []
    for _ in range(6):
        state.step += 1
        lrs.append(state.current_lr())
    assert lrs == [0.25, 0.5, 0.75, 1.0, 1.0, 1.0]


def test_adam_non_finite_gradient_named():
    state = AdamState.for_params([np.zeros(2)])
    with pytest.raises(FloatingPointError, match="conv3.bias"):
        adam_step([np.zeros(2)], [np.array([0.0, np.inf])], state, names=["conv3.bias"])


def test_adam_gradient_shape_mismatch():
    state = AdamState.for_params([np.zeros(2)])
    with pytest.raises(ValueError, match="shape"):
        adam_step([np.zeros(2)], [np.zeros(3)], state)


# ---------------------------------------------------------------- EMA

def test_ema_decay_zero_copies(rng):
    p = [rng.standard_normal((2, 3))]
    out = ema_update(EmaState([np.zeros((2, 3))], decay=0.0), p)
    np.testing.assert_array_equal(out.shadow[0], p[0])


def test_ema_decay_one_freezes(rng):
    s0 = rng.standard_normal(4)
    out = ema_update(EmaState([s0], decay=1.0), [rng.standard_normal(4)])
    np.testing.assert_array_equal(out.shadow[0], s0)


def test_ema_closed_form(rng):
    s0, p = rng.standard_normal(5), rng.standard_normal(5)
    decay, n = 0.9, 37
    ema = EmaState([s0], decay=decay)
    for _ in range(n):
        ema = ema_update(ema, [p])
    np.testing.assert_allclose(ema.shadow[0], p + decay**n * (s0 - p), rtol=0, atol=1e-12)


@pytest.mark.parametrize("decay", [-0.1, 1.5])
def test_ema_rejects_bad_decay(decay):
    with pytest.raises(ValueError, match="decay"):
        EmaState([np.zeros(1)], decay=decay)
    with pytest.raises(ValueError, match="decay"):
        ema_update(EmaState([np.zeros(1)]), [np.zeros(1)], decay=decay)


def test_cosine_decay_after_warmup():
    state = AdamState(lr=1.0, warmup_steps=2, decay_steps=6)
    lrs = []
    for _ in range(8):
        state.step += 1
        lrs.append(state.current_lr())
    assert lrs[:2] == [0.5, 1.0]
    assert lrs[3] == pytest.approx(0.5)  # halfway through the cosine
    assert lrs[5:] == [0.0, 0.0, 0.0]
    assert all(a >= b for a, b in zip(lrs[1:], lrs[2:]))

import numpy as np
import pytest

from freqest.nets import (
    CounterConfig,
    FRNetConfig,
    FrequencyCounterNet,
    FrequencyRepresentationNet,
    build_model,
    config_from_dict,
    count_components,
    counter_forward,
    diagonal_ordering_score,
    expected_parameter_count,
    fr_forward,
    inspect_encoder,
    prepare_input,
    round_count,
)
from freqest.nn import Tensor


@pytest.fixture(scope="module")
def fr_net():
    return FrequencyRepresentationNet(FRNetConfig(), seed=0)


@pytest.fixture(scope="module")
def counter_net():
    return FrequencyCounterNet(CounterConfig(), seed=0)


def test_fr_shapes_and_count(fr_net):
    cfg = fr_net.cfg
    assert cfg.encoder_out * cfg.decoder_stride == cfg.grid == 1000
    out = fr_net(Tensor(np.zeros((3, 100), np.float32)))
    assert out.shape == (3, 1000)
    assert fr_net.n_parameters() == expected_parameter_count(cfg) == 1_059_201


def test_counter_shapes_and_count(counter_net):
    assert counter_net.cfg.feature_length == 200
    feats = counter_net.features(Tensor(np.zeros((2, 1000), np.float32)))
    assert feats.shape == (2, 16, 200)
    assert counter_net(Tensor(np.zeros((2, 1000), np.float32))).shape == (2,)
    assert counter_net.n_parameters() == expected_parameter_count(counter_net.cfg)


def test_psnet_variant():
    cfg = FRNetConfig(variant="psnet", conv_layers=2)
    assert cfg.channels == 1
    net = FrequencyRepresentationNet(cfg)
    assert net.n_parameters() == expected_parameter_count(cfg)
    assert net(Tensor(np.zeros((2, 100), np.float32))).shape == (2, 1000)
    assert inspect_encoder(net).shape == (1, 125, 1000)


@pytest.mark.parametrize("layers,channels", [(0, 4), (3, 8), (5, 2)])
def test_parameter_count_formula(layers, channels):
    cfg = FRNetConfig(conv_layers=layers, channels=channels, conv_channels=channels)
    assert build_model(cfg).n_parameters() == expected_parameter_count(cfg)
    ccfg = CounterConfig(conv_layers=layers, conv_filters=channels)
    assert build_model(ccfg).n_parameters() == expected_parameter_count(ccfg)


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        FRNetConfig(encoder_out=100)
    with pytest.raises(ValueError):
        FRNetConfig(conv_filter=4)
    with pytest.raises(ValueError):
        FRNetConfig(variant="other")
    with pytest.raises(ValueError):
        CounterConfig(stem_stride=3)
    for cfg in (FRNetConfig(variant="psnet"), CounterConfig(m_max=3)):
        assert config_from_dict(cfg.to_dict()) == cfg
    assert FRNetConfig().kernel_std == pytest.approx(0.3 / 50)


def test_wrong_input_lengths(fr_net, counter_net):
    with pytest.raises(ValueError):
        fr_forward(fr_net, np.ones(49, complex))
    with pytest.raises(ValueError):
        fr_net(Tensor(np.zeros((1, 99), np.float32)))
    with pytest.raises(ValueError):
        counter_forward(counter_net, np.ones(999))


def test_zero_input_gives_constant_like_output(fr_net):
    a = fr_forward(fr_net, np.zeros((1, 50), complex))
    b = fr_forward(fr_net, np.zeros((1, 50), complex))
    assert a.shape == (1, 1000) and np.array_equal(a, b)


def test_eval_forward_deterministic_and_bounded(fr_net):
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(10_000, 50)) + 1j * rng.normal(size=(10_000, 50))
    a = fr_forward(fr_net, Y[:64])
    assert np.array_equal(a, fr_forward(fr_net, Y[:64]))
    # single-sample and batched evaluation agree exactly in eval mode is not
    # guaranteed by BLAS, but must agree to float32 precision
    np.testing.assert_allclose(fr_forward(fr_net, Y[0]), a[0], rtol=1e-4, atol=1e-5)
    out = fr_forward(fr_net, Y, batch=1000)
    assert np.all(np.isfinite(out))


def test_prepare_input_scaling_and_interleave():
    y = np.array([[2 + 0j, 0 + 4j, -1 - 1j]])
    x = prepare_input(y, np.float64)
    np.testing.assert_allclose(x, [[0.5, 0, 0, 1, -0.25, -0.25]])
    # scale invariance
    np.testing.assert_array_equal(prepare_input(3 * y), prepare_input(y))
    assert np.all(prepare_input(np.zeros((1, 3))) == 0)


@pytest.mark.parametrize("raw,expected", [(2.4, 2), (0.2, 1), (12.7, 10), (-3, 1), (2.6, 3)])
def test_round_count(raw, expected):
    assert round_count(raw, 10) == expected


def test_count_components_range(counter_net):
    rng = np.random.default_rng(1)
    counts = count_components(counter_net, rng.normal(size=(5, 1000)))
    assert counts.shape == (5,) and np.all((counts >= 1) & (counts <= 10))
    assert isinstance(count_components(counter_net, rng.normal(size=1000)), int)


def test_inspect_encoder_dimensions(fr_net):
    heat = inspect_encoder(fr_net)
    assert heat.shape == (64, 125, 1000)
    # an untrained encoder has no diagonal structure
    assert diagonal_ordering_score(heat) < 0.7


def test_inspect_encoder_recovers_planted_diagonal():
    cfg = FRNetConfig(channels=2, conv_channels=2, conv_layers=0)
    net = FrequencyRepresentationNet(cfg)
    t = np.arange(1, 51)
    w = np.zeros((2, 125, 50, 2))
    for r in range(125):
        h = np.exp(2j * np.pi * (r / 125) * t)
        w[:, r, :, 0], w[:, r, :, 1] = h.real, h.imag
    net.encoder.weight.data = w.reshape(250, 100).astype(np.float32)
    heat = inspect_encoder(net)
    assert np.all(np.abs(heat[0].argmax(axis=1) - 8 * np.arange(125)) <= 1)
    assert diagonal_ordering_score(heat) == 1.0

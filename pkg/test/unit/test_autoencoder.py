from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from slip_perception.errors import ShapeMismatchError, TrainingFailureError
from slip_perception.pipeline.autoencoder import (
    AeArchitecture, AeModel, BatchNorm, Dense, LeakyReLU, TrainConfig, forward, init_model, pathway,
    reconstruction_error, train,
)


def numerical_gradient(f, array, h=1e-5):
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        original = array[idx]
        array[idx] = original + h
        plus = f()
        array[idx] = original - h
        minus = f()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def assert_gradient_close(analytic, numeric, tol=1e-4):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    assert np.max(np.abs(analytic - numeric) / scale) < tol


def naive_forward(x, model: AeModel):
    """Eval-mode forward pass recomputed from the state dict."""
    state = model.state_dict()
    arch = model.arch
    hidden = []
    n_layers = 2 * arch.depth
    for i in range(n_layers):
        x = x @ state[f'{i:02d}/dense/weight'] + state[f'{i:02d}/dense/bias']
        if i < n_layers - 1:
            x = (x - state[f'{i:02d}/bn/running_mean']) / np.sqrt(state[f'{i:02d}/bn/running_var'] + arch.bn_eps)
            x = x * state[f'{i:02d}/bn/gamma'] + state[f'{i:02d}/bn/beta']
            x = np.where(x > 0, x, arch.negative_slope * x)
        if i < arch.depth:
            hidden.append(x)
    return x, hidden


def identity_model(width=8, depth=5) -> AeModel:
    arch = AeArchitecture(input_dim=width, depth=depth, encoder_widths=[width] * depth, negative_slope=1.0, bn_eps=0.0)
    state = {}
    for i in range(2 * depth):
        state[f'{i:02d}/dense/weight'] = np.eye(width)
        state[f'{i:02d}/dense/bias'] = np.zeros(width)
        if i < 2 * depth - 1:
            state[f'{i:02d}/bn/gamma'] = np.ones(width)
            state[f'{i:02d}/bn/beta'] = np.zeros(width)
            state[f'{i:02d}/bn/running_mean'] = np.zeros(width)
            state[f'{i:02d}/bn/running_var'] = np.ones(width)
    return AeModel.from_state_dict(arch, state)


def subspace_data(n, dim, rank, seed):
    rng = np.random.default_rng(seed)
    basis = rng.normal(size=(rank, dim)) / np.sqrt(rank)
    return rng.normal(size=(n, rank)) @ basis


def test_default_architecture():
    arch = AeArchitecture()
    assert len(arch.encoder_widths) == 5
    assert arch.encoder_widths[-1] == 100
    assert all(a > b for a, b in zip([512] + arch.encoder_widths, arch.encoder_widths))
    assert arch.decoder_widths[-1] == 512
    assert arch.decoder_widths[:-1] == list(reversed(arch.encoder_widths[:-1]))


def test_invalid_widths():
    with pytest.raises(ValueError):
        AeArchitecture(encoder_widths=[256, 128])


def test_leaky_relu():
    act = LeakyReLU(0.01)
    np.testing.assert_allclose(act.forward(np.array([-1.0, 0.0, 2.0])), [-0.01, 0.0, 2.0])


@pytest.mark.parametrize('instance', range(100))
def test_dense_gradients(instance):
    rng = np.random.default_rng(instance)
    x = rng.normal(size=(4, 3))
    r = rng.normal(size=(4, 2))
    layer = Dense(rng.normal(size=(3, 2)), rng.normal(size=2))

    def loss():
        return float(np.sum(r * layer.forward(x)))

    layer.forward(x, train=True)
    dx = layer.backward(r)
    assert_gradient_close(dx, numerical_gradient(loss, x))
    assert_gradient_close(layer.grads['weight'], numerical_gradient(loss, layer.params['weight']))
    assert_gradient_close(layer.grads['bias'], numerical_gradient(loss, layer.params['bias']))


@pytest.mark.parametrize('instance', range(100))
def test_leaky_relu_gradients(instance):
    rng = np.random.default_rng(instance)
    x = rng.uniform(0.1, 2.0, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3))
    r = rng.normal(size=(4, 3))
    layer = LeakyReLU(0.01)

    def loss():
        return float(np.sum(r * layer.forward(x)))

    layer.forward(x, train=True)
    dx = layer.backward(r)
    assert_gradient_close(dx, numerical_gradient(loss, x))


@pytest.mark.parametrize('instance', range(100))
def test_batch_norm_gradients(instance):
    rng = np.random.default_rng(instance)
    x = rng.normal(size=(6, 4))
    r = rng.normal(size=(6, 4))
    layer = BatchNorm(4)
    layer.params['gamma'] = rng.uniform(0.5, 1.5, size=4)
    layer.params['beta'] = rng.normal(size=4)
    layer.running_mean = rng.normal(size=4)
    layer.running_var = rng.uniform(0.5, 2.0, size=4)

    def loss():
        return float(np.sum(r * layer.forward(x, train=True)))

    layer.forward(x, train=True)
    dx = layer.backward(r)
    grads = dict(layer.grads)
    assert_gradient_close(dx, numerical_gradient(loss, x))
    assert_gradient_close(grads['gamma'], numerical_gradient(loss, layer.params['gamma']))
    assert_gradient_close(grads['beta'], numerical_gradient(loss, layer.params['beta']))


def test_batch_norm_running_variance_is_unbiased():
    layer = BatchNorm(2, momentum=1.0)
    x = np.array([[0.0, 1.0], [2.0, 5.0]])
    layer.forward(x, train=True)
    np.testing.assert_allclose(layer.running_mean, [1.0, 3.0])
    np.testing.assert_allclose(layer.running_var, [2.0, 8.0])


def test_whole_network_gradients():
    arch = AeArchitecture(input_dim=8, depth=2, encoder_widths=[4, 2])
    model = init_model(arch, seed=3)
    x = np.random.default_rng(4).normal(size=(8, 8))

    def masks():
        return [b.act.mask.copy() for b in model.blocks if b.act is not None]

    def loss():
        return float(np.mean((model.forward_train(x) - x) ** 2))

    x_hat = model.forward_train(x)
    reference = masks()
    model.backward(2.0 * (x_hat - x) / x.size)
    analytic = {key: layer.grads[name].copy() for key, layer, name in model.parameters()}

    h = 1e-5
    checked = 0
    for key, layer, name in model.parameters():
        array = layer.params[name]
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + h
            plus = loss()
            flipped = any(not np.array_equal(a, b) for a, b in zip(masks(), reference))
            array[idx] = original - h
            minus = loss()
            flipped = flipped or any(not np.array_equal(a, b) for a, b in zip(masks(), reference))
            array[idx] = original
            if flipped:
                continue
            numeric = (plus - minus) / (2 * h)
            assert abs(analytic[key][idx] - numeric) / max(abs(analytic[key][idx]), abs(numeric), 1e-3) < 1e-4
            checked += 1
    assert checked > 0


def test_forward_matches_naive_computation():
    arch = AeArchitecture(input_dim=16, depth=3, encoder_widths=[12, 8, 4])
    model = init_model(arch, seed=5)
    for block in model.blocks:
        if block.norm is not None:
            width = block.norm.running_mean.shape[0]
            block.norm.running_mean = np.linspace(-0.5, 0.5, width)
            block.norm.running_var = np.linspace(0.5, 2.0, width)
    x = np.random.default_rng(6).normal(size=(5, 16))
    x_hat, hidden = forward(x, model)
    expected_hat, expected_hidden = naive_forward(x, model)
    np.testing.assert_allclose(x_hat, expected_hat, rtol=1e-12, atol=1e-12)
    for h, e in zip(hidden, expected_hidden):
        np.testing.assert_allclose(h, e, rtol=1e-12, atol=1e-12)


def test_forward_accepts_single_vector():
    model = init_model(AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4]), seed=1)
    x = np.random.default_rng(2).normal(size=(3, 16))
    single, hidden = forward(x[1], model)
    assert single.shape == (16,)
    assert [h.shape for h in hidden] == [(8,), (4,)]
    np.testing.assert_allclose(single, forward(x, model)[0][1], rtol=1e-12, atol=1e-12)


def test_forward_width_mismatch():
    model = init_model(AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4]))
    with pytest.raises(ShapeMismatchError):
        forward(np.zeros(15), model)


def test_identity_model_has_zero_pathway_error():
    model = identity_model()
    x = np.random.default_rng(7).normal(size=(4, 8))
    trace = pathway(x, model)
    assert trace.d.shape == (4, 40)
    assert np.all(trace.d == 0.0)
    assert np.all(reconstruction_error(x, model) == 0.0)


def test_pathway_matches_composed_forward():
    arch = AeArchitecture(input_dim=16, depth=3, encoder_widths=[12, 8, 4])
    model = init_model(arch, seed=8)
    x = np.random.default_rng(9).normal(size=(6, 16))
    x_hat, hidden = forward(x, model)
    _, hidden_hat = forward(x_hat, model)
    trace = pathway(x, model)
    assert trace.h.shape == (6, arch.pathway_width)
    np.testing.assert_allclose(trace.h, np.concatenate(hidden, axis=1), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(trace.h_hat, np.concatenate(hidden_hat, axis=1), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(trace.d, trace.h - trace.h_hat, rtol=1e-12, atol=1e-12)


def test_pathway_with_input_block():
    arch = AeArchitecture(input_dim=16, depth=3, encoder_widths=[12, 8, 4])
    model = init_model(arch, seed=8)
    x = np.random.default_rng(10).normal(size=16)
    trace = pathway(x, model, include_input=True)
    assert trace.d.shape == (16 + arch.pathway_width,)
    np.testing.assert_allclose(trace.d[:16], x - forward(x, model)[0], rtol=1e-12, atol=1e-12)


def test_state_dict_round_trip():
    arch = AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4])
    model = init_model(arch, seed=12)
    restored = AeModel.from_state_dict(arch, model.state_dict())
    for key, value in model.state_dict().items():
        assert np.array_equal(restored.state_dict()[key], value)


def test_non_finite_parameters_are_rejected():
    arch = AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4])
    state = init_model(arch).state_dict()
    state['01/dense/bias'][0] = np.nan
    with pytest.raises(TrainingFailureError):
        AeModel.from_state_dict(arch, state)


def test_zero_epochs_returns_initial_model():
    arch = AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4])
    data = subspace_data(40, 16, 3, seed=13)
    model = train(data[:30], arch, TrainConfig(epochs=0), val_data=data[30:], init_seed=21)
    initial = init_model(arch, seed=21)
    for key, value in initial.state_dict().items():
        assert np.array_equal(model.state_dict()[key], value)
    assert [r.epoch for r in model.history] == [0]


def test_training_loss_decreases_on_full_batches():
    arch = AeArchitecture(input_dim=16, depth=5, encoder_widths=[12, 10, 8, 6, 4])
    data = subspace_data(64, 16, 3, seed=14)
    val = subspace_data(16, 16, 3, seed=15)
    cfg = TrainConfig(epochs=10, batch_size=64, patience=10)
    model = train(data, arch, cfg, val_data=val, init_seed=2)
    losses = [r.train_loss for r in model.history[1:]]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_learns_low_rank_subspace():
    data = subspace_data(200, 512, 3, seed=16)
    arch = AeArchitecture()
    cfg = TrainConfig(epochs=300, patience=30, seed=4)
    model = train(data, arch, cfg, init_seed=5)
    initial = model.history[0].val_loss
    best = min(r.val_loss for r in model.history)
    assert best < 0.1 * initial


def test_training_reports_epoch_of_divergence():
    arch = AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4])
    data = np.full((32, 16), 1e300)
    with pytest.raises(TrainingFailureError) as e:
        train(data, arch, TrainConfig(epochs=5, batch_size=16), val_data=data[:4])
    assert e.value.epoch == 1


def test_on_epoch_sees_every_record():
    arch = AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4])
    data = subspace_data(48, 16, 3, seed=17)
    seen = []
    model = train(data, arch, TrainConfig(epochs=4, batch_size=16, patience=10), on_epoch=seen.append)
    assert [r.epoch for r in seen] == [0, 1, 2, 3, 4]
    assert seen == model.history


def test_inference_does_not_touch_layer_caches():
    model = init_model(AeArchitecture(input_dim=16, depth=2, encoder_widths=[8, 4]), seed=3)
    pathway(np.random.default_rng(4).normal(size=(5, 16)), model)
    for block in model.blocks:
        assert block.dense._x is None
        if block.norm is not None:
            assert block.norm._cache is None
            assert block.act.mask is None


def test_eval_output_ignores_batch_composition():
    arch = AeArchitecture(input_dim=16, depth=3, encoder_widths=[12, 8, 4])
    data = subspace_data(64, 16, 3, seed=18)
    model = train(data, arch, TrainConfig(epochs=5, batch_size=16, patience=10), init_seed=6)
    x = subspace_data(12, 16, 3, seed=19)
    full = pathway(x, model).d
    order = np.random.default_rng(20).permutation(len(x))
    np.testing.assert_allclose(pathway(x[order], model).d, full[order], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pathway(x[3:5], model).d, full[3:5], rtol=1e-12, atol=1e-12)
    for i in range(len(x)):
        np.testing.assert_allclose(pathway(x[i], model).d, full[i], rtol=1e-12, atol=1e-12)


def test_concurrent_inference_is_deterministic():
    model = init_model(AeArchitecture(input_dim=16, depth=3, encoder_widths=[12, 8, 4]), seed=22)
    chunks = [np.random.default_rng(seed).normal(size=(7, 16)) for seed in range(16)]
    serial = [pathway(chunk, model).d for chunk in chunks]
    with ThreadPoolExecutor(max_workers=8) as pool:
        concurrent = list(pool.map(lambda chunk: pathway(chunk, model).d, chunks * 4))
    for i, d in enumerate(concurrent):
        assert np.array_equal(d, serial[i % len(chunks)])

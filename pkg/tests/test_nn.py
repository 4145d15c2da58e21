import json

import numpy as np
import pytest

from rein2 import nn

from oracles import finite_difference_grad, mlp_forward_loops


def random_spec(rng, max_layers=3, max_units=16, activation=None):
    n_hidden = int(rng.integers(0, max_layers))
    sizes = [int(rng.integers(1, max_units + 1)) for _ in range(n_hidden + 2)]
    act = activation or ("relu" if rng.random() < 0.5 else "tanh")
    return nn.MlpSpec(tuple(sizes), act)


def test_param_count_examples():
    assert nn.param_count(nn.MlpSpec((4, 64, 64, 2))) == 4610
    assert nn.param_count(nn.MlpSpec((2, 64, 64, 3))) == 4547
    assert nn.param_count(nn.MlpSpec((1, 1))) == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        nn.MlpSpec((4,))
    with pytest.raises(ValueError):
        nn.MlpSpec((4, 0, 2))
    with pytest.raises(ValueError):
        nn.MlpSpec((4, 2), hidden_activation="sigmoid")


def test_init_params_deterministic_and_bounded():
    spec = nn.MlpSpec((4, 64, 64, 2))
    a = nn.init_params(spec, 42)
    b = nn.init_params(spec, 42)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, nn.init_params(spec, 43))
    layers = nn.unflatten(spec, a)
    for (w, bias), (n_in, n_out) in zip(layers, [(4, 64), (64, 64), (64, 2)]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        assert np.all(np.abs(w) <= limit)
        assert np.all(bias == 0.0)
    # first layer of the 4-64-64-2 net: bound is sqrt(6/68)
    assert np.all(np.abs(layers[0][0]) <= np.sqrt(6.0 / 68.0))


def test_flatten_unflatten_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        spec = random_spec(rng)
        params = rng.normal(size=nn.param_count(spec))
        assert np.array_equal(nn.flatten(spec, nn.unflatten(spec, params)), params)


def test_forward_zero_params_gives_zero_output():
    spec = nn.MlpSpec((3, 5, 2))
    out = nn.forward(spec, np.zeros(nn.param_count(spec)), np.array([1.0, -2.0, 3.0]))
    assert np.array_equal(out, np.zeros(2))


def test_forward_one_by_one():
    spec = nn.MlpSpec((1, 1))
    out = nn.forward(spec, np.array([2.0, 1.0]), np.array([3.0]))
    assert out.shape == (1,)
    assert out[0] == 7.0


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        spec = random_spec(rng)
        params = rng.normal(size=nn.param_count(spec))
        x = rng.normal(size=spec.n_inputs)
        got = nn.forward(spec, params, x)
        want = mlp_forward_loops(spec.layer_sizes, spec.hidden_activation, params, x)
        assert np.max(np.abs(got - np.array(want))) < 1e-12


def test_forward_is_pure():
    rng = np.random.default_rng(1)
    spec = nn.MlpSpec((4, 8, 8, 2), "tanh")
    params = rng.normal(size=nn.param_count(spec))
    x = rng.normal(size=4)
    assert np.array_equal(nn.forward(spec, params, x), nn.forward(spec, params, x))


def test_forward_shape_errors():
    spec = nn.MlpSpec((3, 2))
    with pytest.raises(ValueError):
        nn.forward(spec, np.zeros(nn.param_count(spec)), np.zeros(4))
    with pytest.raises(ValueError):
        nn.forward(spec, np.zeros(5), np.zeros(3))


def test_backward_zero_output_grad():
    rng = np.random.default_rng(2)
    spec = nn.MlpSpec((3, 6, 2))
    params = rng.normal(size=nn.param_count(spec))
    grad = nn.backward(spec, params, rng.normal(size=3), np.zeros(2))
    assert np.array_equal(grad, np.zeros_like(params))


def test_backward_one_by_one():
    spec = nn.MlpSpec((1, 1))
    grad = nn.backward(spec, np.array([2.0, 1.0]), np.array([3.0]), np.array([1.0]))
    assert np.array_equal(grad, np.array([3.0, 1.0]))


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_backward_matches_finite_differences(activation):
    """Gradient check over random small specs (<= 3 hidden, <= 16 units)."""
    rng = np.random.default_rng(11)
    for _ in range(10):
        spec = random_spec(rng, activation=activation)
        params = rng.normal(size=nn.param_count(spec))
        x = rng.normal(size=spec.n_inputs)
        g_out = rng.normal(size=spec.n_outputs)
        analytic = nn.backward(spec, params, x, g_out)

        def f(p):
            return float(np.dot(nn.forward(spec, p, x), g_out))

        numeric = finite_difference_grad(f, params, h=1e-5)
        denom = max(np.max(np.abs(numeric)), 1e-8)
        assert np.max(np.abs(analytic - numeric)) / denom < 1e-4


def test_backward_batch_is_sum_of_singles():
    rng = np.random.default_rng(3)
    spec = nn.MlpSpec((4, 8, 3), "tanh")
    params = rng.normal(size=nn.param_count(spec))
    xs = rng.normal(size=(6, 4))
    gs = rng.normal(size=(6, 3))
    batched = nn.backward_batch(spec, params, xs, gs)
    summed = sum(nn.backward(spec, params, xs[i], gs[i]) for i in range(6))
    assert np.max(np.abs(batched - summed)) < 1e-10


def test_backward_shape_errors():
    spec = nn.MlpSpec((3, 2))
    params = np.zeros(nn.param_count(spec))
    with pytest.raises(ValueError):
        nn.backward(spec, params, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        nn.backward(spec, params, np.zeros(2), np.zeros(2))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    spec = nn.MlpSpec((2, 5, 3))
    params = rng.normal(size=nn.param_count(spec))
    path = tmp_path / "net.bin"
    nn.save_params(path, spec, params)
    sizes, loaded = nn.load_params(path)
    assert sizes == spec.layer_sizes
    assert np.array_equal(loaded, params)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        nn.load_params(path)


def test_params_to_json():
    spec = nn.MlpSpec((1, 1))
    payload = json.loads(nn.params_to_json(spec, np.array([2.0, 1.0])))
    assert payload["layer_sizes"] == [1, 1]
    assert payload["layers"][0]["weights"] == [[2.0]]
    assert payload["layers"][0]["biases"] == [1.0]

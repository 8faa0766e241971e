import numpy as np
import pytest

from voxinr.network import (
    FfNetwork,
    FourierEncoder,
    MlpParams,
    backward,
    band_partition,
    encode,
    forward,
    init_network,
    param_count,
)
from voxinr.training import TrainConfig

FULL_SCALE = TrainConfig()  # 1280 features, 8x512, 2 grids


def tiny_config(**overrides):
    base = dict(
        epochs=1,
        fourier_features=4,
        hidden_layers=2,
        hidden_width=8,
        batch_size=8,
        grid_count=2,
        dtype="float64",
    )
    base.update(overrides)
    return TrainConfig(**base)


def make_encoder(b_rows, log_scales=None, bands=None):
    b = np.asarray(b_rows, dtype=np.float64)
    k = b.shape[0]
    if log_scales is None:
        log_scales = np.zeros(1)
    log_scales = np.asarray(log_scales, dtype=np.float64)
    if bands is None:
        bands = band_partition(k, log_scales.size)
    return FourierEncoder(b, log_scales, bands, gm_init=1.0)


class TestInit:
    def test_deterministic(self):
        cfg = tiny_config()
        a = init_network(cfg, seed=3)
        b = init_network(cfg, seed=3)
        assert np.array_equal(a.encoder.b_matrix, b.encoder.b_matrix)
        for wa, wb in zip(a.mlp.weights, b.mlp.weights):
            assert np.array_equal(wa, wb)

    def test_different_seeds_differ(self):
        cfg = tiny_config()
        a = init_network(cfg, seed=1)
        b = init_network(cfg, seed=2)
        assert not np.array_equal(a.encoder.b_matrix, b.encoder.b_matrix)

    def test_full_scale_mlp_parameter_count(self):
        # 2560*512+512 hidden input, 7*(512^2+512) middle, 512*2+2 head
        net = init_network(FULL_SCALE, seed=0)
        expected = (2560 * 512 + 512) + 7 * (512**2 + 512) + (512 * 2 + 2)
        assert expected == 3_150_850
        assert param_count(net) == 3_150_850

    def test_full_scale_count_with_encoder(self):
        net = init_network(FULL_SCALE, seed=0)
        assert param_count(net, include_encoder=True) == 3_150_850 + 3 * 1280 + 1

    def test_minimal_count(self):
        cfg = TrainConfig(
            fourier_features=1, hidden_layers=1, hidden_width=1, grid_count=1
        )
        net = init_network(cfg, seed=0)
        assert param_count(net) == (2 * 1 + 1) + (1 * 1 + 1)

    def test_single_band_scale_equals_gauss_multiplier(self):
        net = init_network(FULL_SCALE, seed=0)
        scales = np.exp(net.encoder.log_band_scales)
        assert scales.shape == (1,)
        assert np.isclose(scales[0], 2.5)

    def test_band_scales_double_per_band(self):
        net = init_network(tiny_config(band_count=4, fourier_features=8), seed=0)
        scales = np.exp(net.encoder.log_band_scales)
        assert np.allclose(scales, [2.5, 5.0, 10.0, 20.0])
        assert np.array_equal(net.encoder.band_of_row, [0, 0, 1, 1, 2, 2, 3, 3])

    def test_biases_start_at_zero(self):
        net = init_network(tiny_config(), seed=5)
        for b in net.mlp.biases:
            assert np.all(b == 0.0)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            init_network(tiny_config(fourier_features=0), seed=0)
        with pytest.raises(ValueError):
            init_network(tiny_config(gauss_multiplier=-1.0), seed=0)

    def test_b_matrix_frozen(self):
        net = init_network(tiny_config(), seed=0)
        with pytest.raises(ValueError):
            net.encoder.b_matrix[0, 0] = 9.9


class TestEncode:
    def test_origin_gives_ones_then_zeros(self):
        enc = make_encoder(np.random.default_rng(0).standard_normal((6, 3)))
        out = encode(enc, np.zeros(3))
        assert np.array_equal(out[:6], np.ones(6))
        assert np.array_equal(out[6:], np.zeros(6))

    def test_hand_evaluated_half_turn(self):
        # single row (0.5, 0, 0), unit scale, p=(1,0,0): phase = pi
        enc = make_encoder([[0.5, 0.0, 0.0]])
        out = encode(enc, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(out, [-1.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("k", [1, 4, 16])
    def test_output_length_is_twice_k(self, k):
        enc = make_encoder(np.random.default_rng(k).standard_normal((k, 3)))
        out = encode(enc, np.array([0.3, 0.7, 0.1]))
        assert out.shape == (2 * k,)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_range_is_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        enc = make_encoder(rng.standard_normal((32, 3)), log_scales=[np.log(2.5)])
        batch = rng.uniform(-2, 2, size=(64, 3))
        out = encode(enc, batch)
        assert out.shape == (64, 64)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_band_scale_rescales_phase(self):
        # doubling the scale doubles the phase: cos(2*pi*2*u) at u=0.25 -> cos(pi)
        enc = make_encoder([[1.0, 0.0, 0.0]], log_scales=[np.log(2.0)])
        out = encode(enc, np.array([0.25, 0.0, 0.0]))
        assert np.allclose(out, [-1.0, 0.0], atol=1e-12)


class TestForward:
    def test_zero_weights_output_is_bias(self):
        net = init_network(tiny_config(), seed=0)
        for w in net.mlp.weights:
            w[:] = 0.0
        net.mlp.biases[-1][:] = [0.25, -0.5]
        out = forward(net, np.random.default_rng(1).uniform(0, 1, (5, 3)))
        assert np.allclose(out, np.tile([0.25, -0.5], (5, 1)))

    def test_batch_invariance(self):
        # gemm vs gemv BLAS kernels may sum in different orders, so rows
        # agree to a few ulps rather than bit-exactly
        net = init_network(tiny_config(), seed=4)
        rng = np.random.default_rng(7)
        batch = rng.uniform(0, 1, (10, 3))
        single = forward(net, batch[3:4])
        assert np.allclose(forward(net, batch)[3], single[0], rtol=0, atol=1e-12)

    def test_hand_computed_tiny_network(self):
        # k=2, one hidden layer of width 2, one output; all values hand-set
        enc = make_encoder([[0.25, 0.0, 0.0], [0.0, 0.25, 0.0]])
        w0 = np.array([[1.0, -1.0], [0.5, 0.5], [0.0, 2.0], [1.0, 0.0]])
        b0 = np.array([0.1, -0.2])
        w1 = np.array([[2.0], [3.0]])
        b1 = np.array([0.05])
        net = FfNetwork(enc, MlpParams([w0, w1], [b0, b1]))
        p = np.array([1.0, 1.0, 0.0])
        # phases: pi/2 for both rows -> features [cos, cos, sin, sin] = [0, 0, 1, 1]
        # z = [0*1 + 0*0.5 + 1*0 + 1*1 + 0.1, 0*-1 + 0*0.5 + 1*2 + 1*0 - 0.2]
        #   = [1.1, 1.8]; relu keeps both
        # out = 1.1*2 + 1.8*3 + 0.05 = 7.65
        out = forward(net, p[None, :])
        assert np.allclose(out, [[7.65]], atol=1e-12)

    def test_empty_batch_rejected(self):
        net = init_network(tiny_config(), seed=0)
        with pytest.raises(ValueError, match="non-empty"):
            forward(net, np.empty((0, 3)))

    def test_repeated_calls_bit_identical(self):
        net = init_network(tiny_config(dtype="float32"), seed=6)
        batch = np.random.default_rng(8).uniform(0, 1, (32, 3)).astype(np.float32)
        a = forward(net, batch)
        b = forward(net, batch)
        assert np.array_equal(a, b)


def perturb_away_from_kinks(net, rng):
    """Move parameters off the zero-bias init so no ReLU pre-activation
    sits exactly on the kink where central differences are undefined."""
    for arr in net.mlp.weights + net.mlp.biases:
        arr += rng.uniform(-0.05, 0.05, arr.shape)


def max_relative_gradient_error(net, coords, targets, step=1e-5):
    _, grads = backward(net, coords, targets)
    param_arrays = net.mlp.weights + net.mlp.biases + [net.encoder.log_band_scales]
    grad_arrays = grads.weights + grads.biases + [grads.log_band_scales]
    worst = 0.0
    for arr, grad in zip(param_arrays, grad_arrays):
        flat_p = arr.reshape(-1)
        flat_g = np.asarray(grad).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            loss_plus, _ = backward(net, coords, targets)
            flat_p[i] = orig - step
            loss_minus, _ = backward(net, coords, targets)
            flat_p[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            rel = abs(numeric - flat_g[i]) / max(abs(numeric) + abs(flat_g[i]), 1e-10)
            worst = max(worst, rel)
    return worst


class TestBackward:
    def test_zero_loss_zero_mlp_gradients(self):
        net = init_network(tiny_config(), seed=1)
        batch = np.random.default_rng(2).uniform(0, 1, (4, 3))
        targets = forward(net, batch)
        loss, grads = backward(net, batch, targets)
        assert loss == 0.0
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    def test_quadratic_loss_scaling(self):
        net = init_network(tiny_config(), seed=2)
        rng = np.random.default_rng(3)
        batch = rng.uniform(0, 1, (6, 3))
        pred = forward(net, batch)
        delta = rng.uniform(0.1, 0.5, pred.shape)
        loss1, _ = backward(net, batch, pred + delta)
        loss2, _ = backward(net, batch, pred + 2.0 * delta)
        assert np.isclose(loss2, 4.0 * loss1, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        net = init_network(tiny_config(), seed=0)
        with pytest.raises(ValueError, match="do not agree"):
            backward(net, np.zeros((3, 3)), np.zeros((2, 2)))

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_gradients_match_finite_differences(self, seed):
        cfg = tiny_config(band_count=2, seed=seed)
        net = init_network(cfg, seed)
        rng = np.random.default_rng(1000 + seed)
        perturb_away_from_kinks(net, rng)
        coords = rng.uniform(0, 1, (6, 3))
        targets = rng.uniform(0, 1, (6, 2))
        assert max_relative_gradient_error(net, coords, targets) < 1e-4

    def test_band_scale_gradient_flows(self):
        net = init_network(tiny_config(), seed=9)
        rng = np.random.default_rng(10)
        coords = rng.uniform(0.1, 0.9, (8, 3))
        targets = rng.uniform(0, 1, (8, 2))
        _, grads = backward(net, coords, targets)
        assert np.any(grads.log_band_scales != 0.0)


class TestParamCount:
    def test_stable_across_save_load(self, tmp_path):
        from voxinr.io import load_checkpoint, save_checkpoint

        cfg = tiny_config(dtype="float32")
        net = init_network(cfg, seed=11)
        path = tmp_path / "net.ffck"
        save_checkpoint(path, net, cfg, dims=(8, 8, 8), grid_names=("a", "b"))
        loaded = load_checkpoint(path).network
        assert param_count(loaded) == param_count(net)
        assert param_count(loaded, include_encoder=True) == param_count(
            net, include_encoder=True
        )

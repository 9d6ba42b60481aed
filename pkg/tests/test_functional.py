"""
Tests for the differentiable ops, checked against brute-force oracles and finite differences
"""

import numpy as np
import pytest

from core import functional as F
from core.errors import ConfigurationError, ShapeError
from core.gradcheck import finite_diff_check
from core.tensor import Tensor, record


def brute_conv1d(x, w, b, stride=1, dilation=1, padding=0):
    c_in, length = x.shape
    c_out, _, kernel = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding)))
    out_len = (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1
    out = np.zeros((c_out, out_len))
    for o in range(c_out):
        for t in range(out_len):
            total = b[o]
            for i in range(c_in):
                for k in range(kernel):
                    total += w[o, i, k] * xp[i, t * stride + k * dilation]
            out[o, t] = total
    return out


def test_identity_kernel_passes_input_through():
    x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]))
    out = F.conv1d(x, Tensor(np.ones((1, 1, 1))))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0, 3.0, 4.0, 5.0]])


@pytest.mark.parametrize("stride,dilation,padding", [(1, 1, 0), (1, 3, 3), (2, 1, 2), (3, 2, 1)])
def test_conv1d_matches_triple_loop(stride, dilation, padding):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 64))
    w = rng.standard_normal((5, 8, 3))
    b = rng.standard_normal(5)
    out = F.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, dilation=dilation, padding=padding)
    expected = brute_conv1d(x, w, b, stride, dilation, padding)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12, atol=1e-12)


def test_strided_conv1d_on_a_long_signal():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, 4096))
    w = rng.standard_normal((3, 2, 41))
    b = rng.standard_normal(3)
    out = F.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=4, padding=20)
    assert out.shape == (3, 1024)
    np.testing.assert_allclose(out.data, brute_conv1d(x, w, b, stride=4, padding=20), rtol=1e-9, atol=1e-10)


def test_same_padding_preserves_length():
    x = Tensor(np.random.default_rng(1).standard_normal((2, 3, 17)))
    out = F.conv1d(x, Tensor(np.ones((4, 3, 3))), dilation=9, padding="same", padding_mode="reflect")
    assert out.shape == (2, 4, 17)


def test_conv1d_rejects_indivisible_groups():
    with pytest.raises(ShapeError) as info:
        F.conv1d(Tensor(np.ones((3, 10))), Tensor(np.ones((4, 1, 3))), groups=2)
    assert info.value.dimension == "in_channels"


def test_reflect_padding_mirrors_edges():
    x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
    np.testing.assert_array_equal(F.pad1d(x, 2, 1, "reflect").data, [[3, 2, 1, 2, 3, 4, 3]])
    with pytest.raises(ConfigurationError):
        F.pad1d(x, 1, 1, "circular")


@pytest.mark.parametrize("stride", [2, 5, 8])
def test_transposed_output_length_is_stride_times_input(stride):
    rng = np.random.default_rng(stride)
    w = Tensor(rng.standard_normal((3, 2, 2 * stride)))
    for length in range(1, 65):
        out = F.conv_transpose1d(Tensor(rng.standard_normal((3, length))), w, stride=stride)
        assert out.shape == (2, stride * length)


def test_transposed_kernel_must_be_twice_stride():
    with pytest.raises(ConfigurationError):
        F.conv_transpose1d(Tensor(np.ones((1, 1, 4))), Tensor(np.ones((1, 1, 5))), stride=2)


def test_single_frame_through_two_five_five_gives_fifty_samples():
    x = Tensor(np.ones((1, 3, 1)))
    for stride in (2, 5, 5):
        x = F.conv_transpose1d(x, Tensor(np.ones((x.shape[1], 3, 2 * stride))), stride=stride)
    assert x.shape == (1, 3, 50)


def test_leaky_relu_values_and_slope_range():
    out = F.leaky_relu(Tensor(np.array([-1.0, 3.5, 0.0])), 0.2)
    np.testing.assert_allclose(out.data, [-0.2, 3.5, 0.0])
    with pytest.raises(ConfigurationError):
        F.leaky_relu(Tensor(np.ones(2)), 1.5)


def test_tanh_of_zero_is_zero():
    assert F.tanh(Tensor(np.zeros(3))).data.tolist() == [0.0, 0.0, 0.0]


def test_avg_pool_of_constant_is_constant_and_halves_length():
    out = F.avg_pool1d(Tensor(np.full((1, 1, 100), 3.0)), kernel=4, stride=2, padding=1)
    assert out.shape == (1, 1, 50)
    np.testing.assert_allclose(out.data, 3.0)


def test_weight_norm_recomputes_value():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((4, 3, 5))
    g = rng.uniform(0.5, 2.0, 4)
    w = F.weight_norm(Tensor(v), Tensor(g)).data
    norms = np.sqrt((w * w).sum(axis=(1, 2)))
    np.testing.assert_allclose(norms, g, rtol=1e-12)


@pytest.mark.parametrize("fft_size,window_size,hop,length", [
    (32, 24, 8, 96),
    (1024, 600, 120, 4096),
    (2048, 1200, 240, 4096),
    (512, 240, 50, 4096),
    (384, 150, 30, 1024),
    (683, 300, 60, 1024),
    (171, 60, 10, 1024),
])
def test_stft_magnitude_matches_naive_dft(fft_size, window_size, hop, length):
    x = np.random.default_rng(4).standard_normal(length)
    out = F.stft_magnitude(Tensor(x), fft_size, window_size, hop).data
    padded = np.pad(x, fft_size // 2, mode="reflect")
    window = F.fft_window(fft_size, window_size)
    n = np.arange(fft_size)
    basis = np.exp(-2j * np.pi * np.outer(np.arange(fft_size // 2 + 1), n) / fft_size)
    frames = [padded[s : s + fft_size] * window for s in range(0, padded.size - fft_size + 1, hop)]
    expected = np.maximum(np.abs(np.array(frames) @ basis.T), 1e-7)
    np.testing.assert_allclose(out, expected, rtol=1e-9, atol=1e-9)


def test_stft_of_silence_sits_at_floor():
    out = F.stft_magnitude(Tensor(np.zeros(64)), 32, 32, 8)
    np.testing.assert_array_equal(out.data, np.full(out.shape, 1e-7))


def test_stft_rejects_empty_signal():
    with pytest.raises(ShapeError):
        F.stft_magnitude(Tensor(np.zeros(0)), 32, 32, 8)


# gradient checks

def test_gradcheck_of_identity_is_exact():
    x = Tensor(np.random.default_rng(5).standard_normal(6))
    assert finite_diff_check(lambda: x.sum(), [x]) < 1e-8


def test_conv1d_grouped_gradients():
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((4, 8)))
    w = Tensor(rng.standard_normal((6, 2, 3)))
    b = Tensor(rng.standard_normal(6))
    projection = rng.standard_normal((6, 8))

    def loss():
        return (F.conv1d(x, w, b, groups=2, padding="same") * Tensor(projection)).sum()

    assert finite_diff_check(loss, [x, w, b], epsilon=1e-3) < 1e-6


def test_reflect_padded_dilated_conv_gradients():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((1, 2, 12)))
    w = Tensor(rng.standard_normal((2, 2, 3)))
    projection = rng.standard_normal((1, 2, 12))

    def loss():
        return (F.conv1d(x, w, dilation=3, padding="same", padding_mode="reflect") * Tensor(projection)).sum()

    assert finite_diff_check(loss, [x, w], epsilon=1e-3) < 1e-6


def test_transposed_conv_gradients():
    rng = np.random.default_rng(8)
    x = Tensor(rng.standard_normal((3, 5)))
    w = Tensor(rng.standard_normal((3, 2, 10)))
    b = Tensor(rng.standard_normal(2))
    projection = rng.standard_normal((2, 25))

    def loss():
        return (F.conv_transpose1d(x, w, b, stride=5) * Tensor(projection)).sum()

    assert finite_diff_check(loss, [x, w, b], epsilon=1e-3) < 1e-6


def test_activation_and_pool_gradients():
    rng = np.random.default_rng(9)
    values = rng.uniform(0.1, 1.0, (2, 16)) * rng.choice([-1.0, 1.0], (2, 16))
    x = Tensor(values)

    def loss():
        pooled = F.avg_pool1d(F.leaky_relu(x, 0.2), kernel=4, stride=2, padding=1)
        return F.tanh(pooled).square().sum()

    assert finite_diff_check(loss, [x]) < 1e-4


def test_weight_norm_gradients():
    rng = np.random.default_rng(10)
    v = Tensor(rng.standard_normal((3, 2, 4)))
    g = Tensor(rng.uniform(0.5, 1.5, 3))
    projection = rng.standard_normal((3, 2, 4))

    def loss():
        return (F.weight_norm(v, g) * Tensor(projection)).sum()

    assert finite_diff_check(loss, [v, g]) < 1e-4


def test_stft_magnitude_gradients():
    rng = np.random.default_rng(11)
    x = Tensor(rng.standard_normal((2, 48)))

    def loss():
        return F.stft_magnitude(x, 16, 12, 4).log().mean()

    assert finite_diff_check(loss, [x], max_elements=24) < 1e-4


def test_corrupted_adjoint_is_caught():
    x = Tensor(np.random.default_rng(12).standard_normal(5))

    def broken_square(t):
        return record("broken_square", t.data * t.data, (t,), lambda g: (3.0 * t.data * g,))

    def loss():
        return broken_square(x).sum()

    assert finite_diff_check(loss, [x]) > 1e-2

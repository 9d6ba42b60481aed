"""
Tests for the generator, the multi-scale discriminator and complexity accounting
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from conftest import TINY_FULL_BAND, TINY_SUB_BAND, tiny_discriminator_spec, tiny_generator_spec, tone
from core.errors import ConfigurationError, ShapeError
from core.gradcheck import finite_diff_check
from core.models import CheckStatus, DiscriminatorSpec, GeneratorSpec, LossConfig, Scale, Variant
from core.tensor import Tensor
from vocoder.accounting import (
    compare_to_reference,
    count_flops,
    count_params,
    count_spec_params,
    discriminator_layer_costs,
    frame_context,
    model_stats,
    receptive_field,
    resstack_receptive_field,
)
from vocoder.discriminator import build_discriminator, discriminator_forward
from vocoder.generator import build_generator, generator_forward
from vocoder.losses import combined_mb_stft_loss
from vocoder.pqmf import analyze, synthesize_tensor


def test_receptive_fields():
    assert receptive_field(GeneratorSpec.preset(Variant.MB)) == 81
    assert receptive_field(GeneratorSpec.preset(Variant.BASIC)) == 27
    assert resstack_receptive_field((1,), kernel_size=1) == 1


@pytest.mark.parametrize("variant,expected", [
    (Variant.MB, [CheckStatus.WARN, CheckStatus.PASS]),
    (Variant.FB, [CheckStatus.PASS, CheckStatus.PASS]),
    (Variant.BASIC, [CheckStatus.PASS, CheckStatus.PASS]),
])
def test_full_presets_against_published_figures(variant, expected):
    spec = GeneratorSpec.preset(variant)
    assert spec.residual_shortcut == "identity"
    comparisons = compare_to_reference(model_stats(spec, DiscriminatorSpec.preset(variant)))
    assert [result.status for result in comparisons] == expected, [r.actual for r in comparisons]


def test_multi_band_parameter_shortfall_is_reported():
    stats = model_stats(GeneratorSpec.preset(Variant.MB))
    params = compare_to_reference(stats)[0]
    assert 1.50e6 < stats.parameter_count < 1.55e6
    assert params.status == CheckStatus.WARN
    assert "outside" in params.message


@pytest.mark.parametrize("variant", list(Variant))
def test_learned_shortcut_is_opt_in(variant):
    identity = GeneratorSpec.preset(variant)
    learned = replace(identity, residual_shortcut="conv")
    blocks = len(identity.resstack_dilations)
    extra = blocks * sum(c * c + 2 * c for c in identity.stage_channels)
    assert count_params(build_generator(learned)) == count_params(build_generator(identity)) + extra
    comparisons = compare_to_reference(model_stats(learned))
    assert all(result.status == CheckStatus.PASS for result in comparisons), [r.actual for r in comparisons]


def test_multi_band_needs_a_seventh_of_the_full_band_work():
    ratio = count_flops(GeneratorSpec.preset(Variant.MB)) / count_flops(GeneratorSpec.preset(Variant.FB))
    assert 0.13 < ratio < 0.16


@pytest.mark.parametrize("variant", list(Variant))
def test_built_generator_matches_accounting(variant):
    spec = GeneratorSpec.preset(variant)
    assert count_params(build_generator(spec)) == model_stats(spec).parameter_count


@pytest.mark.parametrize("scale", list(Scale))
def test_built_discriminator_matches_accounting(scale):
    spec = DiscriminatorSpec.preset(Variant.MB, scale)
    assert count_params(build_discriminator(spec)) == count_spec_params(discriminator_layer_costs(spec))


def test_upsampling_must_cover_the_hop():
    spec = GeneratorSpec(upsample_factors=(2, 5, 4))
    with pytest.raises(ConfigurationError):
        build_generator(spec)


@pytest.mark.parametrize("frames", [1, 3])
def test_multi_band_output_shape(frames):
    generator = build_generator(tiny_generator_spec())
    out = generator_forward(generator, np.zeros((frames, 8)))
    assert out.shape == (4, 50 * frames)


def test_full_band_output_shape():
    generator = build_generator(tiny_generator_spec(Variant.FB))
    out = generator.generate(np.random.default_rng(0).standard_normal((3, 8)))
    assert out.shape == (1, 600)


def test_output_is_bounded_and_deterministic():
    mel = 50.0 * np.random.default_rng(1).standard_normal((6, 8))
    first = build_generator(tiny_generator_spec(), seed=3).generate(mel)
    second = build_generator(tiny_generator_spec(), seed=3).generate(mel)
    np.testing.assert_array_equal(first, second)
    assert np.all(np.abs(first) <= 1.0)


def test_wrong_mel_bin_count_is_rejected():
    generator = build_generator(tiny_generator_spec())
    with pytest.raises(ShapeError):
        generator.generate(np.zeros((4, 9)))


def test_streaming_equals_whole_utterance():
    generator = build_generator(tiny_generator_spec(), seed=5)
    mel = np.random.default_rng(2).standard_normal((40, 8))
    whole = generator.generate(mel)
    assert frame_context(generator.spec) >= 7
    np.testing.assert_allclose(generator.generate_streaming(mel, chunk_frames=16), whole, atol=1e-10)
    with ThreadPoolExecutor(max_workers=3) as executor:
        threaded = generator.generate_streaming(mel, chunk_frames=7, executor=executor)
    np.testing.assert_allclose(threaded, whole, atol=1e-10)


def test_folded_generator_matches_weight_normed_one():
    generator = build_generator(tiny_generator_spec(), seed=6)
    mel = np.random.default_rng(3).standard_normal((5, 8))
    folded = generator.fold_for_inference(np.float32)
    out = folded.generate(mel)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, generator.generate(mel), atol=1e-4)


def test_generator_gradients_match_finite_differences():
    spec = GeneratorSpec(variant=Variant.MB, n_mels=2, entry_channels=8, upsample_factors=(2, 5, 5),
                         stage_channels=(8, 4, 2), resstack_dilations=(1, 3), out_channels=4)
    generator = build_generator(spec, seed=7)
    rng = np.random.default_rng(4)
    mel = Tensor(rng.standard_normal((1, 2, 2)))
    projection = Tensor(rng.standard_normal((1, 4, 100)))
    tensors = list(generator.named_tensors().values())

    def loss():
        return (generator(mel) * projection).sum()

    assert finite_diff_check(loss, tensors, epsilon=1e-7, floor=1e-3, max_elements=2) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_generator_and_combined_loss_gradients(bank, seed):
    spec = GeneratorSpec(variant=Variant.MB, n_mels=2, entry_channels=8, upsample_factors=(2, 5, 5),
                         stage_channels=(8, 4, 2), resstack_dilations=(1, 3, 9, 27), out_channels=4)
    generator = build_generator(spec, seed=seed)
    loss_config = replace(LossConfig.for_variant(Variant.MB), full_band_resolutions=TINY_FULL_BAND,
                          sub_band_resolutions=TINY_SUB_BAND)
    rng = np.random.default_rng(100 + seed)
    mel = Tensor(rng.standard_normal((1, 2, 4)))
    audio = 0.3 * rng.standard_normal(800)
    target = Tensor(audio[None, None, :])
    sub_targets = Tensor(analyze(bank, audio)[None])

    def loss():
        sub_bands = generator(mel)
        return combined_mb_stft_loss(target, synthesize_tensor(bank, sub_bands), sub_targets, sub_bands,
                                     loss_config)

    tensors = list(generator.named_tensors().values())
    assert finite_diff_check(loss, tensors, epsilon=1e-5, floor=1e-4, max_elements=3, seed=seed) < 1e-4


def test_discriminator_outputs_per_scale():
    spec = tiny_discriminator_spec()
    discriminator = build_discriminator(spec)
    outputs = discriminator_forward(discriminator, np.zeros((2, 1, 800)))
    assert len(outputs) == 3
    lengths = []
    for score, features in outputs:
        assert len(features) == len(spec.strided) + 3
        assert features[-1] is score
        assert score.shape[:2] == (2, 1)
        assert np.all(np.isfinite(score.data))
        lengths.append(features[0].shape[-1])
    assert lengths == [800, 400, 200]


def test_discriminator_scores_react_to_noise():
    discriminator = build_discriminator(tiny_discriminator_spec(), seed=1)
    real = tone(0.05)[None, None, :]
    noise = 0.3 * np.random.default_rng(12).standard_normal(real.shape)
    for (real_score, _), (noise_score, _) in zip(discriminator_forward(discriminator, real),
                                                 discriminator_forward(discriminator, noise)):
        assert np.max(np.abs(real_score.data - noise_score.data)) > 1e-6


def test_discriminator_rejects_short_audio():
    discriminator = build_discriminator(tiny_discriminator_spec())
    with pytest.raises(ShapeError):
        discriminator_forward(discriminator, np.zeros((1, 1, 100)))


def test_discriminator_group_counts_must_divide():
    spec = DiscriminatorSpec(entry_channels=6, strided=((64, 4), (256, 16), (512, 64)))
    with pytest.raises(ConfigurationError):
        build_discriminator(spec)


def test_perturbing_one_frame_stays_within_frame_context():
    generator = build_generator(tiny_generator_spec(), seed=8)
    mel = np.random.default_rng(5).standard_normal((40, 8))
    bumped = mel.copy()
    bumped[20] += 1.0
    context = frame_context(generator.spec)
    per_frame = generator.spec.frame_upsampling
    low, high = (20 - context) * per_frame, (21 + context) * per_frame
    before, after = generator.generate(mel), generator.generate(bumped)
    np.testing.assert_allclose(after[:, :low], before[:, :low], atol=1e-12)
    np.testing.assert_allclose(after[:, high:], before[:, high:], atol=1e-12)
    assert np.max(np.abs(after[:, low:high] - before[:, low:high])) > 1e-6

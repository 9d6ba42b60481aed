"""
Tests for the inference fast path, checkpoint loading and the RTF benchmark
"""

import json

import numpy as np
import pytest

from conftest import tiny_generator_spec, tone
from core.errors import ConfigurationError, ShapeError
from core.models import FeatureConfig, GeneratorSpec, Variant
from reports.console_reporter import ConsoleReporter
from reports.json_reporter import JSONReporter
from vocoder.benchmark import bench_mel, run_benchmark
from vocoder.features import AudioBuffer, MelSpectrogram
from vocoder.generator import build_generator
from vocoder.inference import Vocoder
from vocoder.trainer import Trainer, corpus_from_config


@pytest.fixture
def vocoder(bank):
    generator = build_generator(tiny_generator_spec(), seed=4).fold_for_inference(np.float32)
    return Vocoder(generator, FeatureConfig(n_mels=8), None, bank)


@pytest.mark.parametrize("frames", [1, 7, 80])
def test_each_frame_gives_one_hop_of_audio(vocoder, frames):
    mel = np.random.default_rng(0).standard_normal((frames, 8))
    audio = vocoder.synthesize(mel)
    assert audio.shape == (200 * frames,)
    assert np.all(np.isfinite(audio))


def test_chunked_synthesis_matches_single_pass(vocoder):
    mel = np.random.default_rng(1).standard_normal((50, 8))
    np.testing.assert_allclose(vocoder.synthesize(mel, chunk_frames=12), vocoder.synthesize(mel, chunk_frames=None),
                               atol=1e-5)


def test_full_band_vocoder_skips_synthesis_filters():
    generator = build_generator(tiny_generator_spec(Variant.FB)).fold_for_inference(np.float32)
    vocoder = Vocoder(generator, FeatureConfig(n_mels=8))
    assert vocoder.synthesize(np.zeros((3, 8))).shape == (600,)


def test_multi_band_needs_a_bank():
    generator = build_generator(tiny_generator_spec())
    with pytest.raises(ConfigurationError):
        Vocoder(generator, FeatureConfig(n_mels=8))


def test_empty_mel_is_rejected(vocoder):
    with pytest.raises(ShapeError):
        vocoder.synthesize(np.zeros((0, 8)))
    with pytest.raises(ShapeError):
        vocoder.prepare(MelSpectrogram(np.zeros((0, 8))))


def test_mel_bin_mismatch(vocoder):
    with pytest.raises(ConfigurationError):
        vocoder.prepare(MelSpectrogram(np.zeros((5, 80))))


def test_feature_settings_mismatch(vocoder):
    vocoder.check_features(FeatureConfig(n_mels=8))
    with pytest.raises(ConfigurationError) as info:
        vocoder.check_features(FeatureConfig(n_mels=8, fmax=7000.0))
    assert "fmax" in str(info.value)


def test_copy_synthesis_preserves_length(vocoder):
    result = vocoder.copy_synthesis(AudioBuffer(tone(0.25)))
    assert len(result) == 4000
    assert result.sample_rate == 16000


@pytest.mark.parametrize("save", ["export", "save"])
def test_checkpoints_load_as_vocoders(run_config, bank, tmp_path, save):
    trainer = Trainer(run_config, corpus_from_config(run_config), bank=bank)
    path = tmp_path / "model.mbmg"
    getattr(trainer, save)(path)
    vocoder = Vocoder.from_checkpoint(path)
    assert vocoder.stats is not None
    assert vocoder.bank.num_bands == 4
    mel = np.random.default_rng(2).standard_normal((6, 8))
    expected = trainer.generator.fold_for_inference(np.float32).generate(mel)
    np.testing.assert_allclose(vocoder.generator.generate(mel), expected, atol=1e-6)


def test_benchmark_report(vocoder):
    report = run_benchmark(vocoder, seconds=0.2, threads=2, warmup=1, iterations=2)
    assert report.thread_count == 2
    assert len(report.iteration_seconds) == 2
    assert report.audio_seconds == pytest.approx(0.2)
    assert report.rtf > 0
    assert report.rtf == pytest.approx(report.wall_seconds / report.audio_seconds)


@pytest.mark.parametrize("kwargs", [{"seconds": 0.0}, {"threads": 0}, {"iterations": 0}, {"warmup": -1}])
def test_benchmark_rejects_bad_arguments(vocoder, kwargs):
    with pytest.raises(ConfigurationError):
        run_benchmark(vocoder, **kwargs)


def test_bench_mel_is_seeded():
    np.testing.assert_array_equal(bench_mel(0.5, 8, seed=3), bench_mel(0.5, 8, seed=3))
    assert bench_mel(0.5, 8).shape == (40, 8)


def test_benchmark_reports(vocoder, tmp_path, capsys):
    report = run_benchmark(vocoder, seconds=0.1, iterations=1, warmup=0)
    path = tmp_path / "bench.json"
    JSONReporter.generate_bench_report(report, str(path))
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["metadata"]["report_type"] == "bench"
    assert data["bench"]["thread_count"] == 1
    ConsoleReporter.generate_bench_report(report)
    assert "rtf:" in capsys.readouterr().out


@pytest.mark.slow
def test_multi_band_synthesis_is_over_four_times_faster_than_full_band():
    reports = {
        variant: run_benchmark(Vocoder.from_spec(GeneratorSpec.preset(variant)), seconds=2.0, threads=1, warmup=1,
                               iterations=3)
        for variant in (Variant.MB, Variant.FB)
    }
    assert reports[Variant.MB].rtf < reports[Variant.FB].rtf / 4, {v.value: r.rtf for v, r in reports.items()}

"""
Shared fixtures: tiny model configurations and a synthetic WAV corpus
"""

from dataclasses import replace

import numpy as np
import pytest

from core.models import (
    DiscriminatorSpec,
    FeatureConfig,
    GeneratorSpec,
    LossConfig,
    RunConfig,
    Scale,
    StftResolution,
    Variant,
)
from vocoder.features import AudioBuffer, wav_write
from vocoder.pqmf import design_prototype

TINY_MELS = 8
TINY_FULL_BAND = (StftResolution(64, 32, 8), StftResolution(128, 64, 16), StftResolution(32, 16, 4))
TINY_SUB_BAND = (StftResolution(16, 8, 2), StftResolution(32, 16, 4), StftResolution(8, 4, 2))


def tiny_generator_spec(variant: Variant = Variant.MB, n_mels: int = TINY_MELS) -> GeneratorSpec:
    if variant == Variant.MB:
        return GeneratorSpec(variant=variant, n_mels=n_mels, entry_channels=8, upsample_factors=(2, 5, 5),
                             stage_channels=(8, 4, 4), resstack_dilations=(1, 3), out_channels=4)
    return GeneratorSpec(variant=variant, n_mels=n_mels, entry_channels=8, upsample_factors=(8, 5, 5),
                         stage_channels=(8, 4, 4), resstack_dilations=(1, 3), out_channels=1)


def tiny_discriminator_spec(variant: Variant = Variant.MB) -> DiscriminatorSpec:
    strided = ((4, 2), (4, 4), (4, 4))
    if variant == Variant.BASIC:
        strided += ((4, 4),)
    return DiscriminatorSpec(num_scales=3, entry_kernel=5, entry_channels=2, strided=strided, strided_kernel=9,
                             post_kernel=3, post_channels=4)


def tiny_run_config(out_dir, variant: Variant = Variant.MB, **train_changes) -> RunConfig:
    config = RunConfig.preset(variant, Scale.DESK)
    config.generator = tiny_generator_spec(variant)
    config.discriminator = tiny_discriminator_spec(variant)
    config.features = FeatureConfig(n_mels=TINY_MELS)
    config.loss = replace(LossConfig.for_variant(variant), full_band_resolutions=TINY_FULL_BAND,
                          sub_band_resolutions=TINY_SUB_BAND)
    train = dict(batch_size=2, crop_seconds=0.05, pretrain_steps=2, total_steps=4, checkpoint_every=2,
                 log_every=1, out_dir=str(out_dir))
    train.update(train_changes)
    config.train = replace(config.train, **train)
    return config


def tone(seconds: float, frequency: float = 440.0, seed: int = 0) -> np.ndarray:
    """Sine plus low-level noise, so no crop is ever silent"""
    t = np.arange(int(round(seconds * 16000))) / 16000.0
    noise = np.random.default_rng(seed).standard_normal(t.size)
    return 0.4 * np.sin(2 * np.pi * frequency * t) + 0.05 * noise


@pytest.fixture(scope="session")
def bank():
    return design_prototype(4, 64, 9.0)


@pytest.fixture
def wav_corpus(tmp_path):
    """Three short clips of different pitch under tmp_path/wavs"""
    directory = tmp_path / "wavs"
    directory.mkdir()
    paths = []
    for index, (seconds, frequency) in enumerate(((0.3, 220.0), (0.25, 330.0), (0.35, 550.0))):
        path = directory / f"clip{index}.wav"
        wav_write(path, AudioBuffer(tone(seconds, frequency, seed=index)))
        paths.append(path)
    return paths


@pytest.fixture
def run_config(tmp_path, wav_corpus):
    config = tiny_run_config(tmp_path / "run")
    config.data_wavs = [str(p) for p in wav_corpus]
    return config

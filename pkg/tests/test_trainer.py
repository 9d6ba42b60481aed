"""
Tests for batching, the update schedule, checkpointing and resumption
"""

from pathlib import Path

import numpy as np
import pytest

from conftest import tiny_run_config, tone
from core.checkpoint import read_checkpoint
from core.config_loader import ConfigLoader
from core.errors import ChecksumError, CheckpointError, ConfigurationError
from core.models import Phase, TrainConfig, Variant
from reports.csv_reporter import CSVReporter
from vocoder.features import AudioBuffer, wav_write
from vocoder.trainer import (
    LOSS_LOG_NAME,
    MODEL_FILE_NAME,
    Trainer,
    corpus_from_config,
    crop_batch,
    load_checkpoint,
    lr_at,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
SMOOTHING = 20


@pytest.fixture
def corpus(run_config):
    return corpus_from_config(run_config)


@pytest.fixture
def trainer(run_config, corpus, bank):
    return Trainer(run_config, corpus, bank=bank)


def snapshot(module):
    return {name: value.copy() for name, value in module.state_dict().items()}


def assert_same_state(first, second):
    assert first.keys() == second.keys()
    for name in first:
        np.testing.assert_array_equal(first[name], second[name], err_msg=name)


def test_learning_rate_schedule():
    config = TrainConfig(lr_g=1e-4, lr_halve_every=100000, lr_floor=1e-6)
    assert lr_at(0, config) == 1e-4
    assert lr_at(99999, config) == 1e-4
    assert lr_at(100000, config) == 5e-5
    assert lr_at(10**7, config) == 1e-6
    assert lr_at(100000, config, initial_lr=2e-4) == 1e-4
    with pytest.raises(ConfigurationError):
        lr_at(-1, config)


def test_corpus_is_normalized_on_itself(corpus):
    assert len(corpus.clips) == 3
    pooled = np.concatenate([clip.mel for clip in corpus.clips])
    np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=1e-9)


def test_crop_batch_is_aligned_and_deterministic(run_config, corpus, bank):
    batch = crop_batch(corpus, run_config, np.random.default_rng(0), bank)
    assert batch.audio.shape == (2, 1, 800)
    assert batch.mel.shape == (2, 8, 4)
    assert batch.sub_bands.shape == (2, 4, 200)

    for audio, mel in zip(batch.audio[:, 0], batch.mel):
        matches = []
        for clip in corpus.clips:
            for start in range(len(clip.mel) - 3):
                if np.array_equal(clip.audio[start * 200 : start * 200 + 800], audio):
                    matches.append(np.array_equal(clip.mel[start : start + 4].T, mel))
        assert matches and all(matches)

    again = crop_batch(corpus, run_config, np.random.default_rng(0), bank)
    np.testing.assert_array_equal(again.audio, batch.audio)
    np.testing.assert_array_equal(again.mel, batch.mel)


def test_crop_longer_than_every_clip(run_config, corpus):
    long_crop = tiny_run_config(run_config.train.out_dir, crop_seconds=1.0)
    with pytest.raises(ConfigurationError):
        crop_batch(corpus, long_crop, np.random.default_rng(0))


def test_discriminator_update_leaves_generator_untouched(trainer, run_config, corpus, bank):
    batch = crop_batch(corpus, run_config, np.random.default_rng(1), bank)
    generator_before = snapshot(trainer.generator)
    discriminator_before = snapshot(trainer.discriminator)
    loss = trainer.discriminator_update(batch)
    assert np.isfinite(loss)
    assert_same_state(snapshot(trainer.generator), generator_before)
    changed = snapshot(trainer.discriminator)
    assert any(not np.array_equal(changed[k], discriminator_before[k]) for k in changed)


def test_generator_update_leaves_discriminator_untouched(trainer, run_config, corpus, bank):
    batch = crop_batch(corpus, run_config, np.random.default_rng(2), bank)
    discriminator_before = snapshot(trainer.discriminator)
    generator_before = snapshot(trainer.generator)
    losses = trainer.generator_update(batch)
    assert set(losses) == {'g_adv', 'stft', 'g_total'}
    assert losses['g_total'] == pytest.approx(losses['g_adv'] * 2.5 + losses['stft'])
    assert_same_state(snapshot(trainer.discriminator), discriminator_before)
    changed = snapshot(trainer.generator)
    assert any(not np.array_equal(changed[k], generator_before[k]) for k in changed)


def test_pretrain_step_updates_generator_only(trainer, run_config, corpus, bank):
    batch = crop_batch(corpus, run_config, np.random.default_rng(3), bank)
    discriminator_before = snapshot(trainer.discriminator)
    assert np.isfinite(trainer.pretrain_step(batch))
    assert trainer.state.adam_g.step_count == 1
    assert trainer.state.adam_d.step_count == 0
    assert_same_state(snapshot(trainer.discriminator), discriminator_before)


def test_phases_follow_the_schedule(trainer):
    records = [trainer.train_step() for _ in range(3)]
    assert [r.phase for r in records] == [Phase.PRETRAIN, Phase.PRETRAIN, Phase.ADVERSARIAL]
    assert records[0].stft is not None and records[0].d_loss is None
    assert records[2].d_loss is not None and records[2].g_total is not None
    assert trainer.state.step == 3


def test_fit_writes_checkpoints_log_and_model(trainer, run_config):
    records = trainer.fit()
    out_dir = trainer.config.train.out_dir
    assert [r.step for r in records] == [1, 2, 3, 4]
    rows = CSVReporter.read_loss_log(f"{out_dir}/{LOSS_LOG_NAME}")
    assert [int(row['step']) for row in rows] == [1, 2, 3, 4]
    assert [row['phase'] for row in rows] == ['pretrain', 'pretrain', 'adversarial', 'adversarial']

    model = read_checkpoint(f"{out_dir}/{MODEL_FILE_NAME}")
    assert model.metadata['kind'] == 'model'
    assert all(array.dtype == np.float32 for array in model.tensors.values())
    assert not any(name.endswith('.g') for name in model.tensors)

    resume = load_checkpoint(f"{out_dir}/step_2.mbmg")
    assert resume.state.step == 2
    assert resume.state.phase == Phase.PRETRAIN
    assert resume.config.to_dict() == run_config.to_dict()


def test_resumed_run_matches_uninterrupted_run(run_config, corpus, bank):
    uninterrupted = Trainer(run_config, corpus, bank=bank)
    uninterrupted.fit(steps=4)
    out_dir = uninterrupted.config.train.out_dir
    expected = load_checkpoint(f"{out_dir}/step_4.mbmg")

    resumed = Trainer.from_checkpoint(f"{out_dir}/step_2.mbmg", corpus)
    assert resumed.state.step == 2
    resumed.fit(steps=2)
    assert resumed.state.step == 4

    assert_same_state(resumed.generator.state_dict(), expected.generator)
    assert_same_state(resumed.discriminator.state_dict(), expected.discriminator)
    assert_same_state(resumed.state.adam_g.moments(), expected.state.adam_g.moments())
    assert_same_state(resumed.state.adam_d.moments(), expected.state.adam_d.moments())
    assert resumed.state.adam_g.step_count == expected.state.adam_g.step_count
    rows = CSVReporter.read_loss_log(f"{out_dir}/{LOSS_LOG_NAME}")
    assert [int(row['step']) for row in rows] == [1, 2, 3, 4]


def test_corrupted_checkpoint_is_rejected(trainer, tmp_path):
    path = tmp_path / "state.mbmg"
    trainer.save(path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_checkpoint(path)


def test_model_checkpoint_cannot_resume(trainer, tmp_path):
    path = tmp_path / "model.mbmg"
    trainer.export(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


@pytest.mark.parametrize("variant,crop", [(Variant.FB, 0.05), (Variant.BASIC, 0.1)])
def test_single_band_variants_train(tmp_path, wav_corpus, variant, crop):
    config = tiny_run_config(tmp_path / "run", variant, crop_seconds=crop, pretrain_steps=1, total_steps=2)
    config.data_wavs = [str(p) for p in wav_corpus]
    trainer = Trainer(config, corpus_from_config(config))
    assert trainer.bank is None
    records = trainer.fit()
    assert all(np.isfinite(r.g_total) for r in records if r.phase == Phase.ADVERSARIAL)
    if variant == Variant.BASIC:
        assert records[-1].feature_matching is not None


@pytest.mark.slow
def test_desk_run_overfits_one_clip(tmp_path):
    wav_dir = tmp_path / "wavs"
    wav_dir.mkdir()
    wav_write(wav_dir / "clip.wav", AudioBuffer(tone(1.0, 220.0)))
    config = ConfigLoader(str(CONFIG_DIR / "desk_mb.yaml")).load(
        [f"data.wav_dir={wav_dir}", f"train.out_dir={tmp_path / 'run'}", "train.checkpoint_every=400"]
    )
    assert (config.train.pretrain_steps, config.train.total_steps) == (300, 800)
    records = Trainer(config, corpus_from_config(config)).fit()

    losses = np.array([record.stft for record in records])
    assert np.all(np.isfinite(losses))
    assert all(np.isfinite(r.d_loss) and np.isfinite(r.g_total) for r in records[300:])
    smoothed = np.convolve(losses, np.ones(SMOOTHING) / SMOOTHING, mode="valid")
    start, pretrain_end, final = smoothed[0], smoothed[300 - SMOOTHING], smoothed[-1]
    assert pretrain_end <= 0.2 * start, (start, pretrain_end)
    assert final <= 1.1 * pretrain_end, (pretrain_end, final)


def test_identical_seeds_give_identical_checkpoints(run_config, corpus, bank, tmp_path):
    blobs = []
    for name in ("first", "second"):
        trainer = Trainer(run_config, corpus, bank=bank)
        trainer.train_step()
        trainer.save(tmp_path / f"{name}.mbmg")
        blobs.append((tmp_path / f"{name}.mbmg").read_bytes())
    assert blobs[0] == blobs[1]

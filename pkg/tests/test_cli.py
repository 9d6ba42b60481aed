"""
Tests for the command-line surface
"""

import csv
import json

import numpy as np
import pytest

from conftest import tone
from core.models import CheckStatus, GeneratorSpec, Variant
from mb_melgan import main
from vocoder.accounting import model_stats
from vocoder.features import AudioBuffer, read_mel, wav_read, wav_write
from vocoder.trainer import Trainer, corpus_from_config


@pytest.fixture
def training_checkpoint(run_config, bank, tmp_path):
    path = tmp_path / "state.mbmg"
    Trainer(run_config, corpus_from_config(run_config), bank=bank).save(path)
    return path


@pytest.fixture
def feature_config(tmp_path):
    path = tmp_path / "features.yaml"
    path.write_text("features:\n  n_mels: 8\n", encoding="utf-8")
    return path


def test_count_json(tmp_path):
    out = tmp_path / "count.json"
    main(["count", "--variant", "mb", "--output-format", "json", "--output-file", str(out)])
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["stats"]["parameter_count"] == model_stats(GeneratorSpec.preset(Variant.MB)).parameter_count
    assert [r["status"] for r in data["published_comparison"]] == ["WARN", "PASS"]


def test_count_console_flags_the_multi_band_shortfall(capsys):
    main(["count", "--variant", "mb"])
    out = capsys.readouterr().out
    assert "[WARN] mb.params" in out
    assert "[PASS] mb.gflops" in out
    assert {status.value for status in CheckStatus} == {"PASS", "FAIL", "WARN"}


def test_count_desk_with_build_check(capsys):
    main(["count", "--variant", "fb", "--scale", "desk", "--verify-build"])
    assert "fb" in capsys.readouterr().out


def test_pqmf_verify_json(tmp_path):
    out = tmp_path / "pqmf.json"
    main(["pqmf-verify", "--output-format", "json", "--output-file", str(out)])
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["metadata"]["report_type"] == "pqmf-verify"
    assert data["failed"] == 0
    assert data["total_checks"] == 10


def test_pqmf_verify_csv(tmp_path):
    out = tmp_path / "pqmf.csv"
    main(["pqmf-verify", "--output-format", "csv", "--output-file", str(out)])
    with open(out, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 10
    assert {row["Status"] for row in rows} == {"PASS"}


def test_pqmf_verify_rejects_single_band():
    with pytest.raises(SystemExit) as info:
        main(["pqmf-verify", "--bands", "1"])
    assert info.value.code == 1


def test_features_then_synth(tmp_path, training_checkpoint, feature_config):
    wav = tmp_path / "input.wav"
    wav_write(wav, AudioBuffer(tone(0.2, 300.0)))
    mel_path = tmp_path / "input.mel"
    main(["features", "--wav", str(wav), "--out", str(mel_path), "--config", str(feature_config)])
    mel, config = read_mel(mel_path)
    assert mel.frames.shape == (16, 8)
    assert config.n_mels == 8

    out = tmp_path / "output.wav"
    main(["synth", "--checkpoint", str(training_checkpoint), "--mel", str(mel_path), "--out", str(out)])
    audio = wav_read(out)
    assert len(audio) == 16 * 200
    assert np.all(np.abs(audio.samples) <= 1.0)


def test_synth_rejects_mismatched_features(tmp_path, training_checkpoint):
    wav = tmp_path / "input.wav"
    wav_write(wav, AudioBuffer(tone(0.1)))
    mel_path = tmp_path / "input.mel"
    main(["features", "--wav", str(wav), "--out", str(mel_path)])
    with pytest.raises(SystemExit) as info:
        main(["synth", "--checkpoint", str(training_checkpoint), "--mel", str(mel_path),
              "--out", str(tmp_path / "never.wav")])
    assert info.value.code == 1
    assert not (tmp_path / "never.wav").exists()


def test_export_then_copy_synthesis(tmp_path, training_checkpoint):
    model = tmp_path / "model.mbmg"
    main(["export", "--checkpoint", str(training_checkpoint), "--out", str(model)])
    wav = tmp_path / "input.wav"
    wav_write(wav, AudioBuffer(tone(0.15)))
    out = tmp_path / "copy.wav"
    main(["synth", "--checkpoint", str(model), "--wav", str(wav), "--out", str(out)])
    assert len(wav_read(out)) == 2400


def test_train_reports_unknown_keys(tmp_path):
    config = tmp_path / "bad.yaml"
    config.write_text("train:\n  batch_sise: 2\n", encoding="utf-8")
    with pytest.raises(SystemExit) as info:
        main(["train", "--config", str(config)])
    assert info.value.code == 1


def test_train_without_configuration():
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 1

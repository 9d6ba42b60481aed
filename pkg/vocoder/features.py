"""
Waveform I/O and mel-spectrogram conditioning features
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import librosa
import numpy as np
import soundfile as sf

from core import functional as F
from core.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from core.errors import ConfigurationError, FormatError, ShapeError
from core.models import SAMPLE_RATE, FeatureConfig
from core.tensor import Tensor, no_grad

PCM_SCALE = 32768.0
MEL_KIND = "mel"


@dataclass
class AudioBuffer:
    """Mono waveform with samples in [-1, 1]"""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise FormatError("audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class MelSpectrogram:
    """T x n_mels log-mel frames"""
    frames: np.ndarray
    hop_samples: int = 200
    frame_samples: int = 800

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ShapeError("mel_spectrogram", "rank", 2, self.frames.ndim)
        if not np.all(np.isfinite(self.frames)):
            raise FormatError("mel spectrogram contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """Per-bin corpus mean and standard deviation"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("feature_stats", "bins", self.mean.shape, self.std.shape)
        bad = np.flatnonzero(~(self.std > 0))
        if bad.size:
            raise ConfigurationError(f"mel bin {int(bad[0])} has zero variance over the corpus")


def stft_magnitude(samples: np.ndarray, fft_size: int, window_size: int, hop_size: int,
                   center: bool = True) -> np.ndarray:
    """Magnitude spectrogram [n_frames x (fft_size / 2 + 1)] of a 1-D signal"""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError("stft_magnitude", "rank", 1, samples.ndim)
    if samples.size == 0:
        raise ShapeError("stft_magnitude", "samples", "> 0", 0)
    with no_grad():
        return F.stft_magnitude(Tensor(samples), fft_size, window_size, hop_size, center=center).data


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-scale filterbank [n_mels x (fft_size / 2 + 1)]"""
    basis = librosa.filters.mel(
        sr=sample_rate, n_fft=fft_size, n_mels=n_mels, fmin=fmin, fmax=fmax, htk=True, norm=None
    ).astype(np.float64)
    basis.setflags(write=False)
    return basis


def num_frames(num_samples: int, hop_size: int = 200) -> int:
    return math.ceil(num_samples / hop_size)


def mel_spectrogram(audio: AudioBuffer, config: FeatureConfig = None) -> MelSpectrogram:
    """Natural-log mel frames with T = ceil(len / hop) under centred framing"""
    config = config or FeatureConfig()
    if audio.sample_rate != config.sample_rate or config.sample_rate != SAMPLE_RATE:
        raise ConfigurationError(f"unsupported sample rate {audio.sample_rate} Hz (expected {SAMPLE_RATE})")
    magnitudes = stft_magnitude(audio.samples, config.fft_size, config.window_size, config.hop_size)
    frames = num_frames(len(audio), config.hop_size)
    magnitudes = magnitudes[:frames]
    basis = mel_filterbank(config.sample_rate, config.fft_size, config.n_mels, config.fmin, config.fmax)
    mel = magnitudes @ basis.T
    log_mel = np.log(np.maximum(mel, config.magnitude_floor))
    logging.debug(f"Extracted {log_mel.shape[0]} x {log_mel.shape[1]} mel frames from {len(audio)} samples")
    return MelSpectrogram(log_mel, hop_samples=config.hop_size, frame_samples=config.window_size)


def _frames(mel: Union[MelSpectrogram, np.ndarray]) -> np.ndarray:
    return mel.frames if isinstance(mel, MelSpectrogram) else np.asarray(mel, dtype=np.float64)


def fit_stats(corpus: Iterable[Union[MelSpectrogram, np.ndarray]]) -> FeatureStats:
    """Per-bin mean/std pooled over every frame of the corpus"""
    blocks = [_frames(mel) for mel in corpus]
    if not blocks:
        raise ConfigurationError("cannot fit feature statistics on an empty corpus")
    stacked = np.concatenate(blocks, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return FeatureStats(mean=mean, std=std)


def normalize(mel: Union[MelSpectrogram, np.ndarray], stats: FeatureStats):
    frames = _frames(mel)
    if frames.shape[-1] != stats.mean.size:
        raise ShapeError("normalize", "n_mels", stats.mean.size, frames.shape[-1])
    out = (frames - stats.mean) / stats.std
    if isinstance(mel, MelSpectrogram):
        return MelSpectrogram(out, hop_samples=mel.hop_samples, frame_samples=mel.frame_samples)
    return out


def denormalize(mel: Union[MelSpectrogram, np.ndarray], stats: FeatureStats):
    frames = _frames(mel)
    if frames.shape[-1] != stats.mean.size:
        raise ShapeError("denormalize", "n_mels", stats.mean.size, frames.shape[-1])
    out = frames * stats.std + stats.mean
    if isinstance(mel, MelSpectrogram):
        return MelSpectrogram(out, hop_samples=mel.hop_samples, frame_samples=mel.frame_samples)
    return out


def wav_read(path: Union[str, Path]) -> AudioBuffer:
    """Read a 16-bit PCM mono WAV"""
    path = Path(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise FormatError(f"{path}: malformed or unreadable audio header ({e})")
    if info.format != "WAV":
        raise FormatError(f"{path}: container {info.format} is not WAV")
    if info.channels != 1:
        raise FormatError(f"{path}: {info.channels} channels, only mono is supported")
    if info.subtype != "PCM_16":
        raise FormatError(f"{path}: unsupported sample format {info.subtype} (16-bit PCM required)")
    data, sample_rate = sf.read(str(path), dtype="int16", always_2d=False)
    return AudioBuffer(data.astype(np.float64) / PCM_SCALE, sample_rate=sample_rate)


def wav_write(path: Union[str, Path], audio: AudioBuffer):
    """Write a 16-bit PCM mono WAV; samples are clipped to the PCM range"""
    pcm = np.clip(np.round(audio.samples * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)
    sf.write(str(path), pcm, audio.sample_rate, subtype="PCM_16", format="WAV")


def list_wavs(paths: Iterable[Union[str, Path]] = (), directory: Union[str, Path, None] = None) -> List[Path]:
    """Explicit WAV paths followed by every *.wav under `directory`, sorted"""
    found = [Path(p) for p in paths]
    if directory:
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"WAV directory not found: {directory}")
        found.extend(sorted(directory.rglob("*.wav")))
    return found


def write_mel(path: Union[str, Path], mel: MelSpectrogram, config: FeatureConfig):
    """Persist raw (unnormalized) log-mel frames with the feature settings that produced them"""
    metadata = {'kind': MEL_KIND, 'features': config.to_dict(), 'frames': mel.num_frames}
    write_checkpoint(path, Checkpoint(metadata=metadata, tensors={'mel': mel.frames.astype(np.float32)}))


def read_mel(path: Union[str, Path]) -> Tuple[MelSpectrogram, FeatureConfig]:
    checkpoint = read_checkpoint(path)
    if checkpoint.metadata.get('kind') != MEL_KIND or 'mel' not in checkpoint.tensors:
        raise FormatError(f"{path}: not a mel feature file (kind '{checkpoint.metadata.get('kind')}')")
    config = FeatureConfig.from_dict(checkpoint.metadata['features'])
    frames = checkpoint.tensors['mel']
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise FormatError(f"{path}: mel feature file holds no frames")
    return MelSpectrogram(frames, hop_samples=config.hop_size, frame_samples=config.window_size), config

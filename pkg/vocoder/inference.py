"""
Inference fast path: 32-bit folded generator plus PQMF synthesis
"""

import logging
from concurrent.futures import Executor
from pathlib import Path
from typing import Optional, Union

import numpy as np

from core.checkpoint import read_checkpoint
from core.errors import CheckpointError, ConfigurationError, ShapeError
from core.models import FeatureConfig, GeneratorSpec, RunConfig, Variant
from vocoder.features import AudioBuffer, FeatureStats, MelSpectrogram, mel_spectrogram, normalize
from vocoder.generator import Generator, build_generator
from vocoder.pqmf import PqmfBank, design_prototype, synthesize

DEFAULT_CHUNK_FRAMES = 64


class Vocoder:
    """Read-only synthesis model shared by every caller"""

    def __init__(self, generator: Generator, features: FeatureConfig, stats: Optional[FeatureStats] = None,
                 bank: Optional[PqmfBank] = None):
        if generator.spec.variant == Variant.MB and bank is None:
            raise ConfigurationError("multi-band generator needs a PQMF bank")
        self.generator = generator
        self.spec: GeneratorSpec = generator.spec
        self.features = features
        self.stats = stats
        self.bank = bank

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path]) -> "Vocoder":
        """Load an inference export or a training checkpoint (folded on load)"""
        checkpoint = read_checkpoint(path)
        meta = checkpoint.metadata
        try:
            config = RunConfig.from_dict(meta['config'])
        except (KeyError, ValueError, TypeError) as e:
            raise CheckpointError(f"{path}: checkpoint metadata has no usable run configuration ({e})")
        generator = build_generator(config.generator)
        weights = checkpoint.group('generator')
        if meta.get('kind') == 'training':
            generator.load_state_dict(weights)
            generator = generator.fold_for_inference(np.float32)
        else:
            generator = generator.fold_for_inference(np.float32)
            generator.load_state_dict(weights)
        stats = checkpoint.group('stats')
        feature_stats = None
        if 'mean' in stats and 'std' in stats:
            feature_stats = FeatureStats(mean=stats['mean'].astype(np.float64), std=stats['std'].astype(np.float64))
        bank = PqmfBank.from_metadata(meta['pqmf']) if meta.get('pqmf') else None
        logging.info(f"Loaded {config.variant.value} vocoder from {path} (step {meta.get('step')})")
        return cls(generator, config.features, feature_stats, bank)

    @classmethod
    def from_spec(cls, spec: GeneratorSpec, seed: int = 0, features: Optional[FeatureConfig] = None) -> "Vocoder":
        """Freshly initialised generator, for benchmarking and complexity checks"""
        bank = design_prototype(spec.out_channels) if spec.variant == Variant.MB else None
        generator = build_generator(spec, seed=seed).fold_for_inference(np.float32)
        return cls(generator, features or FeatureConfig(n_mels=spec.n_mels), None, bank)

    def prepare(self, mel: MelSpectrogram, normalized: bool = False) -> np.ndarray:
        """Check a mel file against this model's features and return normalized frames"""
        if mel.num_frames == 0:
            raise ShapeError("synth", "frames", "> 0", 0)
        if mel.n_mels != self.spec.n_mels:
            raise ConfigurationError(f"mel has {mel.n_mels} bins, model expects {self.spec.n_mels}")
        if mel.hop_samples != self.features.hop_size or mel.frame_samples != self.features.window_size:
            raise ConfigurationError(
                f"mel framing hop={mel.hop_samples}/window={mel.frame_samples} does not match model features "
                f"hop={self.features.hop_size}/window={self.features.window_size}"
            )
        if normalized or self.stats is None:
            return mel.frames
        return normalize(mel, self.stats).frames

    def check_features(self, config: FeatureConfig):
        """Reject mel files extracted with settings other than the model's"""
        ours, theirs = self.features.to_dict(), config.to_dict()
        differing = sorted(key for key in ours if ours[key] != theirs.get(key))
        if differing:
            detail = ", ".join(f"{key}={theirs.get(key)} (model {ours[key]})" for key in differing)
            raise ConfigurationError(f"mel feature settings do not match the checkpoint: {detail}")

    def features_of(self, audio: AudioBuffer) -> MelSpectrogram:
        return mel_spectrogram(audio, self.features)

    def synthesize(self, mel_frames: np.ndarray, chunk_frames: Optional[int] = DEFAULT_CHUNK_FRAMES,
                   executor: Optional[Executor] = None) -> np.ndarray:
        """Normalized [T x n_mels] frames -> waveform of exactly hop * T samples"""
        mel_frames = np.asarray(mel_frames)
        if mel_frames.ndim != 2 or mel_frames.shape[0] == 0:
            raise ShapeError("synthesize", "mel frames", "[T > 0 x n_mels]", mel_frames.shape)
        if chunk_frames:
            output = self.generator.generate_streaming(mel_frames, chunk_frames=chunk_frames, executor=executor)
        else:
            output = self.generator.generate(mel_frames)
        if self.bank is None:
            return output[0].astype(np.float64)
        return synthesize(self.bank, output, trim_delay=True)

    def copy_synthesis(self, audio: AudioBuffer) -> AudioBuffer:
        mel = self.prepare(self.features_of(audio))
        return AudioBuffer(self.synthesize(mel), sample_rate=self.features.sample_rate)

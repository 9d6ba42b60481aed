"""
MelGAN-family generator: mel frames -> sub-band or full-band waveform
"""

import logging
from concurrent.futures import Executor
from typing import List, Optional, Union

import numpy as np

from core import functional as F
from core.errors import NumericalError, ShapeError
from core.models import GeneratorSpec
from core.module import Module
from core.tensor import Tensor, no_grad
from vocoder.accounting import frame_context
from vocoder.layers import Conv1d, ConvTranspose1d, ResStack


class Generator(Module):
    """entry conv -> [transposed conv, ResStack, leaky_relu] per stage -> exit conv -> tanh"""

    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        pad = spec.padding_mode
        self.entry = Conv1d(spec.n_mels, spec.entry_channels, spec.entry_kernel, rng, padding_mode=pad)
        self.upsamples: List[ConvTranspose1d] = []
        self.stacks: List[ResStack] = []
        channels = spec.entry_channels
        for factor, out_channels in zip(spec.upsample_factors, spec.stage_channels):
            self.upsamples.append(ConvTranspose1d(channels, out_channels, factor, rng))
            self.stacks.append(ResStack(out_channels, spec.resstack_dilations, rng, kernel_size=spec.kernel_size,
                                        shortcut=spec.residual_shortcut, padding_mode=pad, slope=spec.slope))
            channels = out_channels
        self.exit = Conv1d(channels, spec.out_channels, spec.exit_kernel, rng, padding_mode=pad)

    def forward(self, mel: Tensor) -> Tensor:
        """(batch, n_mels, T) -> (batch, out_channels, T * prod(upsample_factors))"""
        if mel.shape[-2] != self.spec.n_mels:
            raise ShapeError("generator", "n_mels", self.spec.n_mels, mel.shape[-2])
        x = F.leaky_relu(self.entry(mel), self.spec.slope)
        _check_finite(x, 0)
        for index, (upsample, stack) in enumerate(zip(self.upsamples, self.stacks), start=1):
            x = upsample(x)
            x = stack(x)
            x = F.leaky_relu(x, self.spec.slope)
            _check_finite(x, index)
            logging.debug(f"generator stage {index}: {x.shape}")
        out = F.tanh(self.exit(x))
        _check_finite(out, len(self.stacks) + 1)
        return out

    def generate(self, mel_frames: np.ndarray) -> np.ndarray:
        """Inference on [T x n_mels] frames -> [out_channels x T * prod(upsample_factors)]"""
        mel_frames = np.asarray(mel_frames)
        if mel_frames.ndim != 2:
            raise ShapeError("generator", "mel rank", 2, mel_frames.ndim)
        if mel_frames.shape[0] == 0:
            raise ShapeError("generator", "frames", "> 0", 0)
        dtype = self.entry.weight.v.dtype
        with no_grad():
            out = self.forward(Tensor(np.ascontiguousarray(mel_frames.T, dtype=dtype)))
        return out.data

    def generate_chunk(self, mel_frames: np.ndarray, start: int, stop: int, overlap: int) -> np.ndarray:
        """Output samples of frames [start, stop), computed with `overlap` context frames on each side"""
        low, high = max(0, start - overlap), min(len(mel_frames), stop + overlap)
        per_frame = self.spec.frame_upsampling
        audio = self.generate(mel_frames[low:high])
        return audio[:, (start - low) * per_frame : (stop - low) * per_frame]

    def generate_streaming(self, mel_frames: np.ndarray, chunk_frames: int = 32, overlap: Optional[int] = None,
                           executor: Optional[Executor] = None) -> np.ndarray:
        """Chunked inference; chunks run on `executor` when one is given"""
        if chunk_frames < 1:
            raise ShapeError("generator", "chunk_frames", ">= 1", chunk_frames)
        overlap = frame_context(self.spec) if overlap is None else overlap
        total = len(mel_frames)
        bounds = [(start, min(start + chunk_frames, total)) for start in range(0, total, chunk_frames)]
        if executor is None:
            pieces = [self.generate_chunk(mel_frames, start, stop, overlap) for start, stop in bounds]
        else:
            pieces = list(executor.map(lambda b: self.generate_chunk(mel_frames, b[0], b[1], overlap), bounds))
        return np.concatenate(pieces, axis=1)


def _check_finite(x: Tensor, layer: int):
    if not np.all(np.isfinite(x.data)):
        raise NumericalError(f"non-finite activations after generator layer {layer}", layer=layer)


def build_generator(spec: GeneratorSpec, seed: int = 0) -> Generator:
    return Generator(spec, np.random.default_rng(seed))


def generator_forward(generator: Generator, mel: Union[np.ndarray, Tensor]) -> Tensor:
    """[T x n_mels] mel -> waveform tensor [out_channels x samples]"""
    data = mel.data if isinstance(mel, Tensor) else np.asarray(mel, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError("generator", "mel rank", 2, data.ndim)
    return generator(Tensor(np.ascontiguousarray(data.T)))

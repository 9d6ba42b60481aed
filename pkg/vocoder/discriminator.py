"""
Multi-scale waveform discriminator
"""

from typing import List, Tuple

import numpy as np

from core import functional as F
from core.errors import ShapeError
from core.models import DiscriminatorSpec
from core.module import Module
from core.tensor import Tensor
from vocoder.layers import Conv1d

ScaleOutput = Tuple[Tensor, List[Tensor]]


class DiscriminatorBlock(Module):
    """Strided grouped conv stack producing a score map and every intermediate activation"""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        pad = spec.padding_mode
        self.layers = [Conv1d(1, spec.entry_channels, spec.entry_kernel, rng, padding=spec.entry_kernel // 2,
                              padding_mode=pad)]
        channels = spec.entry_channels
        for out_channels, groups in spec.strided:
            self.layers.append(Conv1d(channels, out_channels, spec.strided_kernel, rng, stride=spec.stride,
                                      groups=groups, padding=spec.strided_kernel // 2, padding_mode=pad))
            channels = out_channels
        self.layers.append(Conv1d(channels, spec.post_channels, spec.post_kernel, rng,
                                  padding=spec.post_kernel // 2, padding_mode=pad))
        self.output = Conv1d(spec.post_channels, 1, spec.out_kernel, rng, padding=spec.out_kernel // 2,
                             padding_mode=pad)
        self.slope = spec.slope

    def forward(self, audio: Tensor) -> ScaleOutput:
        features = []
        x = audio
        for layer in self.layers:
            x = F.leaky_relu(layer(x), self.slope)
            features.append(x)
        score = self.output(x)
        features.append(score)
        return score, features


class MultiScaleDiscriminator(Module):
    """Identical blocks on the waveform and its successive 2x average-pooled versions"""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.blocks = [DiscriminatorBlock(spec, rng) for _ in range(spec.num_scales)]

    def forward(self, audio: Tensor) -> List[ScaleOutput]:
        """(batch, 1, N) or (1, N) waveform -> per scale (score map, feature maps)"""
        if audio.ndim == 1:
            audio = audio.reshape(1, audio.shape[0])
        if audio.shape[-2] != 1:
            raise ShapeError("discriminator", "channels", 1, audio.shape[-2])
        outputs = []
        x = audio
        for scale, block in enumerate(self.blocks):
            if scale > 0:
                x = F.avg_pool1d(x, kernel=4, stride=2, padding=1, count_include_pad=False)
            if x.shape[-1] < self.spec.minimum_length:
                raise ShapeError("discriminator", f"scale {scale} samples", f">= {self.spec.minimum_length}",
                                 x.shape[-1])
            outputs.append(block(x))
        return outputs


def build_discriminator(spec: DiscriminatorSpec, seed: int = 1) -> MultiScaleDiscriminator:
    return MultiScaleDiscriminator(spec, np.random.default_rng(seed))


def discriminator_forward(discriminator: MultiScaleDiscriminator, audio) -> List[ScaleOutput]:
    if not isinstance(audio, Tensor):
        audio = Tensor(np.asarray(audio, dtype=np.float64))
    return discriminator(audio)

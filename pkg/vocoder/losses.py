"""
Training objectives: least-squares adversarial terms, feature matching and multi-resolution STFT losses
"""

from typing import List, Sequence, Tuple, Union

import numpy as np

from core import functional as F
from core.errors import ConfigurationError, NumericalError, ShapeError
from core.models import LossConfig, LossMode, StftResolution
from core.tensor import Tensor, record

Signal = Union[Tensor, np.ndarray]
Scalar = Union[Tensor, float]

RESOLUTION_COUNT = 3


def _as_tensor(x: Signal) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _frobenius(x: Tensor) -> Tensor:
    """Norm over the last two axes; the subgradient at a zero matrix is zero"""
    norm = np.sqrt(np.sum(x.data * x.data, axis=(-2, -1)))
    live = norm > 0

    def adjoint(g):
        scale = np.where(live, g / np.where(live, norm, 1.0), 0.0)
        return (scale[..., None, None] * x.data,)

    return record("frobenius", norm, (x,), adjoint)


def _total(terms: Sequence[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def stft_losses(target: Signal, estimate: Signal, resolution: StftResolution) -> Tuple[Tensor, Tensor]:
    """(spectral convergence, log magnitude) from a single STFT of each signal"""
    target, estimate = _as_tensor(target), _as_tensor(estimate)
    if target.shape != estimate.shape:
        raise ShapeError("stft_loss", "signal", target.shape, estimate.shape)
    args = (resolution.fft_size, resolution.window_size, resolution.hop_size)
    reference = F.stft_magnitude(target, *args)
    generated = F.stft_magnitude(estimate, *args)
    denominator = _frobenius(reference)
    if np.any(denominator.data == 0):
        raise NumericalError("spectral convergence undefined for a silent reference",
                             diagnostics={"resolution": resolution.to_list()})
    convergence = (_frobenius(reference - generated) / denominator).mean()
    magnitude = (reference.log() - generated.log()).abs().mean()
    return convergence, magnitude


def spectral_convergence(target: Signal, estimate: Signal, resolution: StftResolution) -> Tensor:
    return stft_losses(target, estimate, resolution)[0]


def log_mag_loss(target: Signal, estimate: Signal, resolution: StftResolution) -> Tensor:
    return stft_losses(target, estimate, resolution)[1]


def multi_res_stft_loss(target: Signal, estimate: Signal, resolutions: Sequence[StftResolution]) -> Tensor:
    """Average of (spectral convergence + log magnitude) over the resolutions"""
    if len(resolutions) != RESOLUTION_COUNT:
        raise ConfigurationError(f"expected {RESOLUTION_COUNT} STFT resolutions, got {len(resolutions)}")
    terms = []
    for resolution in resolutions:
        convergence, magnitude = stft_losses(target, estimate, resolution)
        terms.append(convergence + magnitude)
    return _total(terms) * (1.0 / len(terms))


def combined_mb_stft_loss(full_target: Signal, full_estimate: Signal, sub_targets: Signal, sub_estimates: Signal,
                          config: LossConfig) -> Tensor:
    """Half the sum of the full-band loss and the band-averaged sub-band loss"""
    sub_targets, sub_estimates = _as_tensor(sub_targets), _as_tensor(sub_estimates)
    if sub_targets.shape[-2:-1] != sub_estimates.shape[-2:-1]:
        raise ShapeError("combined_mb_stft_loss", "bands", sub_targets.shape[-2], sub_estimates.shape[-2])
    if sub_targets.shape != sub_estimates.shape:
        raise ShapeError("combined_mb_stft_loss", "sub-band signal", sub_targets.shape, sub_estimates.shape)
    length = sub_targets.shape[-1]
    full = multi_res_stft_loss(full_target, full_estimate, config.full_band_resolutions)
    sub = multi_res_stft_loss(sub_targets.reshape(-1, length), sub_estimates.reshape(-1, length),
                              config.sub_band_resolutions)
    return (full + sub) * 0.5


def scores(outputs: Sequence[Tuple[Tensor, List[Tensor]]]) -> List[Tensor]:
    return [score for score, _ in outputs]


def feature_maps(outputs: Sequence[Tuple[Tensor, List[Tensor]]]) -> List[List[Tensor]]:
    """Every layer output of every scale, score map included"""
    return [list(features) for _, features in outputs]


def _check_scales(op: str, real: Sequence, fake: Sequence):
    if len(real) != len(fake):
        raise ShapeError(op, "scales", len(real), len(fake))
    if not real:
        raise ShapeError(op, "scales", ">= 1", 0)


def d_loss(real_scores: Sequence[Tensor], fake_scores: Sequence[Tensor]) -> Tensor:
    _check_scales("d_loss", real_scores, fake_scores)
    return _total([(real - 1.0).square().mean() + fake.square().mean()
                   for real, fake in zip(real_scores, fake_scores)])


def g_adv_loss(fake_scores: Sequence[Tensor]) -> Tensor:
    if not fake_scores:
        raise ShapeError("g_adv_loss", "scales", ">= 1", 0)
    return _total([(fake - 1.0).square().mean() for fake in fake_scores])


def feature_matching_loss(real_features: Sequence, fake_features: Sequence) -> Tensor:
    """Sum of mean absolute differences per layer; accepts per-scale lists or one flat list"""
    _check_scales("feature_matching_loss", real_features, fake_features)
    terms = []
    for real, fake in zip(real_features, fake_features):
        if isinstance(real, Tensor):
            terms.append((fake - real.detach()).abs().mean())
            continue
        if len(real) != len(fake):
            raise ShapeError("feature_matching_loss", "layers", len(real), len(fake))
        terms.extend((f - r.detach()).abs().mean() for r, f in zip(real, fake))
    return _total(terms)


def g_total_loss(mode: LossMode, adversarial: Scalar, auxiliary: Scalar, lambda_weight: float) -> Scalar:
    if mode == LossMode.FEATURE_MATCHING:
        return adversarial + auxiliary * lambda_weight
    return adversarial * lambda_weight + auxiliary

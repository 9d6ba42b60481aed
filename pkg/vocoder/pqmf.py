"""
Pseudo-QMF filter bank: prototype design, analysis and synthesis
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import upfirdn
from scipy.signal.windows import kaiser

from core import functional as F
from core.errors import ConfigurationError, ShapeError
from core.tensor import Tensor

MIN_RECONSTRUCTION_SNR_DB = 36.0


@dataclass(frozen=True, eq=False)
class PqmfBank:
    """Cosine-modulated filter bank derived from one linear-phase prototype"""
    num_bands: int
    taps: int
    kaiser_beta: float
    cutoff_ratio: float
    prototype: np.ndarray
    analysis_filters: np.ndarray
    synthesis_filters: np.ndarray
    reconstruction_snr_db: float = float("nan")

    @property
    def delay(self) -> int:
        return group_delay(self)

    def to_metadata(self) -> Dict[str, Any]:
        return {
            'num_bands': self.num_bands,
            'taps': self.taps,
            'kaiser_beta': self.kaiser_beta,
            'cutoff_ratio': self.cutoff_ratio,
            'prototype': [float(v) for v in self.prototype],
            'reconstruction_snr_db': self.reconstruction_snr_db,
        }

    @classmethod
    def from_metadata(cls, data: Dict[str, Any]) -> "PqmfBank":
        prototype = np.asarray(data['prototype'], dtype=np.float64)
        if prototype.size != data['taps']:
            raise ConfigurationError(f"stored prototype has {prototype.size} taps, metadata says {data['taps']}")
        analysis, synthesis = modulate(prototype, data['num_bands'])
        return cls(
            num_bands=data['num_bands'],
            taps=data['taps'],
            kaiser_beta=data['kaiser_beta'],
            cutoff_ratio=data['cutoff_ratio'],
            prototype=prototype,
            analysis_filters=analysis,
            synthesis_filters=synthesis,
            reconstruction_snr_db=data.get('reconstruction_snr_db', float("nan")),
        )


def prototype_filter(taps: int, cutoff_ratio: float, kaiser_beta: float) -> np.ndarray:
    """Kaiser-windowed ideal lowpass with cutoff pi * cutoff_ratio, centred at (taps - 1) / 2"""
    n = np.arange(taps) - (taps - 1) / 2.0
    ideal = np.sin(np.pi * cutoff_ratio * n) / (np.pi * n)
    h = ideal * kaiser(taps, kaiser_beta, sym=True)
    # exact linear phase
    return 0.5 * (h + h[::-1])


def modulate(prototype: np.ndarray, num_bands: int):
    """Analysis and synthesis filters [num_bands x taps] by cosine modulation of the prototype"""
    taps = prototype.size
    k = np.arange(num_bands)[:, None]
    n = np.arange(taps)[None, :] - (taps - 1) / 2.0
    carrier = (2 * k + 1) * np.pi / (2 * num_bands) * n
    phase = (-1.0) ** k * np.pi / 4
    analysis = 2.0 * prototype * np.cos(carrier + phase)
    synthesis = 2.0 * prototype * np.cos(carrier - phase)
    return analysis, synthesis


def build_bank(num_bands: int, taps: int, kaiser_beta: float, cutoff_ratio: float) -> PqmfBank:
    prototype = prototype_filter(taps, cutoff_ratio, kaiser_beta)
    analysis, synthesis = modulate(prototype, num_bands)
    return PqmfBank(
        num_bands=num_bands,
        taps=taps,
        kaiser_beta=kaiser_beta,
        cutoff_ratio=cutoff_ratio,
        prototype=prototype,
        analysis_filters=analysis,
        synthesis_filters=synthesis,
    )


def group_delay(bank: PqmfBank) -> int:
    """Samples of delay through analysis followed by synthesis"""
    return bank.taps - 1


def impulse_error(bank: PqmfBank) -> float:
    """Squared reconstruction error of unit impulses at every decimation phase"""
    length = 4 * bank.taps + bank.num_bands * 8
    error = 0.0
    for phase in range(bank.num_bands):
        x = np.zeros(length)
        x[2 * bank.taps + phase] = 1.0
        y = synthesize(bank, analyze(bank, x), trim_delay=True)
        error += float(np.sum((y - x) ** 2))
    return error


def reconstruction_snr(bank: PqmfBank, signal: np.ndarray) -> float:
    """Delay-compensated round-trip SNR in dB

    The signal is zero-extended by the group delay before analysis so its last
    samples see the same filter support as the rest.
    """
    signal = np.asarray(signal, dtype=np.float64)
    bands = bank.num_bands
    length = -(-(signal.size + group_delay(bank)) // bands) * bands
    padded = np.concatenate([signal, np.zeros(length - signal.size)])
    restored = synthesize(bank, analyze(bank, padded), trim_delay=True)[: signal.size]
    reference = signal
    noise = np.sum((reference - restored) ** 2)
    if noise == 0:
        return float("inf")
    return float(10.0 * np.log10(np.sum(reference**2) / noise))


def design_prototype(num_bands: int = 4, taps: int = 64, kaiser_beta: float = 9.0) -> PqmfBank:
    """Pick the prototype cutoff minimizing impulse reconstruction error"""
    if num_bands < 2:
        raise ConfigurationError(f"a filter bank needs at least 2 bands, got {num_bands}")
    if taps < 2 or taps % 2:
        raise ConfigurationError(f"prototype taps must be even, got {taps}")

    nominal = 1.0 / (2 * num_bands)

    def objective(cutoff_ratio: float) -> float:
        error = impulse_error(build_bank(num_bands, taps, kaiser_beta, cutoff_ratio))
        logging.debug(f"PQMF cutoff {cutoff_ratio:.6f}: impulse error {error:.3e}")
        return error

    search = minimize_scalar(
        objective, bounds=(0.5 * nominal, 1.5 * nominal), method="bounded", options={"xatol": 1e-7}
    )
    best = float(search.x)
    error = float(search.fun)
    snr = float("inf") if error == 0 else 10.0 * np.log10(num_bands / error)
    if snr < MIN_RECONSTRUCTION_SNR_DB:
        raise ConfigurationError(
            f"PQMF design reached only {snr:.2f} dB impulse reconstruction SNR "
            f"(best cutoff ratio {best:.6f}, beta {kaiser_beta}, taps {taps}, bands {num_bands}); "
            f"need {MIN_RECONSTRUCTION_SNR_DB} dB"
        )

    bank = build_bank(num_bands, taps, kaiser_beta, best)
    bank = replace(bank, reconstruction_snr_db=snr)
    logging.info(f"Designed {num_bands}-band PQMF: {taps} taps, cutoff ratio {best:.6f}, impulse SNR {snr:.2f} dB")
    return bank


def analyze(bank: PqmfBank, full_band: np.ndarray, method: str = "polyphase") -> np.ndarray:
    """Full-band signal -> [num_bands x ceil(N / num_bands)] critically decimated sub-bands"""
    x = np.asarray(full_band, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("pqmf.analyze", "rank", 1, x.ndim)
    if x.size == 0:
        raise ShapeError("pqmf.analyze", "samples", "> 0", 0)
    bands = bank.num_bands
    remainder = x.size % bands
    if remainder:
        logging.warning(f"PQMF analysis: padding {bands - remainder} zero samples to reach a multiple of {bands}")
        x = np.concatenate([x, np.zeros(bands - remainder)])
    frames = x.size // bands

    if method == "polyphase":
        return np.stack([upfirdn(h, x, up=1, down=bands)[:frames] for h in bank.analysis_filters])
    if method == "direct":
        return np.stack([np.convolve(x, h)[: x.size][::bands] for h in bank.analysis_filters])
    raise ConfigurationError(f"unknown analysis method '{method}'")


def synthesize(bank: PqmfBank, sub_bands: np.ndarray, trim_delay: bool = False) -> np.ndarray:
    """[num_bands x T] sub-bands -> full-band signal of length num_bands * T

    Without trim_delay the result is the causal filter output (delayed by
    group_delay samples); with it the delay is removed.
    """
    if isinstance(sub_bands, (list, tuple)):
        lengths = {len(band) for band in sub_bands}
        if len(lengths) > 1:
            raise ShapeError("pqmf.synthesize", "band length", "equal", sorted(lengths))
    sub_bands = np.asarray(sub_bands, dtype=np.float64)
    if sub_bands.ndim != 2 or sub_bands.shape[0] != bank.num_bands:
        raise ShapeError("pqmf.synthesize", "bands", bank.num_bands, sub_bands.shape[0] if sub_bands.ndim else None)
    bands, frames = sub_bands.shape
    delay = group_delay(bank)

    if trim_delay:
        extra = -(-delay // bands)
        padded = np.concatenate([sub_bands, np.zeros((bands, extra))], axis=1)
        return synthesize(bank, padded)[delay : delay + bands * frames]

    out = np.zeros(bands * frames)
    for band, g in zip(sub_bands, bank.synthesis_filters):
        out += upfirdn(g, band, up=bands)[: bands * frames]
    return bands * out


def synthesize_tensor(bank: PqmfBank, sub_bands: Tensor, trim_delay: bool = True) -> Tensor:
    """Differentiable synthesis of (batch, bands, T) or (bands, T) sub-bands -> (batch, 1, bands * T)"""
    if sub_bands.shape[-2] != bank.num_bands:
        raise ShapeError("pqmf.synthesize", "bands", bank.num_bands, sub_bands.shape[-2])
    delay = group_delay(bank)
    stuffed = F.upsample_zero(sub_bands, bank.num_bands) * float(bank.num_bands)
    if trim_delay:
        stuffed = F.pad1d(stuffed, 0, delay, "zero")
    else:
        stuffed = F.pad1d(stuffed, delay, 0, "zero")
    kernel = np.ascontiguousarray(bank.synthesis_filters[:, ::-1][None], dtype=sub_bands.dtype)
    return F.conv1d(stuffed, Tensor(kernel))

"""
Verification suite for a designed PQMF bank
"""

import logging
from datetime import datetime
from typing import List, Optional

import numpy as np
from scipy.signal import chirp, lfilter

from core.base_check import BaseCheck
from core.models import SAMPLE_RATE, CheckResult, VerificationReport
from vocoder.pqmf import (
    MIN_RECONSTRUCTION_SNR_DB,
    PqmfBank,
    analyze,
    group_delay,
    modulate,
    reconstruction_snr,
    synthesize,
)

STOPBAND_ATTENUATION_DB = 60.0
POWER_TOLERANCE_DB = 1.0


def white_noise(num_samples: int = SAMPLE_RATE, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-0.5, 0.5, num_samples)


def linear_chirp(num_samples: int = SAMPLE_RATE, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(num_samples) / sample_rate
    return 0.5 * chirp(t, f0=20.0, t1=t[-1], f1=0.49 * sample_rate, method="linear")


def voiced_speech_surrogate(num_samples: int = SAMPLE_RATE, sample_rate: int = SAMPLE_RATE,
                            seed: int = 0) -> np.ndarray:
    """Jittered glottal pulse train through three formant resonators with a syllable envelope"""
    rng = np.random.default_rng(seed)
    excitation = np.zeros(num_samples)
    position = 0.0
    while position < num_samples:
        excitation[int(position)] = 1.0
        position += sample_rate / (120.0 * (1.0 + 0.03 * rng.standard_normal()))
    excitation += 0.01 * rng.standard_normal(num_samples)

    signal = excitation
    for formant, bandwidth in ((700.0, 110.0), (1220.0, 120.0), (2600.0, 160.0)):
        radius = np.exp(-np.pi * bandwidth / sample_rate)
        theta = 2 * np.pi * formant / sample_rate
        signal = lfilter([1.0 - radius], [1.0, -2 * radius * np.cos(theta), radius**2], signal)

    t = np.arange(num_samples) / sample_rate
    envelope = 0.5 * (1.0 - np.cos(2 * np.pi * 3.0 * t))
    signal = signal * envelope
    return 0.5 * signal / np.max(np.abs(signal))


class PrototypeSymmetryCheck(BaseCheck):
    check_id = "P1"
    title = "Prototype is linear phase"

    def run(self, bank: PqmfBank) -> CheckResult:
        deviation = float(np.max(np.abs(bank.prototype - bank.prototype[::-1])))
        return self._check_at_most("max |h(n) - h(taps-1-n)|", deviation, 1e-12)


class ModulationIdentityCheck(BaseCheck):
    check_id = "P2"
    title = "Filters re-derive from the stored prototype"

    def run(self, bank: PqmfBank) -> CheckResult:
        analysis, synthesis = modulate(bank.prototype, bank.num_bands)
        deviation = float(max(np.max(np.abs(analysis - bank.analysis_filters)),
                              np.max(np.abs(synthesis - bank.synthesis_filters))))
        return self._check_at_most("max modulation deviation", deviation, 1e-12)


class ImpulseRoundTripCheck(BaseCheck):
    check_id = "P3"
    title = "Impulse round trip SNR and group delay"

    def run(self, bank: PqmfBank) -> CheckResult:
        length = 8 * bank.taps
        origin = 2 * bank.taps
        x = np.zeros(length)
        x[origin] = 1.0
        causal = synthesize(bank, analyze(bank, x))
        measured_delay = int(np.argmax(np.abs(causal))) - origin
        snr = reconstruction_snr(bank, x)
        expected_delay = group_delay(bank)
        if measured_delay != expected_delay:
            return self._create_fail_result(
                f"impulse response peaks {measured_delay} samples late",
                expected=f"delay {expected_delay}", actual=f"delay {measured_delay}", value=float(measured_delay))
        result = self._check_at_least("impulse SNR", snr, MIN_RECONSTRUCTION_SNR_DB, " dB")
        result.message += f", delay {measured_delay} samples"
        return result


class SignalRoundTripCheck(BaseCheck):
    """Delay-compensated round trip of a test signal"""

    def __init__(self, check_id: str, name: str, signal: np.ndarray):
        self.check_id = check_id
        self.title = f"{name} round trip SNR"
        self.name = name
        self.signal = signal

    def run(self, bank: PqmfBank) -> CheckResult:
        return self._check_at_least(f"{self.name} SNR", reconstruction_snr(bank, self.signal),
                                    MIN_RECONSTRUCTION_SNR_DB, " dB")


class StopbandAttenuationCheck(BaseCheck):
    check_id = "P7"
    title = "Attenuation beyond the neighbouring bands"

    def run(self, bank: PqmfBank) -> CheckResult:
        fft_size = 8192
        omega = np.linspace(0.0, np.pi, fft_size // 2 + 1)
        band_width = np.pi / bank.num_bands
        worst = -np.inf
        for k, h in enumerate(bank.analysis_filters):
            response = np.abs(np.fft.rfft(h, fft_size))
            stop = (omega < (k - 1) * band_width) | (omega > (k + 2) * band_width)
            if not stop.any():
                continue
            level = 20 * np.log10(np.max(response[stop]) / np.max(response))
            worst = max(worst, level)
        attenuation = float(-worst)
        return self._check_at_least("worst stopband attenuation", attenuation, STOPBAND_ATTENUATION_DB, " dB")


class PolyphaseEquivalenceCheck(BaseCheck):
    check_id = "P8"
    title = "Polyphase analysis equals direct convolution"

    def run(self, bank: PqmfBank) -> CheckResult:
        x = np.random.default_rng(1).standard_normal(bank.num_bands * 1024)
        deviation = float(np.max(np.abs(analyze(bank, x, "polyphase") - analyze(bank, x, "direct"))))
        return self._check_at_most("max polyphase deviation", deviation, 1e-10)


class LinearityCheck(BaseCheck):
    check_id = "P9"
    title = "Analysis is linear"

    def run(self, bank: PqmfBank) -> CheckResult:
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((2, bank.num_bands * 512))
        a, b = 0.7, -1.3
        deviation = float(np.max(np.abs(analyze(bank, a * x + b * y) - (a * analyze(bank, x) + b * analyze(bank, y)))))
        return self._check_at_most("max superposition deviation", deviation, 1e-10)


class PowerPreservationCheck(BaseCheck):
    check_id = "P10"
    title = "Sub-band power matches full-band power"

    def run(self, bank: PqmfBank) -> CheckResult:
        x = white_noise(seed=3)
        sub_power = float(np.sum(np.mean(analyze(bank, x) ** 2, axis=1)))
        full_power = float(np.mean(x**2))
        gap = abs(10 * np.log10(sub_power / full_power))
        expected = f"within {POWER_TOLERANCE_DB:g} dB"
        actual = f"{gap:.3f} dB"
        if gap <= POWER_TOLERANCE_DB:
            return self._create_pass_result(f"per-sample power differs by {actual}", expected, actual, gap)
        return self._create_fail_result(f"per-sample power differs by {actual}", expected, actual, gap)


def default_checks() -> List[BaseCheck]:
    return [
        PrototypeSymmetryCheck(),
        ModulationIdentityCheck(),
        ImpulseRoundTripCheck(),
        SignalRoundTripCheck("P4", "White noise", white_noise()),
        SignalRoundTripCheck("P5", "Linear chirp", linear_chirp()),
        SignalRoundTripCheck("P6", "Voiced speech", voiced_speech_surrogate()),
        StopbandAttenuationCheck(),
        PolyphaseEquivalenceCheck(),
        LinearityCheck(),
        PowerPreservationCheck(),
    ]


class PqmfVerifier:
    """Run every check against one bank"""

    def __init__(self, checks: Optional[List[BaseCheck]] = None):
        self.checks = checks if checks is not None else default_checks()

    def verify(self, bank: PqmfBank) -> VerificationReport:
        results = []
        for check in self.checks:
            result = check.evaluate(bank)
            logging.info(f"{result.check_id} {result.title}: {result.status.value} ({result.message})")
            results.append(result)
        subject = {
            'num_bands': bank.num_bands,
            'taps': bank.taps,
            'kaiser_beta': bank.kaiser_beta,
            'cutoff_ratio': bank.cutoff_ratio,
            'group_delay': group_delay(bank),
            'impulse_snr_db': bank.reconstruction_snr_db,
        }
        return VerificationReport(subject=subject, run_time=datetime.now(), results=results)

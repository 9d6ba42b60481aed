"""
Real-time-factor benchmark for the inference path
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from core.errors import ConfigurationError
from core.models import SAMPLE_RATE, BenchReport
from vocoder.inference import Vocoder


def bench_mel(seconds: float, n_mels: int, seed: int = 0, hop_size: int = 200) -> np.ndarray:
    """Seeded standard-normal [T x n_mels] frames covering `seconds` of audio"""
    frames = max(1, int(round(seconds * SAMPLE_RATE / hop_size)))
    return np.random.default_rng(seed).standard_normal((frames, n_mels))


def run_benchmark(vocoder: Vocoder, seconds: float = 1.0, threads: int = 1, warmup: int = 1, iterations: int = 3,
                  seed: int = 0) -> BenchReport:
    """Time synthesis of `seconds` of audio; BLAS is pinned to one thread per worker"""
    if seconds <= 0:
        raise ConfigurationError(f"benchmark length must be positive, got {seconds} s")
    if threads < 1 or iterations < 1 or warmup < 0:
        raise ConfigurationError("threads and iterations must be >= 1, warmup >= 0")
    mel = bench_mel(seconds, vocoder.spec.n_mels, seed, vocoder.features.hop_size)
    audio_seconds = len(mel) * vocoder.features.hop_size / vocoder.features.sample_rate
    chunk_frames = -(-len(mel) // threads)
    timings = []

    with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=threads) as executor:
        pool = executor if threads > 1 else None
        for iteration in range(warmup + iterations):
            start = time.perf_counter()
            vocoder.synthesize(mel, chunk_frames=chunk_frames, executor=pool)
            elapsed = time.perf_counter() - start
            if iteration >= warmup:
                timings.append(elapsed)
            logging.debug(f"bench iteration {iteration}: {elapsed:.4f} s")

    wall = float(np.mean(timings))
    report = BenchReport(
        variant=vocoder.spec.variant.value,
        rtf=wall / audio_seconds,
        samples_per_second=audio_seconds * vocoder.features.sample_rate / wall,
        thread_count=threads,
        warmup_iterations=warmup,
        measured_iterations=iterations,
        audio_seconds=audio_seconds,
        wall_seconds=wall,
        iteration_seconds=timings,
    )
    logging.info(f"{report.variant}: RTF {report.rtf:.4f} over {audio_seconds:.2f} s with {threads} thread(s)")
    return report

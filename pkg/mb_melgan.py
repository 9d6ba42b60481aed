#!/usr/bin/env python3
"""
MB-MelGAN Vocoder Tool
Train, run, benchmark and verify multi-band MelGAN vocoders on the CPU.
"""

import argparse
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

from core.config_loader import ConfigLoader
from core.errors import ConfigurationError
from core.models import DiscriminatorSpec, FeatureConfig, GeneratorSpec, Scale, Variant
from reports.console_reporter import ConsoleReporter
from reports.csv_reporter import CSVReporter
from reports.json_reporter import JSONReporter
from vocoder.accounting import compare_to_reference, count_params, model_stats
from vocoder.benchmark import run_benchmark
from vocoder.features import AudioBuffer, mel_spectrogram, read_mel, wav_read, wav_write, write_mel
from vocoder.generator import build_generator
from vocoder.inference import Vocoder
from vocoder.pqmf import design_prototype
from vocoder.pqmf_checks import PqmfVerifier
from vocoder.trainer import Trainer, corpus_from_config, export_inference_checkpoint, load_checkpoint


@contextmanager
def atomic_output(path: str):
    """Yield a temporary sibling of `path` that replaces it only if the block succeeds"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.stem}.", suffix=target.suffix)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class VocoderRunner:
    """Dispatches each sub-command to the engine"""

    def __init__(self, output_format: str = 'console', output_file: str = None):
        self.output_format = output_format
        self.output_file = output_file

    def synth(self, checkpoint: str, out: str, mel_path: str = None, wav_path: str = None,
              chunk_frames: int = 64) -> AudioBuffer:
        vocoder = Vocoder.from_checkpoint(checkpoint)
        if mel_path:
            mel, config = read_mel(mel_path)
            vocoder.check_features(config)
        elif wav_path:
            mel = vocoder.features_of(wav_read(wav_path))
        else:
            raise ConfigurationError("synth needs --mel or --wav")
        frames = vocoder.prepare(mel)
        audio = AudioBuffer(vocoder.synthesize(frames, chunk_frames=chunk_frames),
                            sample_rate=vocoder.features.sample_rate)
        with atomic_output(out) as tmp:
            wav_write(tmp, audio)
        logging.info(f"Wrote {len(audio)} samples ({audio.duration:.2f} s) to {out}")
        return audio

    def features(self, wav_path: str, out: str, config_path: str = None):
        config = ConfigLoader(config_path).load().features if config_path else FeatureConfig()
        audio = wav_read(wav_path)
        mel = mel_spectrogram(audio, config)
        write_mel(out, mel, config)
        logging.info(f"Wrote {mel.num_frames} x {mel.n_mels} mel frames to {out}")
        return mel

    def count(self, variant: Variant, scale: Scale = Scale.FULL, verify_build: bool = False):
        spec = GeneratorSpec.preset(variant, scale)
        stats = model_stats(spec, DiscriminatorSpec.preset(variant, scale))
        if verify_build:
            built = count_params(build_generator(spec))
            if built != stats.parameter_count:
                raise ConfigurationError(f"built generator has {built} parameters, accounting says "
                                         f"{stats.parameter_count}")
        comparisons = compare_to_reference(stats) if scale == Scale.FULL else []
        if self.output_format == 'json':
            JSONReporter.generate_stats_report(stats, comparisons, self.output_file)
        else:
            ConsoleReporter.generate_stats_report(stats, comparisons)
        return stats

    def bench(self, checkpoint: str = None, variant: Variant = Variant.MB, seconds: float = 1.0, threads: int = 1,
              warmup: int = 1, iterations: int = 3, seed: int = 0):
        if checkpoint:
            vocoder = Vocoder.from_checkpoint(checkpoint)
        else:
            vocoder = Vocoder.from_spec(GeneratorSpec.preset(variant, Scale.FULL), seed=seed)
        report = run_benchmark(vocoder, seconds=seconds, threads=threads, warmup=warmup, iterations=iterations,
                               seed=seed)
        if self.output_format == 'json':
            JSONReporter.generate_bench_report(report, self.output_file)
        else:
            ConsoleReporter.generate_bench_report(report)
        return report

    def pqmf_verify(self, bands: int = 4, taps: int = 64, kaiser_beta: float = 9.0):
        bank = design_prototype(bands, taps, kaiser_beta)
        report = PqmfVerifier().verify(bank)
        if self.output_format == 'json':
            JSONReporter.generate_report(report, self.output_file)
        elif self.output_format == 'csv':
            output_file = self.output_file or 'pqmf_verification.csv'
            CSVReporter.generate_report(report, output_file)
            print(f"CSV report generated: {output_file}")
        else:
            ConsoleReporter.generate_report(report)
        return report

    def train(self, config_path: str = None, overrides=(), resume: str = None, steps: int = None):
        if resume:
            trainer = Trainer.from_checkpoint(resume)
        else:
            config = ConfigLoader(config_path).load(overrides)
            trainer = Trainer(config, corpus_from_config(config))
        records = trainer.fit(steps)
        logging.info(f"Training stopped at step {trainer.state.step}; outputs in {trainer.config.train.out_dir}")
        return records

    def export(self, checkpoint: str, out: str):
        resume = load_checkpoint(checkpoint)
        generator = build_generator(resume.config.generator)
        generator.load_state_dict(resume.generator)
        export_inference_checkpoint(out, generator, resume.config, resume.bank, resume.stats, resume.state.step)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='MB-MelGAN Vocoder Tool')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default='INFO', help='Logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    def reporting(p):
        p.add_argument('--output-format', choices=['console', 'json'], default='console', help='Output format')
        p.add_argument('--output-file', help='Output file (json format)')

    synth = sub.add_parser('synth', help='Synthesize a WAV from a mel file or by copy-synthesis of a WAV')
    synth.add_argument('--checkpoint', required=True, help='Model or training checkpoint')
    source = synth.add_mutually_exclusive_group(required=True)
    source.add_argument('--mel', help='Mel feature file written by the features command')
    source.add_argument('--wav', help='WAV to re-synthesize from its own features')
    synth.add_argument('--out', required=True, help='Output WAV')
    synth.add_argument('--chunk-frames', type=int, default=64, help='Streaming chunk size in mel frames')

    bench = sub.add_parser('bench', help='Measure the real-time factor of synthesis')
    bench.add_argument('--checkpoint', help='Checkpoint to benchmark (default: fresh full-size generator)')
    bench.add_argument('--variant', choices=[v.value for v in Variant], default='mb')
    bench.add_argument('--seconds', type=float, default=1.0, help='Audio seconds per iteration')
    bench.add_argument('--threads', type=int, default=1, help='Worker threads')
    bench.add_argument('--warmup', type=int, default=1)
    bench.add_argument('--iterations', type=int, default=3)
    bench.add_argument('--seed', type=int, default=0)
    reporting(bench)

    count = sub.add_parser('count', help='Parameter count, GFLOPS and receptive field of a preset')
    count.add_argument('--variant', choices=[v.value for v in Variant], required=True)
    count.add_argument('--scale', choices=[s.value for s in Scale], default='full')
    count.add_argument('--verify-build', action='store_true', help='Also instantiate the generator and count it')
    reporting(count)

    verify = sub.add_parser('pqmf-verify', help='Design the PQMF bank and run the reconstruction suite')
    verify.add_argument('--bands', type=int, default=4)
    verify.add_argument('--taps', type=int, default=64)
    verify.add_argument('--kaiser-beta', type=float, default=9.0)
    verify.add_argument('--output-format', choices=['console', 'json', 'csv'], default='console')
    verify.add_argument('--output-file', help='Output file (json/csv formats)')

    features = sub.add_parser('features', help='Extract a mel feature file from a WAV')
    features.add_argument('--wav', required=True)
    features.add_argument('--out', required=True)
    features.add_argument('--config', help='Training configuration whose feature settings to use')

    train = sub.add_parser('train', help='Train a vocoder')
    train.add_argument('--config', help='YAML training configuration')
    train.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                       help='Override a configuration key (repeatable)')
    train.add_argument('--resume', help='Training checkpoint to resume from')
    train.add_argument('--steps', type=int, help='Stop after this many steps')

    export = sub.add_parser('export', help='Write a 32-bit inference checkpoint')
    export.add_argument('--checkpoint', required=True)
    export.add_argument('--out', required=True)
    return parser


def main(argv=None):
    """Main function"""
    args = _build_parser().parse_args(argv)

    # Setup logging
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )

    runner = VocoderRunner(getattr(args, 'output_format', 'console'), getattr(args, 'output_file', None))
    try:
        if args.command == 'synth':
            runner.synth(args.checkpoint, args.out, mel_path=args.mel, wav_path=args.wav,
                         chunk_frames=args.chunk_frames)
        elif args.command == 'bench':
            runner.bench(args.checkpoint, Variant(args.variant), args.seconds, args.threads, args.warmup,
                         args.iterations, args.seed)
        elif args.command == 'count':
            runner.count(Variant(args.variant), Scale(args.scale), args.verify_build)
        elif args.command == 'pqmf-verify':
            report = runner.pqmf_verify(args.bands, args.taps, args.kaiser_beta)
            if not report.succeeded:
                logging.error(f"PQMF verification failed: {report.failed} check(s)")
                sys.exit(1)
        elif args.command == 'features':
            runner.features(args.wav, args.out, args.config)
        elif args.command == 'train':
            if not args.config and not args.resume and not args.overrides:
                raise ConfigurationError("train needs --config, --set or --resume")
            runner.train(args.config, args.overrides, args.resume, args.steps)
        elif args.command == 'export':
            runner.export(args.checkpoint, args.out)
    except Exception as e:
        logging.error(f"{args.command} failed: {e}")
        sys.exit(1)


if __name__ == '__main__':
    main()

"""
Console Report Generator for the MB-MelGAN vocoder engine
"""

from typing import List

from core.models import BenchReport, CheckResult, ModelStats, VerificationReport


class ConsoleReporter:
    """Generate console output reports"""

    @staticmethod
    def generate_report(report: VerificationReport):
        """Print a verification report"""
        ConsoleReporter._print_header("PQMF Verification Report", report.run_time.strftime('%Y-%m-%d %H:%M:%S'))
        for key, value in report.subject.items():
            print(f"{key}: {ConsoleReporter._format(value)}")
        print()
        ConsoleReporter._print_results(report.results)
        print("Summary:")
        print(f"  Total Checks: {report.total_checks}")
        print(f"  Passed: {report.passed}")
        print(f"  Failed: {report.failed}")
        print(f"  Warnings: {report.warnings}")
        print()
        if report.succeeded:
            print("✓ All checks passed")
        else:
            print(f"⚠ {report.failed} check(s) failed:")
            for result in report.get_failed_results():
                print(f"  - {result.check_id}: {result.message}")
        print()

    @staticmethod
    def generate_stats_report(stats: ModelStats, comparisons: List[CheckResult]):
        """Print model complexity with the verdict against published figures"""
        ConsoleReporter._print_header(f"Model Complexity - {stats.variant.value}")
        print(f"parameters: {stats.parameter_count} ({stats.parameter_count / 1e6:.3f} M)")
        print(f"gflops_per_audio_second: {stats.gflops:.4f}")
        print(f"receptive_field_samples: {stats.receptive_field_samples}")
        print(f"frame_context: {stats.frame_context}")
        if stats.discriminator_parameter_count is not None:
            print(f"discriminator_parameters: {stats.discriminator_parameter_count}")
        print()
        if comparisons:
            ConsoleReporter._print_results(comparisons)

    @staticmethod
    def generate_bench_report(report: BenchReport):
        """Print a benchmark report as key: value lines"""
        ConsoleReporter._print_header(f"Inference Benchmark - {report.variant}")
        print(f"rtf: {report.rtf:.5f}")
        print(f"samples_per_second: {report.samples_per_second:.1f}")
        print(f"thread_count: {report.thread_count}")
        print(f"audio_seconds: {report.audio_seconds:.3f}")
        print(f"wall_seconds: {report.wall_seconds:.4f}")
        print(f"warmup_iterations: {report.warmup_iterations}")
        print(f"measured_iterations: {report.measured_iterations}")
        print()

    @staticmethod
    def _print_header(title: str, run_time: str = None):
        print("=" * 80)
        print(title)
        print("=" * 80)
        if run_time:
            print(f"Run Time: {run_time}")

    @staticmethod
    def _print_results(results: List[CheckResult]):
        print("-" * 80)
        for result in results:
            print(f"[{result.status.value}] {result.check_id}: {result.title}")
            print(f"  {result.message}")
            if result.expected and result.actual:
                print(f"  Expected: {result.expected}")
                print(f"  Actual: {result.actual}")
        print()

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

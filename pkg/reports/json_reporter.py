"""
JSON Report Generator for the MB-MelGAN vocoder engine
"""

import json
import os
import tempfile
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.models import BenchReport, CheckResult, ModelStats, VerificationReport

REPORT_FORMAT_VERSION = "1.0"


class JSONReporter:
    """Generate JSON format reports"""

    @staticmethod
    def generate_report(report: VerificationReport, output_file: Optional[str] = None) -> str:
        """Verification report as JSON, written to `output_file` when given"""
        data = {"metadata": JSONReporter._generate_metadata("pqmf-verify"), **report.to_dict()}
        return JSONReporter._emit(data, output_file)

    @staticmethod
    def generate_stats_report(stats: ModelStats, comparisons: List[CheckResult],
                              output_file: Optional[str] = None) -> str:
        data = {
            "metadata": JSONReporter._generate_metadata("count"),
            "stats": stats.to_dict(),
            "published_comparison": [result.to_dict() for result in comparisons],
        }
        return JSONReporter._emit(data, output_file)

    @staticmethod
    def generate_bench_report(report: BenchReport, output_file: Optional[str] = None) -> str:
        data = {"metadata": JSONReporter._generate_metadata("bench"), "bench": report.to_dict()}
        return JSONReporter._emit(data, output_file)

    @staticmethod
    def _generate_metadata(report_type: str) -> Dict[str, Any]:
        return {
            "report_type": report_type,
            "generated": datetime.now(),
            "report_format_version": REPORT_FORMAT_VERSION,
        }

    @staticmethod
    def _json_serializer(obj):
        """Custom JSON serializer for datetime and enum objects"""
        if isinstance(obj, datetime):
            return obj.isoformat()
        elif isinstance(obj, Enum):
            return obj.value
        raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

    @staticmethod
    def _emit(data: Dict[str, Any], output_file: Optional[str]) -> str:
        text = json.dumps(data, indent=2, ensure_ascii=False, default=JSONReporter._json_serializer)
        if output_file is None:
            print(text)
            return text
        target = Path(output_file)
        fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, 'w', encoding='utf-8') as f:
                f.write(text + "\n")
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return text

"""
CSV writers for the training loss log and verification results
"""

import csv
from pathlib import Path
from typing import Dict, List, Union

from core.models import LossRecord, VerificationReport


class CSVReporter:
    """Generate line-oriented CSV output"""

    @staticmethod
    def prepare_loss_log(output_file: Union[str, Path], resume_step: int = 0):
        """Create the log with its header, or drop rows past `resume_step` from an existing one"""
        path = Path(output_file)
        rows = []
        if resume_step > 0 and path.exists():
            rows = [row for row in CSVReporter.read_loss_log(path) if int(row['step']) <= resume_step]
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=LossRecord.COLUMNS)
            writer.writeheader()
            writer.writerows(rows)

    @staticmethod
    def append_loss_records(output_file: Union[str, Path], records: List[LossRecord]):
        with open(output_file, 'a', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            for record in records:
                writer.writerow(CSVReporter._loss_row(record))

    @staticmethod
    def read_loss_log(output_file: Union[str, Path]) -> List[Dict[str, str]]:
        with open(output_file, newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))

    @staticmethod
    def _loss_row(record: LossRecord) -> List[str]:
        row = [str(record.step), record.phase.value, f'{record.lr_g:.6g}', f'{record.lr_d:.6g}']
        for name in LossRecord.COLUMNS[4:]:
            value = getattr(record, name)
            row.append('' if value is None else f'{value:.8g}')
        return row

    @staticmethod
    def generate_report(report: VerificationReport, output_file: str):
        """Write verification results, one check per row"""
        with open(output_file, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(['Check ID', 'Title', 'Status', 'Message', 'Expected', 'Actual'])
            for result in report.results:
                writer.writerow([
                    result.check_id,
                    result.title,
                    result.status.value,
                    result.message,
                    result.expected or '',
                    result.actual or '',
                ])

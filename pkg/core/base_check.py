"""
Base class for verification checks
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Optional

from core.models import CheckResult, CheckStatus


class BaseCheck(ABC):
    """Base class for all verification checks"""

    check_id: str = ""
    title: str = ""

    @abstractmethod
    def run(self, subject: Any) -> CheckResult:
        """Run the check against a subject - must be implemented by subclasses"""
        pass

    def evaluate(self, subject: Any) -> CheckResult:
        """Run the check, turning any exception into a FAIL result"""
        try:
            return self.run(subject)
        except Exception as e:
            logging.error(f"Check {self.check_id} raised: {e}")
            return self._create_fail_result(f"Check raised {type(e).__name__}: {e}")

    def _create_result(self, status: CheckStatus, message: str, expected: str = None, actual: str = None,
                       value: Optional[float] = None) -> CheckResult:
        return CheckResult(
            check_id=self.check_id,
            title=self.title,
            status=status,
            message=message,
            expected=expected,
            actual=actual,
            value=value
        )

    def _create_pass_result(self, message: str, expected: str = None, actual: str = None,
                            value: Optional[float] = None) -> CheckResult:
        """Create a PASS result"""
        return self._create_result(CheckStatus.PASS, message, expected, actual, value)

    def _create_fail_result(self, message: str, expected: str = None, actual: str = None,
                            value: Optional[float] = None) -> CheckResult:
        """Create a FAIL result"""
        return self._create_result(CheckStatus.FAIL, message, expected, actual, value)

    def _create_warn_result(self, message: str, expected: str = None, actual: str = None,
                            value: Optional[float] = None) -> CheckResult:
        """Create a WARN result"""
        return self._create_result(CheckStatus.WARN, message, expected, actual, value)

    def _check_at_least(self, label: str, value: float, minimum: float, unit: str = "") -> CheckResult:
        """PASS when value >= minimum"""
        expected = f">= {minimum:g}{unit}"
        actual = f"{value:.2f}{unit}"
        if value >= minimum:
            return self._create_pass_result(f"{label} is {actual}", expected=expected, actual=actual, value=value)
        return self._create_fail_result(f"{label} is {actual}, below {minimum:g}{unit}", expected=expected,
                                        actual=actual, value=value)

    def _check_at_most(self, label: str, value: float, maximum: float) -> CheckResult:
        """PASS when value <= maximum"""
        expected = f"<= {maximum:.1e}"
        actual = f"{value:.3e}"
        if value <= maximum:
            return self._create_pass_result(f"{label} is {actual}", expected=expected, actual=actual, value=value)
        return self._create_fail_result(f"{label} is {actual}, above {maximum:.1e}", expected=expected,
                                        actual=actual, value=value)

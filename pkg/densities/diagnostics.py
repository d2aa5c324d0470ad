"""
Density matrix diagnostics.
Checks the kernel axioms (Hermiticity, positivity, unit trace) and the
ensemble axioms, and reports every check with its measured defect.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Union

import numpy as np
import scipy.linalg

from densities.ensemble import DensityEnsemble
from densities.kernels import KernelDensity


logger = logging.getLogger(__name__)

ENSEMBLE_TOLERANCE = 1e-10
KERNEL_TOLERANCE = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    defect: float
    detail: str = ""

    def as_dict(self) -> Dict[str, object]:
        return {"name": self.name, "passed": self.passed, "defect": float(self.defect), "detail": self.detail}


@dataclass
class ValidationReport:
    """Outcome of validating one density matrix."""

    subject: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def add(self, name: str, defect: float, tolerance: float, detail: str = "") -> None:
        self.checks.append(CheckResult(name, bool(defect <= tolerance), float(defect), detail))

    def as_dict(self) -> Dict[str, object]:
        return {"subject": self.subject, "passed": self.passed, "checks": [c.as_dict() for c in self.checks]}


class DensityDiagnostics:
    """Runs the axiom checks; never raises on a failed property."""

    def __init__(self, ensemble_tolerance: float = ENSEMBLE_TOLERANCE, kernel_tolerance: float = KERNEL_TOLERANCE):
        self.ensemble_tolerance = ensemble_tolerance
        self.kernel_tolerance = kernel_tolerance

    def validate(self, w: Union[DensityEnsemble, KernelDensity]) -> ValidationReport:
        try:
            if isinstance(w, DensityEnsemble):
                return self._validate_ensemble(w)
            if isinstance(w, KernelDensity):
                return self._validate_kernel(w)
        except Exception as e:
            logger.error("Validation of %s failed: %s", type(w).__name__, e)
            report = ValidationReport(type(w).__name__)
            report.checks.append(CheckResult("evaluation", False, float("inf"), str(e)))
            return report
        report = ValidationReport(type(w).__name__)
        report.checks.append(CheckResult("type", False, float("inf"), f"not a density matrix: {type(w).__name__}"))
        return report

    def _validate_ensemble(self, w: DensityEnsemble) -> ValidationReport:
        report = ValidationReport("DensityEnsemble")
        weights = w.weights
        report.add("weights_positive", max(0.0, -float(weights.min())), 0.0, f"min weight {weights.min():.3e}")
        report.add("weights_sum", abs(float(weights.sum()) - 1.0), self.ensemble_tolerance)
        norms = np.real(np.diag(w.gram()))
        report.add("components_normalized", float(np.max(np.abs(norms - 1.0))), self.ensemble_tolerance)
        finite = all(np.all(np.isfinite(psi.data)) for psi in w.fields)
        report.add("amplitudes_finite", 0.0 if finite else float("inf"), 0.0)
        trace = float(weights @ norms)
        report.add("unit_trace", abs(trace - 1.0), self.ensemble_tolerance, f"trace {trace:.12f}")
        return report

    def _validate_kernel(self, kernel: KernelDensity) -> ValidationReport:
        report = ValidationReport("KernelDensity")
        values = kernel.values
        hermiticity = float(np.max(np.abs(values - values.conj().T))) * kernel.grid.cell_volume
        report.add("hermitian", hermiticity, self.kernel_tolerance)
        operator = kernel.operator()
        eigenvalues = scipy.linalg.eigvalsh(0.5 * (operator + operator.conj().T))
        minimum = float(eigenvalues.min())
        report.add("positive", max(0.0, -minimum), self.kernel_tolerance, f"min eigenvalue {minimum:.3e}")
        trace = float(np.real(np.trace(operator)))
        report.add("unit_trace", abs(trace - 1.0), self.kernel_tolerance, f"trace {trace:.12f}")
        return report


_diagnostics = DensityDiagnostics()


def validate(w: Union[DensityEnsemble, KernelDensity]) -> ValidationReport:
    return _diagnostics.validate(w)


__all__ = ["CheckResult", "ValidationReport", "DensityDiagnostics", "validate"]

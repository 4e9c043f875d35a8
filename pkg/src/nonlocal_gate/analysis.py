"""Closed-form probabilities, POVM physicality checks, entropy and statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .channel import ChannelSpec
from .config import CorrectorKind
from .statevec import StateVector, schmidt_spectrum

PHYSICAL_TOL = 1e-12
Z_GATE = 4.0


class NotNormalized(ValueError):
    pass


def outcome_distribution(a: float, b: float, spec: ChannelSpec) -> tuple[float, float]:
    """Probabilities of the two outcomes of the A1 measurement in the swap unit."""
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > 1e-9:
        raise NotNormalized(f"|a|^2 + |b|^2 = {abs(a) ** 2 + abs(b) ** 2}")
    a2, b2 = abs(a) ** 2, abs(b) ** 2
    al2, be2 = spec.alpha**2, spec.beta**2
    return a2 * al2 + b2 * be2, a2 * be2 + b2 * al2


def conditional_success_probability(
    a: float, b: float, spec: ChannelSpec, kind: CorrectorKind, m: int
) -> float | None:
    """Corrector success probability given outcome ``m``; ``None`` if ``m`` is unreachable."""
    p_m = outcome_distribution(a, b, spec)[m]
    if p_m < 1e-14:
        return None
    numerator = spec.beta**2
    if kind is CorrectorKind.ORTHOGONAL:
        numerator *= spec.alpha**2
    return numerator / p_m


def corrector_runs(spec: ChannelSpec, kind: CorrectorKind) -> bool:
    """Whether an attempt goes through the corrector.

    A perfect channel needs no correction, except that the orthogonal
    variant is always run as requested (it then succeeds half the time).
    """
    return not spec.is_perfect or CorrectorKind(kind) is CorrectorKind.ORTHOGONAL


def exact_success_probability(spec: ChannelSpec, kind: CorrectorKind) -> float:
    if CorrectorKind(kind) is CorrectorKind.ORTHOGONAL:
        return 2 * spec.alpha**2 * spec.beta**2
    if spec.is_perfect:
        return 1.0
    return 2 * spec.beta**2


def hermitian_eigenvalues(matrix: np.ndarray) -> tuple[float, float]:
    """Eigenvalues (ascending) of a 2x2 Hermitian matrix from trace and determinant."""
    half_trace = 0.5 * (matrix[0, 0].real + matrix[1, 1].real)
    half_gap = math.hypot(0.5 * (matrix[0, 0].real - matrix[1, 1].real), abs(matrix[0, 1]))
    return half_trace - half_gap, half_trace + half_gap


@dataclass(frozen=True)
class ValidationReport:
    completeness_residual: float
    min_eigen_success: float
    max_eigen_success: float
    min_eigen_failure: float
    is_physical: bool
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "completeness_residual": self.completeness_residual,
            "min_eigen_success": self.min_eigen_success,
            "max_eigen_success": self.max_eigen_success,
            "min_eigen_failure": self.min_eigen_failure,
            "is_physical": self.is_physical,
            "notes": self.notes,
        }


def validate_povm(pair) -> ValidationReport:
    """Check a two-element measurement ``{success, failure}`` for physicality.

    ``pair`` needs ``success`` and ``failure`` attributes holding
    :class:`~nonlocal_gate.statevec.PovmElement` objects.
    """
    s = np.asarray(pair.success.entries)
    f = np.asarray(pair.failure.entries)
    residual = float(np.max(np.abs(s + f - np.eye(2))))
    s_min, s_max = hermitian_eigenvalues(s)
    f_min, _ = hermitian_eigenvalues(f)
    problems = []
    for name, low in (("success", s_min), ("failure", f_min)):
        if low < -PHYSICAL_TOL:
            problems.append(f"{name} element has negative eigenvalue {low:.6g}")
    if s_max > 1 + PHYSICAL_TOL:
        problems.append(f"success element exceeds identity (max eigenvalue {s_max:.6g})")
    if residual > PHYSICAL_TOL:
        problems.append(f"elements do not sum to identity (residual {residual:.3g})")
    return ValidationReport(
        completeness_residual=residual,
        min_eigen_success=s_min,
        max_eigen_success=s_max,
        min_eigen_failure=f_min,
        is_physical=not problems,
        notes="; ".join(problems) if problems else "physical",
    )


def entanglement_entropy(state: StateVector, left: Iterable[str]) -> float:
    """Von Neumann entropy in bits of the reduced state of ``left``."""
    weights = schmidt_spectrum(state, left) ** 2
    weights = weights[weights > 1e-300]
    return float(max(-np.sum(weights * np.log2(weights)), 0.0))


@dataclass(frozen=True)
class Stats:
    trials: int
    successes: int
    rate: float
    expected: float
    sigma: float
    z_score: float | None
    suspicious: bool

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "successes": self.successes,
            "rate": self.rate,
            "expected": self.expected,
            "sigma": self.sigma,
            "z_score": self.z_score,
            "suspicious": self.suspicious,
        }


def binomial_stats(successes: int, trials: int, expected: float) -> Stats:
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0.0 <= expected <= 1.0:
        raise ValueError(f"expected rate {expected} outside [0, 1]")
    rate = successes / trials
    sigma = math.sqrt(expected * (1 - expected) / trials)
    if sigma > 0:
        z = (rate - expected) / sigma
        suspicious = abs(z) > Z_GATE
    else:
        z = None
        suspicious = rate != expected
    return Stats(trials, successes, rate, expected, sigma, z, suspicious)


def monte_carlo_summary(results, expected: float) -> Stats:
    """Success statistics of a batch of runs against the expected rate."""
    results = list(results)
    return binomial_stats(sum(1 for r in results if r.succeeded), len(results), expected)

"""The shared, possibly imperfect, e-bit alpha|00> + beta|11>."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .statevec import StateVector, make_state

PERFECT_TOL = 1e-12


class InvalidChannel(ValueError):
    pass


@dataclass(frozen=True)
class ChannelSpec:
    """Schmidt pair of the ancillary e-bit, ``alpha >= beta > 0``.

    The pair is normalized on construction and ``cos(theta) = beta/alpha``.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        alpha, beta = float(self.alpha), float(self.beta)
        if not (math.isfinite(alpha) and math.isfinite(beta)):
            raise InvalidChannel("channel coefficients must be finite")
        norm = math.hypot(alpha, beta)
        if norm == 0.0:
            raise InvalidChannel("zero channel")
        alpha, beta = alpha / norm, beta / norm
        if abs(alpha - beta) <= PERFECT_TOL:
            alpha = beta = math.sqrt(0.5)
        if beta <= 0.0:
            raise InvalidChannel(f"beta must be positive, got {beta}")
        if alpha < beta:
            raise InvalidChannel(f"need alpha >= beta, got alpha={alpha}, beta={beta}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_alpha(cls, alpha: float) -> "ChannelSpec":
        if not 0.0 < alpha < 1.0:
            raise InvalidChannel(f"alpha must lie in (0, 1), got {alpha}")
        return cls(alpha, math.sqrt(max(1.0 - alpha * alpha, 0.0)))

    @property
    def theta(self) -> float:
        return math.acos(min(self.beta / self.alpha, 1.0))

    @property
    def is_perfect(self) -> bool:
        return abs(self.alpha - self.beta) <= PERFECT_TOL


@functools.lru_cache(maxsize=64)
def prepare_channel(spec: ChannelSpec, labels: tuple[str, str] = ("A1", "B1")) -> StateVector:
    return make_state(np.array([spec.alpha, 0.0, 0.0, spec.beta]), labels)

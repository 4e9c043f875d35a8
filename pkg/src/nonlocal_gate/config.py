from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec

AMPLITUDE_TOL = 1e-9


class CorrectorKind(enum.Enum):
    CUO = "cuo"
    POVM_LITERAL = "povm"
    ORTHOGONAL = "orth"


MODES = ("single", "montecarlo", "purify", "validate", "exact")
FORMATS = ("json", "csv")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run or an experiment."""

    control: tuple[float, float] = (math.sqrt(0.5), math.sqrt(0.5))
    target: tuple[float, float] = (1.0, 0.0)
    alpha: float = 0.8
    corrector: CorrectorKind = CorrectorKind.CUO
    trials: int = 1
    seed: int = 0
    max_attempts: int = 64
    mode: str = "single"
    output_format: str = "json"

    def __post_init__(self):
        for name in ("control", "target"):
            pair = tuple(float(v) for v in getattr(self, name))
            norm = math.hypot(*pair) if len(pair) == 2 else 0.0
            if len(pair) != 2 or norm == 0.0 or not math.isfinite(norm):
                raise ValueError(f"{name} must be two reals with nonzero norm, got {pair}")
            if abs(norm - 1.0) > AMPLITUDE_TOL:
                pair = (pair[0] / norm, pair[1] / norm)
            object.__setattr__(self, name, pair)
        if not math.sqrt(0.5) - 1e-12 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [1/sqrt(2), 1), got {self.alpha}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.output_format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.output_format!r}")
        object.__setattr__(self, "corrector", CorrectorKind(self.corrector))

    @property
    def channel(self) -> ChannelSpec:
        return ChannelSpec.from_alpha(self.alpha)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "alpha": self.alpha,
            "control": list(self.control),
            "target": list(self.target),
            "corrector": self.corrector.value,
            "trials": self.trials,
            "seed": self.seed,
            "max_attempts": self.max_attempts,
            "format": self.output_format,
        }


DRAWS_PER_ATTEMPT = 3
CHUNK_TRIALS = 4096


def draws_per_trial(max_attempts: int) -> int:
    """Width of a trial's slice of the stream, whole Philox blocks of four doubles."""
    return 4 * math.ceil(DRAWS_PER_ATTEMPT * max_attempts / 4)


def trial_draws(seed: int, trial: int, max_attempts: int) -> np.ndarray:
    """Uniform draws reserved for one trial.

    All trials share one Philox stream keyed by ``seed``; trial ``i`` owns
    the ``i``-th consecutive slice of ``draws_per_trial(max_attempts)``
    doubles, so it can be replayed alone by advancing the counter.
    """
    width = draws_per_trial(max_attempts)
    bits = np.random.Philox(key=seed)
    bits.advance(trial * width // 4)
    return np.random.Generator(bits).random(width)


def batch_draws(seed: int, start: int, count: int, max_attempts: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of the per-trial draw table in one call."""
    width = draws_per_trial(max_attempts)
    bits = np.random.Philox(key=seed)
    bits.advance(start * width // 4)
    return np.random.Generator(bits).random((count, width))


def draw_stream(rng: np.random.Generator):
    """Endless iterator of uniform draws in [0, 1)."""
    while True:
        yield from rng.random(8).tolist()

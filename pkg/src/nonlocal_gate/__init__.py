"""Probabilistic nonlocal C-NOT over a partially entangled channel."""
from .channel import ChannelSpec, InvalidChannel, prepare_channel
from .config import CorrectorKind, RunConfig
from .protocol import nonlocal_cnot, purification_experiment, run_trials

__all__ = [
    "ChannelSpec",
    "InvalidChannel",
    "prepare_channel",
    "CorrectorKind",
    "RunConfig",
    "nonlocal_cnot",
    "purification_experiment",
    "run_trials",
]

__version__ = "0.1.0"

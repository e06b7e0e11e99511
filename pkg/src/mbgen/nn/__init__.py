import numpy as np

from .modules import FeedForward, FiLM, Linear, Module, film
from .optim import Adam, NonFiniteGradient
from .tensor import (
    DimensionError,
    Parameter,
    StaleTapeError,
    Tensor,
    backward,
    no_grad,
    reset_tape,
    softmax,
)


def make_rng(seed: int):
    """All randomness in the package flows from generators built here."""
    return np.random.Generator(np.random.PCG64(seed))


__all__ = [
    "Adam",
    "DimensionError",
    "FeedForward",
    "FiLM",
    "Linear",
    "Module",
    "NonFiniteGradient",
    "Parameter",
    "StaleTapeError",
    "Tensor",
    "backward",
    "film",
    "make_rng",
    "no_grad",
    "reset_tape",
    "softmax",
]

import logging
from typing import Tuple

import numpy as np

from ..errors import NumericError
from .tensor import Tensor, log_softmax, softmax

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-6


def categorical_sample(probs: np.ndarray, rng: np.random.Generator) -> Tuple[int, float]:
    """
    Draw one index from a probability vector

    Returns:
        (index, log-probability of that index)
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > NORMALIZATION_TOLERANCE:
        raise NumericError(f"categorical_sample needs a normalized distribution, got sum {probs.sum():.8f}")
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    index = min(index, probs.size - 1)
    # a zero-probability slot can only be hit through the final clamp
    while probs[index] == 0.0:
        index -= 1
    return index, float(np.log(probs[index]))


def categorical_greedy(probs: np.ndarray) -> Tuple[int, float]:
    probs = np.asarray(probs, dtype=np.float64)
    index = int(np.argmax(probs))
    return index, float(np.log(probs[index]))


def categorical_entropy(logits: Tensor) -> Tensor:
    """Per-row Shannon entropy (natural log) of softmax(logits)"""
    return -(softmax(logits, axis=-1) * log_softmax(logits, axis=-1)).sum(axis=-1)


def entropy_of(probs: np.ndarray) -> np.ndarray:
    """Entropy of explicit probability rows with 0 log 0 taken as 0"""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    safe = np.where(probs > 0, probs, 1.0)
    return -(probs * np.log(safe)).sum(axis=-1)

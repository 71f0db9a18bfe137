"""Slow reference kernels computed as explicit double sums.

Accuracy baselines for the test suite. Quadratic in the set sizes and
deliberately naive: 64-bit scalars accumulated in plain loops. Not part
of the supported public surface.
"""

from __future__ import annotations

import numpy as np

from .angle_map import FourierCoefficients, truncated_kernel
from .descriptors import DescriptorSet, EmbeddingConfig, embed_batch
from .errors import DegenerateDataError


def _raw_modulated_sum(
    xset: DescriptorSet,
    yset: DescriptorSet,
    ex: np.ndarray,
    ey: np.ndarray,
    coeffs: FourierCoefficients,
) -> float:
    total = 0.0
    for i in range(len(xset)):
        for j in range(len(yset)):
            sim = float(np.dot(ex[i], ey[j]))
            weight = float(
                truncated_kernel(float(xset.angles[i] - yset.angles[j]), coeffs)
            )
            total += sim * weight
    return total


def brute_match_kernel(
    xset: DescriptorSet,
    yset: DescriptorSet,
    embedding: EmbeddingConfig,
    coeffs: FourierCoefficients,
) -> float:
    """Normalized double-sum match kernel between two descriptor sets."""
    ex = embed_batch(xset.descriptors, embedding)
    ey = embed_batch(yset.descriptors, embedding)
    self_x = _raw_modulated_sum(xset, xset, ex, ex, coeffs)
    self_y = _raw_modulated_sum(yset, yset, ey, ey, coeffs)
    if self_x <= 0.0 or self_y <= 0.0:
        raise DegenerateDataError("set self-similarity is not positive")
    cross = _raw_modulated_sum(xset, yset, ex, ey, coeffs)
    return cross / np.sqrt(self_x * self_y)


def _raw_power_sum(X: np.ndarray, Y: np.ndarray, degree: int) -> float:
    total = 0.0
    for i in range(X.shape[0]):
        for j in range(Y.shape[0]):
            total += float(np.dot(X[i], Y[j])) ** degree
    return total


def brute_monomial_kernel(X, Y, degree: int) -> float:
    """Normalized double sum of inner-product powers between two lists."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    self_x = _raw_power_sum(X, X, degree)
    self_y = _raw_power_sum(Y, Y, degree)
    if self_x <= 0.0 or self_y <= 0.0:
        raise DegenerateDataError("set self-similarity is not positive")
    return _raw_power_sum(X, Y, degree) / np.sqrt(self_x * self_y)

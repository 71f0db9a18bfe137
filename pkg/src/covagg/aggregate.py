"""Kronecker modulation of embedded descriptors and their normalized sum.

Modulating an embedded descriptor v by the angle feature a(theta)
multiplies every component of v by every component of a, so inner
products factor: <m(v, a(t1)), m(w, a(t2))> = <v, w> * k(t1 - t2).

The product is stored in frequency-major block order: the constant block
first, then the cosine and sine blocks of each frequency, each block
contiguous with the base embedding dimension. This is a fixed
permutation of the raw Kronecker (per-component interleaved) order and
therefore preserves inner products; it makes the per-frequency subvector
reads used by rotation-aware scoring contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .angle_map import FourierCoefficients, angle_feature_batch, wrap_angle
from .descriptors import DescriptorSet, EmbeddingConfig, embed_batch
from .errors import ContractError, DegenerateDataError

AGGREGATE_CHUNK = 512


def block_order(n_freq: int) -> np.ndarray:
    """Permutation taking [const, cos 1..N, sin 1..N] to [const, c1, s1, ..., cN, sN]."""
    order = np.empty(2 * n_freq + 1, dtype=np.intp)
    order[0] = 0
    if n_freq:
        order[1::2] = np.arange(1, n_freq + 1)
        order[2::2] = np.arange(n_freq + 1, 2 * n_freq + 1)
    return order


@dataclass(frozen=True)
class ModulatedVector:
    """Aggregated image vector stored as 2N+1 contiguous base-dim blocks."""

    values: np.ndarray
    base_dim: int
    n_freq: int

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if vals.ndim != 1:
            raise ContractError("modulated vector must be 1-D")
        expected = self.base_dim * (2 * self.n_freq + 1)
        if self.base_dim < 1 or self.n_freq < 0 or vals.size != expected:
            raise ContractError(
                f"expected {expected} components for base_dim={self.base_dim}, "
                f"n_freq={self.n_freq}; got {vals.size}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.size

    def block_const(self) -> np.ndarray:
        return self.values[: self.base_dim]

    def _block(self, index: int) -> np.ndarray:
        d = self.base_dim
        return self.values[index * d : (index + 1) * d]

    def block_cos(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.n_freq:
            raise ContractError(f"frequency {n} outside 1..{self.n_freq}")
        return self._block(2 * n - 1)

    def block_sin(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.n_freq:
            raise ContractError(f"frequency {n} outside 1..{self.n_freq}")
        return self._block(2 * n)


def modulate(v, a) -> np.ndarray:
    """Modulated descriptor in frequency-major block layout."""
    v = np.asarray(v, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if v.ndim != 1 or a.ndim != 1 or a.size % 2 == 0:
        raise ContractError("modulate expects a 1-D vector and an odd-length angle feature")
    n_freq = (a.size - 1) // 2
    return np.multiply.outer(a[block_order(n_freq)], v).ravel()


def _accumulate_blocks(
    dset: DescriptorSet,
    embedding: EmbeddingConfig,
    coeffs: FourierCoefficients,
    thetas: np.ndarray,
    chunk_size: int,
) -> np.ndarray:
    """Sum of modulated embeddings for every global rotation in ``thetas``.

    Returns an array of shape (len(thetas), 2N+1, D). Descriptors are
    consumed in record order, chunk partial sums are added in chunk
    order, so results are machine-deterministic.
    """
    if len(dset) == 0:
        raise ContractError("cannot encode an empty descriptor set")
    order = block_order(coeffs.n_freq)
    totals = None
    for start in range(0, len(dset), chunk_size):
        stop = start + chunk_size
        emb = embed_batch(dset.descriptors[start:stop], embedding)
        if totals is None:
            totals = np.zeros((thetas.size, 2 * coeffs.n_freq + 1, emb.shape[1]))
        for r, theta in enumerate(thetas):
            angles = np.asarray(wrap_angle(dset.angles[start:stop] - theta))
            feats = angle_feature_batch(angles, coeffs)[:, order]
            totals[r] += feats.T @ emb
    return totals


def _normalize_flat(flat: np.ndarray, base_dim: int, n_freq: int) -> ModulatedVector:
    norm = float(np.linalg.norm(flat))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateDataError("aggregated vector has no usable magnitude")
    return ModulatedVector(values=flat / norm, base_dim=base_dim, n_freq=n_freq)


def aggregate_raw_sum(
    dset: DescriptorSet,
    embedding: EmbeddingConfig,
    coeffs: FourierCoefficients,
    chunk_size: int = AGGREGATE_CHUNK,
) -> np.ndarray:
    """Unnormalized sum of modulated embeddings, flattened."""
    totals = _accumulate_blocks(dset, embedding, coeffs, np.zeros(1), chunk_size)
    return totals[0].ravel()


def aggregate(
    dset: DescriptorSet,
    embedding: EmbeddingConfig,
    coeffs: FourierCoefficients,
    chunk_size: int = AGGREGATE_CHUNK,
) -> ModulatedVector:
    """Normalized aggregated image vector."""
    flat = aggregate_raw_sum(dset, embedding, coeffs, chunk_size)
    return _normalize_flat(flat, embedding.output_dim, coeffs.n_freq)


def aggregate_rotations(
    dset: DescriptorSet,
    embedding: EmbeddingConfig,
    coeffs: FourierCoefficients,
    thetas,
    chunk_size: int = AGGREGATE_CHUNK,
) -> list[ModulatedVector]:
    """Aggregated vectors of the image under several global rotations.

    Embeds each descriptor once and re-modulates per rotation, which is
    exactly equivalent to re-encoding the rotated sets.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    totals = _accumulate_blocks(dset, embedding, coeffs, thetas, chunk_size)
    return [
        _normalize_flat(totals[r].ravel(), embedding.output_dim, coeffs.n_freq)
        for r in range(thetas.size)
    ]


def aggregate_from_embedded(
    embedded, angles, coeffs: FourierCoefficients
) -> ModulatedVector:
    """Aggregate descriptors that are already embedded."""
    embedded = np.asarray(embedded, dtype=np.float64)
    if embedded.ndim != 2 or embedded.shape[0] == 0:
        raise ContractError("expected a non-empty 2-D array of embedded descriptors")
    feats = angle_feature_batch(angles, coeffs)[:, block_order(coeffs.n_freq)]
    if feats.shape[0] != embedded.shape[0]:
        raise ContractError("need exactly one angle per embedded descriptor")
    flat = (feats.T @ embedded).ravel()
    return _normalize_flat(flat, embedded.shape[1], coeffs.n_freq)

"""Similarity scoring, including the rotation-swept trigonometric score.

Because the aggregated vector transforms block-wise under a global
rotation of either image, the similarity as a function of the relative
rotation angle is a trigonometric polynomial of degree N. Its 2N+1
coefficients come from 1 + 4N block inner products (one constant-block
product plus four per frequency), after which locating the maximizing
angle costs next to nothing.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .aggregate import ModulatedVector
from .angle_map import wrap_angle
from .descriptors import DescriptorSet
from .errors import ContractError

GOLDEN_STEPS = 20
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BlockDotCounter:
    """Counts base-dim inner products performed by score_polynomial."""

    def __init__(self):
        self.count = 0


_active_counter: BlockDotCounter | None = None


@contextmanager
def count_block_dots():
    """Context manager that counts block inner products; test instrumentation."""
    global _active_counter
    previous = _active_counter
    counter = BlockDotCounter()
    _active_counter = counter
    try:
        yield counter
    finally:
        _active_counter = previous


def _block_dot(x: np.ndarray, y: np.ndarray) -> float:
    if _active_counter is not None:
        _active_counter.count += 1
    return float(np.dot(x, y))


@dataclass(frozen=True)
class ScorePolynomial:
    """Score as a function of the relative rotation angle.

    s(theta) = c0 + sum_n a_n cos(n theta) + b_n sin(n theta).
    """

    c0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.a, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.b, dtype=np.float64))
        if a.ndim != 1 or b.shape != a.shape:
            raise ContractError("coefficient vectors a and b must be 1-D and equal length")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_freq(self) -> int:
        return self.a.size

    def evaluate(self, theta):
        t = np.asarray(theta, dtype=np.float64)
        out = np.full(t.shape, self.c0)
        for n in range(1, self.n_freq + 1):
            out += self.a[n - 1] * np.cos(n * t) + self.b[n - 1] * np.sin(n * t)
        if t.ndim == 0:
            return float(out)
        return out


def _check_compatible(X: ModulatedVector, Y: ModulatedVector):
    if X.base_dim != Y.base_dim or X.n_freq != Y.n_freq:
        raise ContractError(
            f"vectors come from different configurations: "
            f"({X.base_dim}, {X.n_freq}) vs ({Y.base_dim}, {Y.n_freq})"
        )


def score_cosine(X: ModulatedVector, Y: ModulatedVector) -> float:
    """Plain inner product of two aggregated vectors."""
    _check_compatible(X, Y)
    return float(np.dot(X.values, Y.values))


def score_polynomial(X: ModulatedVector, Y: ModulatedVector) -> ScorePolynomial:
    """Coefficients of the rotation-score polynomial between two images.

    Uses exactly 1 + 4N inner products of base-dim blocks.
    """
    _check_compatible(X, Y)
    n_freq = X.n_freq
    c0 = _block_dot(X.block_const(), Y.block_const())
    a = np.empty(n_freq)
    b = np.empty(n_freq)
    for n in range(1, n_freq + 1):
        xc, xs = X.block_cos(n), X.block_sin(n)
        yc, ys = Y.block_cos(n), Y.block_sin(n)
        a[n - 1] = _block_dot(xc, yc) + _block_dot(xs, ys)
        b[n - 1] = _block_dot(xs, yc) - _block_dot(xc, ys)
    return ScorePolynomial(c0=c0, a=a, b=b)


def rotate_blocks(X: ModulatedVector, theta: float) -> ModulatedVector:
    """The vector that re-encoding with all angles shifted by theta gives."""
    d = X.base_dim
    vals = X.values.copy()
    for n in range(1, X.n_freq + 1):
        c = X.block_cos(n)
        s = X.block_sin(n)
        cn = math.cos(n * theta)
        sn = math.sin(n * theta)
        vals[(2 * n - 1) * d : 2 * n * d] = c * cn + s * sn
        vals[2 * n * d : (2 * n + 1) * d] = -c * sn + s * cn
    return ModulatedVector(values=vals, base_dim=d, n_freq=X.n_freq)


def _golden_max(f, lo: float, hi: float, steps: int = GOLDEN_STEPS):
    """Golden-section maximization on [lo, hi]; returns (arg, value)."""
    x1 = hi - _INV_GOLDEN * (hi - lo)
    x2 = lo + _INV_GOLDEN * (hi - lo)
    f1 = float(f(x1))
    f2 = float(f(x2))
    best_x, best_f = (x1, f1) if f1 >= f2 else (x2, f2)
    for _ in range(steps):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_GOLDEN * (hi - lo)
            f1 = float(f(x1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_GOLDEN * (hi - lo)
            f2 = float(f(x2))
        if f1 >= f2 and f1 > best_f:
            best_x, best_f = x1, f1
        elif f2 > f1 and f2 > best_f:
            best_x, best_f = x2, f2
    return best_x, best_f


def max_score(poly: ScorePolynomial, samples: int = 64):
    """Angle and value of the polynomial maximum.

    Evaluates ``samples`` uniformly spaced angles, then refines every
    sampled local maximum (a degree-N polynomial has at most N true
    peaks) with golden-section steps. Requires samples >= 2N+1.
    """
    min_samples = 2 * poly.n_freq + 1
    if int(samples) != samples or samples < min_samples:
        raise ContractError(f"need at least {min_samples} samples, got {samples!r}")
    theta = np.linspace(-np.pi, np.pi, int(samples), endpoint=False)
    vals = poly.evaluate(theta)
    is_peak = (vals >= np.roll(vals, 1)) & (vals >= np.roll(vals, -1))
    candidates = np.nonzero(is_peak)[0]
    if candidates.size == 0:
        candidates = np.array([int(np.argmax(vals))])
    if candidates.size > min_samples:
        keep = np.argsort(vals[candidates])[::-1][:min_samples]
        candidates = candidates[keep]
    half_step = np.pi / samples
    best_t = float(theta[candidates[0]])
    best_v = float(vals[candidates[0]])
    for i in candidates:
        if vals[i] > best_v:
            best_t, best_v = float(theta[i]), float(vals[i])
        t, v = _golden_max(poly.evaluate, float(theta[i]) - half_step, float(theta[i]) + half_step)
        if v > best_v:
            best_t, best_v = t, v
    return wrap_angle(best_t), best_v


def query_multi_rotation(query: DescriptorSet, pipeline, db_vectors, n_rot: int = 8):
    """Best score per database vector over n_rot query rotation hypotheses.

    The query is re-encoded once per hypothesis (the full pipeline,
    including any non-linear post-processing) and all hypotheses are
    scored against the whole database with a single matrix product.
    Returns (scores, thetas): the per-database maximum and the rotation
    hypothesis that achieved it.
    """
    if int(n_rot) != n_rot or n_rot < 1:
        raise ContractError(f"n_rot must be a positive integer, got {n_rot!r}")
    db = np.asarray(db_vectors, dtype=np.float64)
    if db.ndim != 2:
        raise ContractError("database vectors must form a 2-D array")
    thetas = 2.0 * np.pi * np.arange(int(n_rot)) / float(n_rot)
    rotated = pipeline.encode_rotations(query, thetas)
    if rotated.shape[1] != db.shape[1]:
        raise ContractError(
            f"query pipeline produces dim {rotated.shape[1]} but database stores {db.shape[1]}"
        )
    scores_all = rotated @ db.T
    best = np.argmax(scores_all, axis=0)
    cols = np.arange(db.shape[0])
    return scores_all[best, cols], np.asarray(wrap_angle(thetas[best]))

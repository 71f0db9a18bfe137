"""Burstiness-tempering normalizations applied to aggregated image vectors.

Three stages, each optional: a component-wise signed power law (or its
pair-modulus variant that keeps the per-frequency phase intact), a
learned rotation followed by a second power law, and truncation to the
leading components.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aggregate import ModulatedVector
from .codebooks import ORTHO_TOL, _canonical_signs
from .errors import ContractError

_ORTHO_PROBE_DIM = 1024


def _check_exponent(a: float):
    if not (np.isfinite(a) and 0.0 < a <= 1.0):
        raise ContractError(f"power-law exponent must lie in (0, 1], got {a!r}")


def _signed_power(v: np.ndarray, a: float) -> np.ndarray:
    return np.sign(v) * np.abs(v) ** a


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v
    return v / norm


def power_law(v, exponent: float) -> np.ndarray:
    """Component-wise signed power followed by l2 normalization."""
    _check_exponent(exponent)
    return _unit(_signed_power(np.asarray(v, dtype=np.float64), exponent))


def adapted_power_law(X: ModulatedVector, exponent: float) -> ModulatedVector:
    """Power law on pair moduli, preserving per-frequency phase.

    The constant block gets the plain signed power. For every frequency
    and base component, the (cos, sin) pair is divided by
    modulus**(1 - exponent), i.e. the pair modulus is raised to the
    exponent while atan2(sin, cos) is untouched. Zero-modulus pairs stay
    zero. The whole vector is l2-normalized at the end.
    """
    _check_exponent(exponent)
    d = X.base_dim
    vals = X.values.copy()
    vals[:d] = _signed_power(vals[:d], exponent)
    for n in range(1, X.n_freq + 1):
        cs = slice((2 * n - 1) * d, 2 * n * d)
        ss = slice(2 * n * d, (2 * n + 1) * d)
        modulus = np.hypot(vals[cs], vals[ss])
        scale = np.zeros_like(modulus)
        nz = modulus > 0.0
        scale[nz] = modulus[nz] ** (exponent - 1.0)
        vals[cs] = vals[cs] * scale
        vals[ss] = vals[ss] * scale
    return ModulatedVector(values=_unit(vals), base_dim=d, n_freq=X.n_freq)


@dataclass(frozen=True)
class RnModel:
    """Learned rotation plus a second power law (or whitening).

    ``rotation`` rows are ordered most-energetic first so truncation after
    application keeps the high-variance directions.
    """

    rotation: np.ndarray
    exponent: float = 0.5
    whiten: bool = False
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        rot = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64))
        if rot.ndim != 2 or rot.shape[0] != rot.shape[1]:
            raise ContractError("rotation must be a square matrix")
        _check_exponent(self.exponent)
        dim = rot.shape[0]
        if dim <= _ORTHO_PROBE_DIM:
            gram = rot @ rot.T
            if np.max(np.abs(gram - np.eye(dim))) > ORTHO_TOL:
                raise ContractError("rotation rows are not orthonormal")
        else:
            # full Gram check is cubic; probe with a few random vectors
            rng = np.random.default_rng(0)
            probes = rng.standard_normal((4, dim))
            images = probes @ rot.T
            if np.max(
                np.abs(np.linalg.norm(images, axis=1) - np.linalg.norm(probes, axis=1))
            ) > ORTHO_TOL * np.sqrt(dim):
                raise ContractError("rotation does not preserve norms")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        eig = self.eigenvalues
        if eig is not None:
            eig = np.ascontiguousarray(np.asarray(eig, dtype=np.float64))
            if eig.shape != (dim,) or np.any(eig < 0):
                raise ContractError("eigenvalues must be non-negative, one per dim")
            eig.setflags(write=False)
            object.__setattr__(self, "eigenvalues", eig)
        elif self.whiten:
            raise ContractError("whitening requires eigenvalues")

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]


def rn_train(vectors, exponent: float = 0.5, whiten: bool = False) -> RnModel:
    """Learn the rotation from a held-out collection of image vectors.

    When there are fewer samples than dimensions the covariance is
    rank-deficient; the returned rotation is informative on the sample
    span and an arbitrary (deterministic) orthonormal completion on the
    rest, and a warning is emitted.
    """
    _check_exponent(exponent)
    V = np.asarray(list(vectors), dtype=np.float64)
    if V.ndim != 2 or V.shape[0] < 1:
        raise ContractError("need a non-empty 2-D collection of vectors")
    n, dim = V.shape
    centered = V - V.mean(axis=0)
    if n > dim:
        cov = centered.T @ centered / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        evals = np.clip(evals[::-1], 0.0, None)
        rotation = _canonical_signs(evecs[:, ::-1].T)
        return RnModel(rotation=rotation, exponent=exponent, whiten=whiten, eigenvalues=evals)

    warnings.warn(
        f"learning a {dim}-dim rotation from only {n} vectors; directions outside "
        "the sample span are an arbitrary orthonormal completion",
        stacklevel=2,
    )
    gram = centered @ centered.T / max(n - 1, 1)
    gvals, gvecs = np.linalg.eigh(gram)
    gvals = np.clip(gvals[::-1], 0.0, None)
    gvecs = gvecs[:, ::-1]
    if gvals[0] <= 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(gvals > gvals[0] * 1e-12))
    eigenvalues = np.zeros(dim)
    if rank == 0:
        return RnModel(
            rotation=np.eye(dim), exponent=exponent, whiten=whiten, eigenvalues=eigenvalues
        )
    eigenvalues[:rank] = gvals[:rank]
    span = centered.T @ gvecs[:, :rank] / np.sqrt(gvals[:rank] * max(n - 1, 1))
    full, _ = np.linalg.qr(span, mode="complete")
    full[:, :rank] = span  # qr may flip signs; the complement stays orthogonal
    return RnModel(rotation=full.T, exponent=exponent, whiten=whiten, eigenvalues=eigenvalues)


def rn_apply(v, model: RnModel) -> np.ndarray:
    """Rotate, re-normalize the spectrum, and return a unit vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.dim,):
        raise ContractError(f"vector dim {v.shape} does not match model dim {model.dim}")
    y = model.rotation @ v
    if model.whiten:
        eig = model.eigenvalues
        floor = max(float(eig.max()) * 1e-6, 1e-300)
        y = y / np.sqrt(np.maximum(eig, floor))
    else:
        y = _signed_power(y, model.exponent)
    return _unit(y)


def truncate_l2(v, d_out: int) -> np.ndarray:
    """Keep the first ``d_out`` components and re-normalize."""
    v = np.asarray(v, dtype=np.float64)
    if int(d_out) != d_out or d_out <= 0:
        raise ContractError(f"d_out must be a positive integer, got {d_out!r}")
    if d_out > v.size:
        raise ContractError(f"d_out={d_out} exceeds vector length {v.size}")
    return _unit(v[: int(d_out)].copy())

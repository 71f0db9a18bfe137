"""Angular similarity kernels and their explicit feature maps.

The central object is a truncated cosine series

    k(delta) = gamma_0 + sum_{n=1..N} gamma_n cos(n delta)

together with the feature map alpha(theta) whose inner products evaluate
it exactly: <alpha(t1), alpha(t2)> = k(t1 - t2).

Two coefficient families are supported:

* ``von_mises``: the series matches a shifted and rescaled
  exponential-of-cosine bump that equals 1 at delta=0 and 0 at delta=pi.
  Its coefficients involve modified Bessel functions and the series is an
  approximation whose quality grows with the number of retained
  frequencies N.
* ``cosine_power``: the series is the exact expansion of
  cos(delta/2)**P for even P, obtained from power-reduction identities.
  Here N = P/2 and there is no truncation error.

Coefficients are computed once per configuration and cached inside a
``FourierCoefficients`` value; nothing here evaluates Bessel functions in
per-descriptor code paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

VON_MISES = "von_mises"
COSINE_POWER = "cosine_power"

# Ranges over which the ascending power series is known to deliver
# better than 1e-12 relative accuracy in 64-bit arithmetic.
BESSEL_MAX_ORDER = 64
BESSEL_MAX_ARG = 100.0


def wrap_angle(theta):
    """Wrap angles (scalar or array) to the interval (-pi, pi]."""
    t = np.asarray(theta, dtype=np.float64)
    wrapped = np.pi - np.remainder(np.pi - t, 2.0 * np.pi)
    if t.ndim == 0:
        return float(wrapped)
    return wrapped


def bessel_i(order: int, x: float) -> float:
    """Modified Bessel function of the first kind, I_order(x).

    Evaluated with the ascending power series, stopping once the next
    term falls below 1e-16 of the running sum. All terms are positive so
    there is no cancellation; within the supported range
    (order <= 64, 0 <= x <= 100) the result is accurate to better than
    1e-12 relative error.
    """
    if int(order) != order or order < 0 or order > BESSEL_MAX_ORDER:
        raise ContractError(
            f"bessel order must be an integer in [0, {BESSEL_MAX_ORDER}], got {order!r}"
        )
    if not (np.isfinite(x) and 0.0 <= x <= BESSEL_MAX_ARG):
        raise ContractError(
            f"bessel argument must lie in [0, {BESSEL_MAX_ARG}], got {x!r}"
        )
    n = int(order)
    half = 0.5 * float(x)
    term = half**n / math.factorial(n)
    total = term
    k = 1
    while term > 0.0:
        term *= (half * half) / (k * (k + n))
        total += term
        if term <= total * 1e-16:
            break
        k += 1
    return total


def vm_kernel(delta, kappa: float):
    """Shifted exponential-of-cosine angle similarity, in [0, 1].

    Even, 2*pi-periodic, equal to 1 at delta=0 and exactly 0 at
    delta=pi. ``kappa`` controls the angular selectivity. Evaluated in a
    rescaled form that cannot overflow for large kappa.
    """
    if not (np.isfinite(kappa) and kappa > 0.0):
        raise ContractError(f"kappa must be a positive real, got {kappa!r}")
    d = np.asarray(wrap_angle(delta), dtype=np.float64)
    decay = math.exp(-2.0 * kappa)
    out = (np.exp(kappa * (np.cos(d) - 1.0)) - decay) / (1.0 - decay)
    if d.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class AngleMapConfig:
    """Selects the kernel family and the number of retained frequencies.

    For the ``cosine_power`` family the expansion terminates at
    ``power // 2`` frequencies, so ``n_freq`` is forced to that value.
    """

    kappa: float = 8.0
    n_freq: int = 3
    family: str = VON_MISES
    power: int | None = None

    def __post_init__(self):
        if self.family == VON_MISES:
            if not (np.isfinite(self.kappa) and self.kappa > 0.0):
                raise ContractError(f"kappa must be positive, got {self.kappa!r}")
            if int(self.n_freq) != self.n_freq or self.n_freq < 0:
                raise ContractError(
                    f"n_freq must be a non-negative integer, got {self.n_freq!r}"
                )
            object.__setattr__(self, "n_freq", int(self.n_freq))
        elif self.family == COSINE_POWER:
            p = self.power
            if p is None or int(p) != p or p < 2 or p % 2 != 0:
                raise ContractError(
                    f"cosine-power family needs an even power >= 2, got {p!r}"
                )
            object.__setattr__(self, "power", int(p))
            object.__setattr__(self, "n_freq", int(p) // 2)
        else:
            raise ContractError(f"unknown angle kernel family {self.family!r}")


@dataclass(frozen=True)
class FourierCoefficients:
    """Non-negative cosine-series weights gamma_0..gamma_N."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.gamma, dtype=np.float64))
        if g.ndim != 1 or g.size < 1:
            raise ContractError("coefficients must form a non-empty 1-D vector")
        if not np.all(np.isfinite(g)) or np.any(g < 0.0):
            raise ContractError("coefficients must be finite and non-negative")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def n_freq(self) -> int:
        return self.gamma.size - 1

    @property
    def feature_dim(self) -> int:
        return 2 * self.n_freq + 1


def fourier_coeffs(config: AngleMapConfig) -> FourierCoefficients:
    """Series coefficients for the configured kernel family."""
    if config.family == VON_MISES:
        kappa = float(config.kappa)
        sinh_k = math.sinh(kappa)
        gamma = np.empty(config.n_freq + 1)
        gamma[0] = (bessel_i(0, kappa) - math.exp(-kappa)) / (2.0 * sinh_k)
        for n in range(1, config.n_freq + 1):
            gamma[n] = bessel_i(n, kappa) / sinh_k
    else:
        p = config.power
        half_p = p // 2
        scale = 0.5**p
        gamma = np.empty(half_p + 1)
        gamma[0] = scale * math.comb(p, half_p)
        for j in range(1, half_p + 1):
            gamma[j] = 2.0 * scale * math.comb(p, half_p - j)
    return FourierCoefficients(gamma)


def truncated_kernel(delta, coeffs: FourierCoefficients):
    """Evaluate the cosine series at ``delta`` (scalar or array)."""
    d = np.asarray(wrap_angle(delta), dtype=np.float64)
    g = coeffs.gamma
    out = np.full(d.shape, g[0])
    for n in range(1, g.size):
        out += g[n] * np.cos(n * d)
    if d.ndim == 0:
        return float(out)
    return out


def angle_feature_batch(thetas, coeffs: FourierCoefficients) -> np.ndarray:
    """Feature vectors for a batch of angles, one per row.

    Layout per row: sqrt(gamma_0), then the N cosine components
    sqrt(gamma_n) cos(n theta), then the N sine components
    sqrt(gamma_n) sin(n theta). The squared row norm equals
    sum(gamma), independent of theta.
    """
    t = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    if not np.all(np.isfinite(t)):
        raise ContractError("angles must be finite")
    t = np.asarray(wrap_angle(t))
    root = np.sqrt(coeffs.gamma)
    n_freq = coeffs.n_freq
    out = np.empty((t.size, 2 * n_freq + 1))
    out[:, 0] = root[0]
    if n_freq:
        phases = t[:, None] * np.arange(1, n_freq + 1)[None, :]
        out[:, 1 : n_freq + 1] = root[1:] * np.cos(phases)
        out[:, n_freq + 1 :] = root[1:] * np.sin(phases)
    return out


def angle_feature(theta: float, coeffs: FourierCoefficients) -> np.ndarray:
    """Feature vector of a single angle; see ``angle_feature_batch``."""
    return angle_feature_batch(np.asarray([theta]), coeffs)[0]

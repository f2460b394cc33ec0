"""Residence-time distribution engine.

Cell residence times are Gamma or exponential laws specified by their first
two moments. This module provides construction from moments, densities,
Laplace transforms, the exponentially weighted moments consumed by the
closed-form analytics, and exact sampling for both the law itself and its
equilibrium (residual-life) companion.

All transform evaluations are closed-form and computed in log space so that
heavy-variance Gammas (shape well below 1) stay accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from numpy.random import PCG64, Generator, SeedSequence

from .errors import ParameterError

__all__ = [
    "DistributionSpec",
    "RandomStream",
    "make_from_moments",
    "pdf",
    "laplace",
    "weighted_moment",
    "residual_laplace",
    "residual_weighted_moment",
    "sample",
    "residual_sample",
]

GAMMA = "gamma"
EXPONENTIAL = "exponential"

_TWO_PI = 6.283185307179586


@dataclass(frozen=True)
class DistributionSpec:
    """A residence-time law, immutable and safe to share across threads.

    ``shape`` and ``rate`` are derived from (mean, variance):
    shape = mean^2/variance, rate = mean/variance. An exponential law always
    has variance = mean^2 (shape = 1).
    """

    family: str
    mean: float
    variance: float
    shape: float
    rate: float

    def __post_init__(self) -> None:
        if self.family not in (GAMMA, EXPONENTIAL):
            raise ParameterError(f"unknown family {self.family!r}")
        if not (self.mean > 0.0 and math.isfinite(self.mean)):
            raise ParameterError(f"mean must be positive, got {self.mean}")
        if not (self.variance > 0.0 and math.isfinite(self.variance)):
            raise ParameterError(f"variance must be positive, got {self.variance}")


def make_from_moments(family: str, mean: float, variance: float | None = None) -> DistributionSpec:
    """Build a residence-time law from its mean (seconds) and variance (seconds^2).

    For the exponential family the variance argument is ignored and fixed to
    mean^2. Non-positive moments raise :class:`ParameterError`.
    """
    fam = family.lower()
    if fam not in (GAMMA, EXPONENTIAL):
        raise ParameterError(f"unknown family {family!r} (expected gamma or exponential)")
    if not (isinstance(mean, (int, float)) and mean > 0.0 and math.isfinite(mean)):
        raise ParameterError(f"mean must be positive and finite, got {mean}")
    if fam == EXPONENTIAL:
        variance = mean * mean
    else:
        if variance is None:
            raise ParameterError("gamma family requires a variance")
        if not (variance > 0.0 and math.isfinite(variance)):
            raise ParameterError(f"variance must be positive and finite, got {variance}")
    mean = float(mean)
    variance = float(variance)
    return DistributionSpec(
        family=fam,
        mean=mean,
        variance=variance,
        shape=mean * mean / variance,
        rate=mean / variance,
    )


def pdf(d: DistributionSpec, t: float) -> float:
    """Density at ``t``; zero for t < 0 (diverges at 0+ when shape < 1)."""
    if t < 0.0:
        return 0.0
    if t == 0.0:
        if d.shape < 1.0:
            return math.inf
        return d.rate if d.shape == 1.0 else 0.0
    k, lam = d.shape, d.rate
    return math.exp(k * math.log(lam) + (k - 1.0) * math.log(t) - lam * t - math.lgamma(k))


def _check_s(s: float) -> float:
    if s < 0.0 or not math.isfinite(s):
        raise ParameterError(f"transform argument must be >= 0 and finite, got {s}")
    return float(s)


def laplace(d: DistributionSpec, s: float) -> float:
    """Laplace transform E[exp(-s T)] = (rate/(rate+s))^shape, in (0, 1]."""
    s = _check_s(s)
    if s == 0.0:
        return 1.0
    return math.exp(-d.shape * math.log1p(s / d.rate))


def _laplace_complement(d: DistributionSpec, s: float) -> float:
    # 1 - laplace(d, s) at full relative precision even when the transform
    # is within an ulp of 1
    return -math.expm1(-d.shape * math.log1p(s / d.rate))


def _laplace_diff(d: DistributionSpec, s: float, ds: float) -> float:
    # laplace(d, s) - laplace(d, s + ds) >= 0 at full relative precision;
    # the naive subtraction loses all digits when ds << s
    step = d.shape * math.log1p(ds / (d.rate + s))
    return laplace(d, s) * -math.expm1(-step)


def weighted_moment(d: DistributionSpec, s: float) -> float:
    """E[T exp(-s T)] = shape * rate^shape / (rate+s)^(shape+1), in seconds.

    Equals -d/ds of :func:`laplace`; reduces to the mean at s = 0.
    """
    s = _check_s(s)
    return (d.shape / (d.rate + s)) * laplace(d, s)


def residual_laplace(d: DistributionSpec, s: float) -> float:
    """Transform of the equilibrium (residual-life) law: (1 - f*(s))/(s mean).

    The s = 0 removable singularity is handled explicitly (limit 1).
    """
    s = _check_s(s)
    if s == 0.0:
        return 1.0
    return _laplace_complement(d, s) / (s * d.mean)


def residual_weighted_moment(d: DistributionSpec, s: float) -> float:
    """E[psi exp(-s psi)] for psi with the equilibrium law, in seconds.

    Computed as (1 - f*(s) - s E[T e^{-sT}]) / (mean s^2); the s = 0 limit is
    the classic residual-life mean (variance + mean^2) / (2 mean).
    """
    s = _check_s(s)
    if s == 0.0:
        return (d.variance + d.mean * d.mean) / (2.0 * d.mean)
    return (_laplace_complement(d, s) - s * weighted_moment(d, s)) / (d.mean * s * s)


class RandomStream:
    """Single-owner deterministic uniform source.

    Identical (seed, stream_id) pairs yield identical draw sequences no matter
    how many streams run concurrently; concurrency is achieved by giving each
    worker its own stream, never by sharing one.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        if not isinstance(stream_id, int) or stream_id < 0:
            raise ParameterError(f"stream_id must be a nonnegative integer, got {stream_id!r}")
        self.seed = seed
        self.stream_id = stream_id
        self.bit_generator = PCG64(SeedSequence(seed, spawn_key=(stream_id,)))
        # bound method; draws uniforms in [0, 1) straight off the bit stream
        self.next_double: Callable[[], float] = Generator(self.bit_generator).random


# --- canonical scalar samplers -------------------------------------------
#
# These are the reference implementations of the draw algorithms. The
# compiled kernel (_simcore.pyx) mirrors them operation for operation so
# that, fed the same bit stream, both backends produce bitwise-identical
# draws. Any change here must be mirrored there.


def _std_normal(nd: Callable[[], float]) -> float:
    u1 = nd()
    u2 = nd()
    return math.sqrt(-2.0 * math.log1p(-u1)) * math.cos(_TWO_PI * u2)


def _gamma_std_ge1(nd: Callable[[], float], shape: float) -> float:
    # Marsaglia-Tsang squeeze method, valid for shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _std_normal(nd)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = nd()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def _gamma_std(nd: Callable[[], float], shape: float) -> float:
    if shape < 1.0:
        # boost: draw Gamma(shape+1) and apply the power-of-uniform correction
        y = _gamma_std_ge1(nd, shape + 1.0)
        w = 1.0 - nd()
        return y * math.pow(w, 1.0 / shape)
    return _gamma_std_ge1(nd, shape)


def _draw(nd: Callable[[], float], is_exp: bool, shape: float, rate: float) -> float:
    if is_exp:
        return -math.log1p(-nd()) / rate
    return _gamma_std(nd, shape) / rate


def _draw_residual(nd: Callable[[], float], is_exp: bool, shape: float, rate: float) -> float:
    # equilibrium draw: length-biased sample (Gamma(shape+1)) times uniform age
    k = 1.0 if is_exp else shape
    x = _gamma_std_ge1(nd, k + 1.0) / rate
    return nd() * x


def sample(d: DistributionSpec, rs: RandomStream) -> float:
    """Draw one residence time from ``d``."""
    return _draw(rs.next_double, d.family == EXPONENTIAL, d.shape, d.rate)


def residual_sample(d: DistributionSpec, rs: RandomStream) -> float:
    """Draw from the equilibrium (residual-life) distribution of ``d``."""
    return _draw_residual(rs.next_double, d.family == EXPONENTIAL, d.shape, d.rate)

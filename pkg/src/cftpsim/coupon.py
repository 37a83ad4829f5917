"""Coupon-collector moments, the standardized Gumbel law, and a
standalone coupon-time sampler for calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng

EULER_GAMMA = 0.5772156649015329
GUMBEL_SLOPE = math.pi / math.sqrt(6.0)  # 1.2825498301618641


@dataclass(frozen=True)
class CouponMoments:
    """Exact mean and variance of the coupon collector time over m items."""

    m: int
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def coupon_moments(m: int) -> CouponMoments:
    """mean = m * H_m, variance = m**2 * H_m^(2) - m * H_m.

    Harmonic numbers are accumulated with compensated summation from the
    smallest terms; relative error stays below 1e-12 up to m = 1e8.
    """
    if m < 1:
        raise ValueError(f"item count must be >= 1, got {m}")
    h1, h2 = _kernels.harmonic_sums(m)
    mean = m * h1
    return CouponMoments(m=m, mean=mean, variance=m * m * h2 - mean)


def gumbel_cdf(x):
    """Distribution function of the zero-mean unit-variance Gumbel law,
    G(x) = exp(-exp(-(pi/sqrt(6)) x - gamma))."""
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-np.exp(-GUMBEL_SLOPE * x - EULER_GAMMA))
    return out if out.ndim else float(out)


def gumbel_pdf(x):
    """Density of the zero-mean unit-variance Gumbel law."""
    x = np.asarray(x, dtype=np.float64)
    z = GUMBEL_SLOPE * x + EULER_GAMMA
    out = GUMBEL_SLOPE * np.exp(-z - np.exp(-z))
    return out if out.ndim else float(out)


def coupon_time(m: int, seed: int, replica: int = 0) -> int:
    """Simulate uniform draws over m items until every item is seen.

    The sampler consumes one (index, uniform) pair per step, matching the
    per-step noise layout of the coupling kernels, so a coupling run with
    the same seed draws the identical item sequence.
    """
    if m < 1:
        raise ValueError(f"item count must be >= 1, got {m}")
    state = np.uint64(rng.stream_state(seed, replica))
    w, _ = _kernels.coupon_run(m, state)
    return int(w)


def coupon_tail(m: int, t_max: int) -> np.ndarray:
    """Exact P(W > t) for t = 0..t_max by inclusion-exclusion:
    P(W > t) = sum_{k=1}^{m} (-1)^(k+1) C(m,k) (1 - k/m)^t."""
    t = np.arange(t_max + 1, dtype=np.float64)
    tail = np.zeros(t_max + 1)
    for k in range(1, m + 1):
        sign = 1.0 if k % 2 == 1 else -1.0
        tail += sign * math.comb(m, k) * (1.0 - k / m) ** t
    return np.clip(tail, 0.0, 1.0)

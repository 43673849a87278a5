"""Matching-bit detection test with exact binomial FPR/TPR.

Under the null hypothesis each decoded bit agrees with the reference with
probability ``p_o`` independently, so the matched count M is Binomial(k, p_o)
and the tail ``P(M > tau)`` equals the regularised incomplete beta function
``I_p(tau + 1, k - tau)``. Images are flagged when ``M > tau``, matching the
summation bounds of that tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-15
TINY = 1e-300
MAX_ITER = 1000


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionParams:
    k: int
    tau: int
    p_o: float = 0.5
    p_w: float = 1.0

    def __post_init__(self):
        if not 0 <= self.tau <= self.k:
            raise StatsError(f"tau {self.tau} outside [0, {self.k}]")
        for name in ("p_o", "p_w"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise StatsError(f"{name}={p} outside [0, 1]")

    @property
    def fpr(self) -> float:
        return fpr_at_tau(self.k, self.tau, self.p_o)

    @property
    def tpr(self) -> float:
        return tpr_at_tau(self.k, self.tau, self.p_w)


@dataclass(frozen=True)
class DetectionResult:
    matched: int
    tau: int
    fpr_at_tau: float
    decision: bool
    bit_accuracy: float


def _bits(w) -> np.ndarray:
    return np.asarray(getattr(w, "bits", w), dtype=bool).ravel()


def matching_bits(w, w2) -> int:
    a, b = _bits(w), _bits(w2)
    if a.shape != b.shape:
        raise StatsError(f"length mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(a == b))


def bit_accuracy(w, w2) -> float:
    return matching_bits(w, w2) / _bits(w).size


# ---------------------------------------------------------------------------
# regularised incomplete beta

def _betacf(p: float, a: float, b: float) -> float:
    """Continued fraction for I_p(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * p / qap
    if abs(d) < TINY:
        d = TINY
    d = 1.0 / d
    h = d
    for m in range(1, MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * p / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * p / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise StatsError(f"continued fraction did not converge for p={p}, a={a}, b={b}")


def _log_prefactor(p: float, a: float, b: float) -> float:
    # log of p^a (1-p)^b / (a B(a, b))
    return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
            + a * math.log(p) + b * math.log1p(-p) - math.log(a))


def reg_inc_beta(p: float, a: float, b: float) -> float:
    """Regularised incomplete beta function I_p(a, b)."""
    if not (a > 0 and b > 0):
        raise StatsError(f"a and b must be positive (a={a}, b={b})")
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise StatsError(f"p={p} outside [0, 1]")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    # the fraction converges fast for p < (a+1)/(a+b+2); otherwise use
    # I_p(a, b) = 1 - I_{1-p}(b, a)
    if p < (a + 1.0) / (a + b + 2.0):
        return math.exp(_log_prefactor(p, a, b)) * _betacf(p, a, b)
    q = 1.0 - p
    return 1.0 - math.exp(_log_prefactor(q, b, a)) * _betacf(q, b, a)


# ---------------------------------------------------------------------------
# closed-form rates

def _check_rate_args(k: int, tau: int, p: float) -> None:
    if k < 1:
        raise StatsError(f"k={k} must be positive")
    if not 0 <= tau <= k:
        raise StatsError(f"tau={tau} outside [0, {k}]")
    if not 0.0 <= p <= 1.0:
        raise StatsError(f"p={p} outside [0, 1]")


def binomial_tail(k: int, tau: int, p: float) -> float:
    """P(M > tau) for M ~ Binomial(k, p) via I_p(tau + 1, k - tau)."""
    _check_rate_args(k, tau, p)
    if tau >= k:
        return 0.0
    return reg_inc_beta(p, tau + 1.0, float(k - tau))


def fpr_at_tau(k: int, tau: int, p_o: float = 0.5) -> float:
    return binomial_tail(k, tau, p_o)


def tpr_at_tau(k: int, tau: int, p_w: float) -> float:
    return binomial_tail(k, tau, p_w)


def tau_for_target_fpr(k: int, p_o: float, target_fpr: float) -> int:
    """Smallest tau with ``fpr_at_tau(k, tau, p_o) <= target_fpr``."""
    if k < 1:
        raise StatsError(f"k={k} must be positive")
    for tau in range(k + 1):
        if fpr_at_tau(k, tau, p_o) <= target_fpr:
            return tau
    return k


def verify(decoded, truth, k: int | None = None, p_o: float = 0.5,
           target_fpr: float = 1e-3) -> DetectionResult:
    matched = matching_bits(decoded, truth)
    n = _bits(truth).size
    if k is not None and k != n:
        raise StatsError(f"length mismatch: k={k} but messages have {n} bits")
    tau = tau_for_target_fpr(n, p_o, target_fpr)
    return DetectionResult(
        matched=matched,
        tau=tau,
        fpr_at_tau=fpr_at_tau(n, tau, p_o),
        decision=matched > tau,
        bit_accuracy=matched / n,
    )

"""Large-deviations rate estimation and closed-form bound constants.

All functions here are pure.  Monte Carlo input arrives as arrays of
tradeoff values ``K_T``; everything else is arithmetic on rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, HorizonTooSmallError, SearchExhaustedError

DEFAULT_SEARCH_CAP = 10_000
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class LdpEstimate:
    """Per-horizon estimates of ``(1/T) log P[K_T <= c1 T]``.

    ``log_probs[i]`` is ``None`` for zero-count horizons; those carry the
    rule-of-three bound ``(1/T) log(3/n)`` in ``upper_bounds[i]`` instead.
    ``rate_estimate`` is the largest value over the upper half of the
    horizons, a finite-sample stand-in for the limsup.
    """

    c1: float
    horizons: tuple
    n_samples: tuple
    p_hat: tuple
    log_probs: tuple
    upper_bounds: tuple
    flagged: tuple
    rate_estimate: float | None
    status: str

    @property
    def decays(self) -> bool:
        return self.rate_estimate is not None and self.rate_estimate < 0

    def supports_rate(self, c2: float) -> bool:
        """Whether the proxy is consistent with decay faster than ``c2``."""
        return self.rate_estimate is not None and self.rate_estimate < -c2


STATUS_ESTIMATED = "estimated"
STATUS_UPPER_BOUND = "upper bound (zero-count horizons use the rule of three)"
STATUS_ANY_C2 = "decay consistent with any c2"
STATUS_INCONCLUSIVE = "inconclusive"


def estimate_ldp_rate(tradeoff_samples: Mapping[float, np.ndarray], c1: float,
                      use_bound: bool = True, min_samples: int = 1000) -> LdpEstimate:
    if len(tradeoff_samples) < 3:
        raise ConfigurationError(f"need at least 3 horizons, got {len(tradeoff_samples)}")
    horizons = sorted(float(T) for T in tradeoff_samples)
    by_T = {float(T): np.asarray(v, dtype=float) for T, v in tradeoff_samples.items()}
    n_samples, p_hat, log_probs, bounds, flagged = [], [], [], [], []
    for T in horizons:
        x = by_T[T]
        if x.size < min_samples:
            raise ConfigurationError(f"horizon {T:g} has {x.size} samples, need at least {min_samples}")
        count = int(np.count_nonzero(x <= c1 * T))
        n_samples.append(x.size)
        p_hat.append(count / x.size)
        if count == 0:
            flagged.append(True)
            log_probs.append(None)
            bounds.append(math.log(3.0 / x.size) / T)
        else:
            flagged.append(False)
            log_probs.append(math.log(count / x.size) / T)
            bounds.append(None)

    upper = range(len(horizons) // 2, len(horizons))
    values = [log_probs[i] if not flagged[i] else (bounds[i] if use_bound else None) for i in upper]
    values = [v for v in values if v is not None]
    if all(flagged):
        status = STATUS_ANY_C2 if use_bound else STATUS_INCONCLUSIVE
    elif any(flagged[i] for i in upper):
        status = STATUS_UPPER_BOUND if use_bound else STATUS_ESTIMATED
    else:
        status = STATUS_ESTIMATED
    rate = max(values) if values else None
    if rate is None:
        status = STATUS_INCONCLUSIVE
    return LdpEstimate(float(c1), tuple(horizons), tuple(n_samples), tuple(p_hat), tuple(log_probs),
                       tuple(bounds), tuple(flagged), rate, status)


@dataclass(frozen=True)
class BoundConstants:
    c1: float
    c2: float
    delta: float
    gamma1: float
    gamma2: float
    C_tilde: float
    T0: int

    @property
    def log_C_tilde(self) -> float:
        return math.log(self.C_tilde)


def _check_rates(c1, c2, delta):
    if not c1 > 0:
        raise DomainError(f"c1 must be positive, got {c1}")
    if not c2 > 0:
        raise DomainError(f"c2 must be positive, got {c2}")
    if not 0 < delta < c1 / 2:
        raise DomainError(f"delta must satisfy 0 < δ < c₁/2 (c1/2 = {c1 / 2:g}), got {delta}")


def bound_constants(c1: float, c2: float, delta: float, ldp: LdpEstimate | None = None,
                    cap: int = DEFAULT_SEARCH_CAP) -> BoundConstants:
    """Constants ``gamma1 = min((c1 - 2 delta)^2 / (8 c1), c2 / 2)``, ``gamma2 = delta`` and
    ``C_tilde = sqrt(2 c1) / ((c1 - 2 delta) sqrt(pi)) + 1``, plus the horizon ``T0``.

    ``T0`` is the smallest integer with ``C_tilde exp(-gamma1 T0) < 1``.  When
    an estimate is supplied it must also exceed every observed horizon where
    ``P[K_T <= c1 T] > exp(-c2 T / 2)``, so the tail condition holds on all
    observed horizons from ``T0`` on.
    """
    _check_rates(c1, c2, delta)
    gamma1 = min((c1 - 2 * delta) ** 2 / (8 * c1), c2 / 2)
    gamma2 = delta
    C_tilde = math.sqrt(2 * c1) / ((c1 - 2 * delta) * math.sqrt(math.pi)) + 1
    T0 = max(1, math.floor(math.log(C_tilde) / gamma1))
    while C_tilde * math.exp(-gamma1 * T0) >= 1:
        T0 += 1
    if ldp is not None:
        for T, p in zip(ldp.horizons, ldp.p_hat):
            if p > math.exp(-c2 * T / 2) and T >= T0:
                T0 = math.floor(T) + 1
    if T0 > cap:
        raise SearchExhaustedError(f"T0 = {T0} exceeds the search cap {cap}")
    return BoundConstants(float(c1), float(c2), float(delta), gamma1, gamma2, C_tilde, int(T0))


def gaussian_tail_bound(a: float, b: float) -> float:
    """``exp(-a^2 b^2 / 2) / (sqrt(2 pi) a)``, an upper bound for ``P[U > a b]`` when ``b >= 1``."""
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if not b >= 1:
        raise DomainError(f"b must be >= 1, got {b}")
    return math.exp(-0.5 * (a * b) ** 2) / (math.sqrt(2 * math.pi) * a)


@dataclass(frozen=True)
class CascadeParams:
    T: float
    alpha: float
    eps1: float
    eps2: float
    eps1_tilde: float
    eps2_tilde: float
    gamma3: float
    gamma4: float
    C: float
    T_tilde: int
    beyond_T_tilde: bool


def _check_gamma3(gamma2, gamma3):
    if not 0 < 2 * gamma3 < gamma2 / 2:
        raise DomainError(f"gamma3 must satisfy 0 < 2γ₃ < γ₂/2 (gamma2 = {gamma2:g}), got {gamma3}")


def cascade_params(constants: BoundConstants, T: float, gamma3: float | None = None,
                   cap: int = DEFAULT_SEARCH_CAP) -> CascadeParams:
    g1, g2, logC = constants.gamma1, constants.gamma2, constants.log_C_tilde
    gamma3 = g2 / 8 if gamma3 is None else gamma3
    _check_gamma3(g2, gamma3)
    if not g1 * T > logC:
        raise HorizonTooSmallError(
            f"gamma1 * T = {g1 * T:.6g} must exceed log C_tilde = {logC:.6g} (T = {T:g})")
    alpha = (logC - g1 * T) / (-g2 * T)
    eps1 = constants.C_tilde * math.exp(-g1 * T)
    eps2 = math.exp(-g2 * T)
    lead = 2.0 ** (1 + g1 / g2)
    _, gamma4, C = certificate_constants(constants, gamma3)
    _, T_tilde = find_gamma3_Ttilde(constants, gamma3, cap)
    return CascadeParams(
        T=float(T), alpha=alpha, eps1=eps1, eps2=eps2,
        eps1_tilde=lead * math.sqrt(eps1), eps2_tilde=math.sqrt(eps2),
        gamma3=gamma3, gamma4=gamma4, C=C,
        T_tilde=T_tilde, beyond_T_tilde=T >= T_tilde,
    )


def check_eps_arbitrage_condition(eps1: float, eps2: float, eps1_tilde: float, eps2_tilde: float,
                                  alpha: float) -> bool:
    """``2^(1 + alpha) max(eps1, eps2^alpha) <= eps1_tilde * eps2_tilde^alpha``."""
    for name, v in (("eps1", eps1), ("eps2", eps2), ("eps1_tilde", eps1_tilde), ("eps2_tilde", eps2_tilde)):
        if not 0 < v < 1:
            raise DomainError(f"{name} must lie in (0, 1), got {v}")
    if not 0 < alpha < math.inf:
        raise DomainError(f"alpha must be positive and finite, got {alpha}")
    return 2.0 ** (1 + alpha) * max(eps1, eps2**alpha) <= eps1_tilde * eps2_tilde**alpha


def scaling_condition(gamma2: float, gamma3: float, T) -> np.ndarray:
    """``exp((gamma2/2 - gamma3) T) - 1 >= exp(gamma3 T)``, evaluated in log space."""
    T = np.asarray(T, dtype=float)
    a = (gamma2 / 2 - gamma3) * T
    b = gamma3 * T
    with np.errstate(divide="ignore"):
        return b + np.log(np.expm1(a - b)) >= 0


def small_eps1_condition(constants: BoundConstants, T) -> np.ndarray:
    """``2^(1 + gamma1/gamma2) sqrt(C_tilde exp(-gamma1 T)) < 1``, in log space."""
    T = np.asarray(T, dtype=float)
    g1, g2 = constants.gamma1, constants.gamma2
    return (1 + g1 / g2) * LOG2 + 0.5 * (constants.log_C_tilde - g1 * T) < 0


def find_gamma3_Ttilde(constants: BoundConstants, gamma3: float | None = None,
                       cap: int = DEFAULT_SEARCH_CAP) -> tuple[float, int]:
    """Pick ``gamma3`` (default ``gamma2 / 8``) and the smallest integer ``T_tilde >= T0``
    from which both cascade conditions hold on every integer up to ``cap``."""
    g2 = constants.gamma2
    gamma3 = g2 / 8 if gamma3 is None else gamma3
    _check_gamma3(g2, gamma3)
    T = np.arange(constants.T0, cap + 1)
    if T.size == 0:
        raise SearchExhaustedError(f"T0 = {constants.T0} exceeds the search cap {cap}")
    ok = scaling_condition(g2, gamma3, T) & small_eps1_condition(constants, T)
    # suffix-and: conditions must persist from T_tilde to the cap
    persist = np.flip(np.logical_and.accumulate(np.flip(ok)))
    if not persist[-1]:
        raise SearchExhaustedError(f"no T_tilde found up to the search cap {cap}")
    return gamma3, int(T[np.argmax(persist)])


def certificate_constants(constants: BoundConstants, gamma3: float | None = None) -> tuple[float, float, float]:
    """``(gamma3, gamma4, C)`` with ``gamma4 = gamma1 / 2`` and ``C = 2^(1 + gamma1/gamma2) sqrt(C_tilde)``.

    These do not depend on the horizon, so they are available even where
    the per-horizon cascade is not yet defined.
    """
    g1, g2 = constants.gamma1, constants.gamma2
    gamma3 = g2 / 8 if gamma3 is None else gamma3
    _check_gamma3(g2, gamma3)
    return gamma3, g1 / 2, 2.0 ** (1 + g1 / g2) * math.sqrt(constants.C_tilde)


def alpha_limit(constants: BoundConstants) -> float:
    return constants.gamma1 / constants.gamma2


def horizon_grid(start: int, count: int, step: int = 1) -> Sequence[int]:
    return list(range(start, start + count * step, step))

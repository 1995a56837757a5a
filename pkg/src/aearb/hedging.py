"""Explicit long-term arbitrage in the complete constant-phi model.

The claim ``1_{A^c} - Q[A^c]`` is a digital option on the driving Brownian
motion at the deterministic time where the bracket reaches ``c1 T``.  It is
replicated by a discrete delta hedge in the traded asset, scaled
exponentially in the horizon, and checked against the two conditions of
asymptotic exponential arbitrage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError, ModelMismatchError, UnsupportedModelError
from .measure import density_process, failure_set_indicator, time_change, ExtendedMartingale
from .sde import ModelSpec, PathEnsemble, TimeGrid

_SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class DigitalClaim:
    """Deterministic data of the digital claim on a given grid.

    In the coordinate ``u = phi W`` the complement of the failure set is
    ``{u_tau >= u_cut}``.  Under ``Q`` the process ``u + phi^2 t`` is a
    Brownian motion with variance rate ``phi^2`` and the claim pays when it
    ends above ``x_cut``.
    """

    horizon: float
    c1: float
    delta: float
    phi: float
    tau_index: int
    tau: float
    bracket_at_tau: float
    u_cut: float
    w_cutoff: float
    x_cut: float
    s_cutoff: float | None
    cost: float


def _check_model(model: ModelSpec, c1: float):
    if model.d != 1 or model.n_noise != 1 or not model.complete:
        raise UnsupportedModelError("digital replication needs a complete model with d = N = 1")
    if not model.constant_phi:
        raise UnsupportedModelError("digital replication needs a constant market price of risk")
    if not model.phi_norm2 > c1:
        raise ModelMismatchError(
            f"phi^2 = {model.phi_norm2:g} must exceed c1 = {c1:g} so the bracket reaches c1 T before T")


def digital_claim(model: ModelSpec, grid: TimeGrid, c1: float, delta: float) -> DigitalClaim:
    _check_model(model, c1)
    if not 0 < delta < c1 / 2:
        raise DomainError(f"delta must satisfy 0 < δ < c₁/2, got {delta}")
    T = grid.horizon
    phi = float(model.phi_value[0])
    phi2 = model.phi_norm2
    times = grid.times
    # same expression as the tradeoff path so tau matches the time change exactly
    bracket = phi2 * times
    tau_index = int(np.argmax(bracket >= c1 * T))
    tau = float(times[tau_index])
    b = float(bracket[tau_index])
    u_cut = delta * T - 0.5 * b
    x_cut = delta * T + 0.5 * b
    cost = float(ndtr(-x_cut / math.sqrt(b)))
    s_cut = None
    p = model.params
    if model.kind == "constant_phi" and p.get("geometric") and phi > 0:
        sig = p["sigma"]
        s_cut = p["s0"] * math.exp(sig * u_cut / phi + (sig * phi - 0.5 * sig**2) * tau)
    return DigitalClaim(T, c1, delta, phi, tau_index, tau, b, u_cut, u_cut / phi, x_cut, s_cut, cost)


@dataclass(frozen=True)
class HedgingStrategy:
    """Self-financing delta hedge of the digital claim along an ensemble.

    ``position[k]`` units of the asset are held over ``[t_k, t_{k+1})``; the
    rest of the value sits in cash at zero rate.  ``value`` starts at
    ``initial_cost``.
    """

    claim: DigitalClaim
    freeze_index: int
    position: np.ndarray  # (n_steps, n)
    value: np.ndarray  # (n_points, n)
    payoff: np.ndarray  # (n,)

    @property
    def maturity(self) -> float:
        return self.claim.tau

    @property
    def threshold(self) -> float | None:
        return self.claim.s_cutoff

    @property
    def initial_cost(self) -> float:
        return self.claim.cost

    @property
    def terminal_value(self) -> np.ndarray:
        return self.value[-1]

    @property
    def claim_value(self) -> np.ndarray:
        """Zero-cost claim ``X_bar``: terminal hedge value minus the initial cost."""
        return self.terminal_value - self.initial_cost

    @property
    def replication_error(self) -> np.ndarray:
        return self.terminal_value - self.payoff


def digital_replication_strategy(model: ModelSpec, paths: PathEnsemble, c1: float, delta: float,
                                 freeze_fraction: float = 0.01) -> HedgingStrategy:
    """Delta-hedge ``1_{A^c}`` from cost ``Q[A^c]``.

    Over the last ``freeze_fraction`` of the steps before maturity the
    position is closed out and the value is held in cash.
    """
    if not 0 <= freeze_fraction < 1:
        raise ConfigurationError(f"freeze_fraction must lie in [0, 1), got {freeze_fraction}")
    grid = paths.grid
    claim = digital_claim(model, grid, c1, delta)
    phi, b_rate = claim.phi, model.phi_norm2
    n_steps, n = grid.n_steps, len(paths)
    times = grid.times
    k_tau = claim.tau_index
    freeze = k_tau - math.ceil(freeze_fraction * k_tau)

    W = paths.W[:, :, 0]
    x = phi * (W + phi * times[:, None])  # Q-Brownian coordinate with rate phi^2
    position = np.zeros((n_steps, n))
    if freeze > 0:
        rem = b_rate * (claim.tau - times[:freeze])  # remaining Q-variance of x
        sd = np.sqrt(rem)[:, None]
        z = (claim.x_cut - x[:freeze]) / sd
        dV_dx = np.exp(-0.5 * z * z) / (_SQRT_2PI * sd)
        sig = model.sigma(paths.S[:freeze].reshape(-1, 1), paths.Y[:freeze].reshape(freeze * n, -1))
        position[:freeze] = dV_dx * phi / sig.reshape(freeze, n)
    gains = position * np.diff(paths.S[:, :, 0], axis=0)
    value = np.empty((n_steps + 1, n))
    value[0] = claim.cost
    np.cumsum(gains, axis=0, out=value[1:])
    value[1:] += claim.cost

    density = density_process(paths, model)
    ext = ExtendedMartingale(density.times, density.L, density.bracket, n_steps, density)
    in_A = failure_set_indicator(time_change(ext, c1 * grid.horizon), delta, grid.horizon)
    return HedgingStrategy(claim, max(freeze, 0), position, value, (~in_A).astype(float))


def hedge_stats(paths: PathEnsemble, model: ModelSpec, c1: float, delta: float,
                freeze_fraction: float = 0.01) -> dict:
    """Per-path hedge summaries for one chunk (keeps memory per chunk bounded)."""
    h = digital_replication_strategy(model, paths, c1, delta, freeze_fraction)
    return {
        "terminal_value": h.terminal_value.copy(),
        "min_value": h.value.min(axis=0),
        "payoff": h.payoff,
    }


def scaled_payoff(claim: np.ndarray, gamma2: float, gamma3: float, T: float) -> np.ndarray:
    """``X_T = exp((gamma2/2 - gamma3) T) * X_bar_T``."""
    if not 0 < 2 * gamma3 < gamma2 / 2:
        raise DomainError(f"gamma3 must satisfy 0 < 2γ₃ < γ₂/2, got gamma2={gamma2}, gamma3={gamma3}")
    exponent = (gamma2 / 2 - gamma3) * T
    if exponent > 700:
        raise OverflowError(f"scale factor exp({exponent:.1f}) overflows; report X_T in log space instead")
    return math.exp(exponent) * np.asarray(claim, dtype=float)


def log_scale(gamma2: float, gamma3: float, T: float) -> float:
    return (gamma2 / 2 - gamma3) * T


@dataclass(frozen=True)
class HorizonCheck:
    T: float
    gamma3: float
    gamma4: float
    C: float
    n: int
    min_X: float
    floor: float
    tolerance: float
    failure_prob: float
    failure_se: float
    bound: float
    log_failure_prob: float | None
    log_bound: float
    pass_a: bool
    pass_b: bool

    @property
    def passed(self) -> bool:
        return self.pass_a and self.pass_b


@dataclass(frozen=True)
class ArbitrageCertificate:
    rows: tuple = field(default_factory=tuple)

    @property
    def horizons(self) -> list[float]:
        return [r.T for r in self.rows]

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.passed for r in self.rows)

    @property
    def failure_nonincreasing(self) -> bool:
        p = [r.failure_prob for r in self.rows]
        return all(b <= a for a, b in zip(p, p[1:]))


def verify_definition(samples: Mapping[float, np.ndarray], gamma3: float, gamma4: float, C: float,
                      tolerances: Mapping[float, float] | None = None, min_horizons: int = 2,
                      min_samples: int = 1000) -> ArbitrageCertificate:
    """Check ``min X_T >= -exp(-gamma3 T) - tol`` and
    ``P[X_T <= exp(gamma3 T)] <= C exp(-gamma4 T) + 3 SE`` at each horizon."""
    if len(samples) < min_horizons:
        raise ConfigurationError(f"need at least {min_horizons} horizons, got {len(samples)}")
    tolerances = tolerances or {}
    rows = []
    for T in sorted(samples):
        X = np.asarray(samples[T], dtype=float)
        if X.size < min_samples:
            raise ConfigurationError(f"horizon {T:g} has {X.size} samples, need at least {min_samples}")
        tol = float(tolerances.get(T, 0.0))
        floor = -math.exp(-gamma3 * T)
        fail = X <= math.exp(gamma3 * T)
        p = float(fail.mean())
        se = float(math.sqrt(p * (1 - p) / X.size))
        log_bound = math.log(C) - gamma4 * T
        bound = math.exp(log_bound)
        min_X = float(X.min())
        rows.append(HorizonCheck(
            T=float(T), gamma3=gamma3, gamma4=gamma4, C=C, n=X.size, min_X=min_X, floor=floor,
            tolerance=tol, failure_prob=p, failure_se=se, bound=bound,
            log_failure_prob=math.log(p) if p > 0 else None, log_bound=log_bound,
            pass_a=bool(min_X >= floor - tol), pass_b=bool(p <= bound + 3 * se),
        ))
    return ArbitrageCertificate(tuple(rows))


def admissibility_check(value: np.ndarray, floor: float, tol: float = 0.0) -> bool:
    """Whether the value (gain) path stays at or above ``-floor - tol`` everywhere."""
    return bool(np.all(np.asarray(value) >= -floor - tol))

"""Density processes of equivalent martingale measures along simulated paths.

For a path ensemble simulated under ``P`` this module builds the exponent
martingale ``L = -int phi dW + N`` of a measure ``Q``, its density
``Z = exp(L - <L>/2)``, extends ``L`` past the horizon, time-changes it by
its bracket and evaluates the failure set ``{Z at the stopped time > e^{-delta T}}``
under both measures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError
from .rng import CONTINUATION_NOISE, ORTHOGONAL_NOISE, path_normals
from .sde import (
    ModelSpec,
    PathEnsemble,
    TimeGrid,
    continue_paths,
    map_ensemble,
    stochastic_exponential,
)


@dataclass(frozen=True)
class OrthogonalSpec:
    """Orthogonal component ``N = nu * B`` with ``B`` independent of the model noise."""

    mode: str = "none"
    nu: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "independent_bm"):
            raise ConfigurationError(f"unknown orthogonal mode {self.mode!r}")
        if not (self.nu >= 0 and math.isfinite(self.nu)):
            raise ConfigurationError(f"nu must be >= 0, got {self.nu}")
        if self.mode == "none" and self.nu != 0:
            raise ConfigurationError("mode 'none' requires nu == 0")

    @classmethod
    def independent_bm(cls, nu: float) -> "OrthogonalSpec":
        return cls("independent_bm", float(nu))

    @property
    def active(self) -> bool:
        return self.mode == "independent_bm" and self.nu > 0


@dataclass(frozen=True)
class DensityPath:
    """Density process data for a batch of paths, time-major ``(n_points, n)``."""

    times: np.ndarray
    L: np.ndarray
    bracket: np.ndarray
    Z: np.ndarray
    K: np.ndarray
    orth_bracket: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def density_process(paths: PathEnsemble, model: ModelSpec, orth: OrthogonalSpec | None = None) -> DensityPath:
    orth = orth or OrthogonalSpec()
    n_steps, n, N = paths.dW.shape
    if N != model.n_noise or paths.S.shape[2] != model.d:
        raise ShapeError("path ensemble does not match the model dimensions")
    grid = paths.grid
    times = grid.times
    if model.constant_phi:
        dL = -(paths.dW @ model.phi_value)
    else:
        s = paths.S[:-1].reshape(n_steps * n, model.d)
        y = paths.Y[:-1].reshape(n_steps * n, model.k)
        ph = np.asarray(model.phi(s, y)).reshape(n_steps, n, N)
        dL = -np.einsum("tpn,tpn->tp", ph, paths.dW)
    K = paths.K
    if orth.active:
        dB = path_normals(paths.seed, paths.path_ids, n_steps, 1, ORTHOGONAL_NOISE)[:, :, 0]
        dL = dL + orth.nu * math.sqrt(grid.dt) * dB
        ob = np.broadcast_to((orth.nu**2 * times)[:, None], K.shape)
        bracket = K + ob
    else:
        ob = np.broadcast_to(np.zeros((times.size, 1)), K.shape)
        bracket = K
    L = np.zeros((n_steps + 1, n))
    np.cumsum(dL, axis=0, out=L[1:])
    return DensityPath(times, L, bracket, stochastic_exponential(L, bracket), K, ob)


@dataclass(frozen=True)
class ExtendedMartingale:
    """``L`` continued past the horizon; equals ``base.L`` up to ``base_index``."""

    times: np.ndarray
    L: np.ndarray
    bracket: np.ndarray
    base_index: int
    base: DensityPath | None = None


def extend_martingale(density: DensityPath, paths: PathEnsemble, model: ModelSpec,
                      target_horizon: float, mode: str = "model") -> ExtendedMartingale:
    """Extend ``L`` to ``target_horizon`` on the same step size.

    ``mode="model"`` keeps simulating the model and adds ``-int phi dW`` with
    fresh continuation noise, so the bracket keeps growing like the tradeoff
    process.  ``mode="brownian"`` appends an independent standard Brownian
    motion instead.
    """
    grid = paths.grid
    T = grid.horizon
    if target_horizon < T:
        raise ConfigurationError(f"target_horizon {target_horizon} is below the horizon {T}")
    n_base = grid.n_steps
    n_extra = int(round((target_horizon - T) / grid.dt))
    if n_extra == 0:
        return ExtendedMartingale(density.times, density.L, density.bracket, n_base, density)

    times = grid.times_to(n_base + n_extra)
    n = len(paths)
    if mode == "model":
        dW, S, Y, K_extra = continue_paths(model, paths, n_extra)
        if model.constant_phi:
            dL = -(dW @ model.phi_value)
        else:
            ph = np.asarray(model.phi(S[:-1].reshape(-1, model.d), Y[:-1].reshape(-1, model.k)))
            dL = -np.einsum("tpn,tpn->tp", ph.reshape(n_extra, n, model.n_noise), dW)
        br_extra = K_extra[1:]
    elif mode == "brownian":
        dB = path_normals(paths.seed, paths.path_ids, n_extra, 1, CONTINUATION_NOISE)[:, :, 0] * math.sqrt(grid.dt)
        dL = dB
        br_extra = np.broadcast_to((times[n_base + 1:] - T)[:, None], (n_extra, n))
    else:
        raise ConfigurationError(f"unknown extension mode {mode!r}")

    L = np.empty((n_base + n_extra + 1, n))
    L[: n_base + 1] = density.L
    L[n_base + 1:] = density.L[-1] + np.cumsum(dL, axis=0)
    bracket = np.empty_like(L)
    bracket[: n_base + 1] = density.bracket
    bracket[n_base + 1:] = density.bracket[-1] + br_extra
    return ExtendedMartingale(times, L, bracket, n_base, density)


@dataclass(frozen=True)
class TimeChangeRecord:
    """First bracket crossings of ``level`` for a batch of paths.

    ``tau_index`` is ``-1`` and ``tau_time``/``stopped_L`` are NaN where the
    level is not reached on the extended grid.  ``stopped_Z`` is the density
    at ``min(tau, T)`` read from the unextended path.
    """

    level: float
    tau_index: np.ndarray
    tau_time: np.ndarray
    stopped_L: np.ndarray
    stopped_index: np.ndarray
    stopped_Z: np.ndarray
    reached: np.ndarray


NOT_REACHED = -1


def time_change(extended: ExtendedMartingale, level: float) -> TimeChangeRecord:
    if not level > 0:
        raise ConfigurationError(f"level must be positive, got {level}")
    hit = extended.bracket >= level
    first = np.argmax(hit, axis=0)
    cols = np.arange(hit.shape[1])
    reached = hit[first, cols]
    tau_index = np.where(reached, first, NOT_REACHED)
    tau_time = np.where(reached, extended.times[first], np.nan)
    stopped_L = np.where(reached, extended.L[first, cols], np.nan)
    stopped_index = np.where(reached, np.minimum(first, extended.base_index), extended.base_index)
    if extended.base is not None:
        stopped_Z = extended.base.Z[stopped_index, cols]
    else:
        stopped_Z = np.full(cols.size, np.nan)
    return TimeChangeRecord(float(level), tau_index, tau_time, stopped_L, stopped_index, stopped_Z, reached)


def failure_set_indicator(record: TimeChangeRecord, delta: float, horizon: float) -> np.ndarray:
    """Membership in ``A = {Z at min(tau, T) > exp(-delta T)}`` per path."""
    return record.stopped_Z > math.exp(-delta * horizon)


@dataclass(frozen=True)
class PQEstimate:
    """Monte Carlo estimates of ``P[A]`` and ``Q[A]``.

    ``q_hat`` is ``1 - mean(Z 1_{A^c})``: on the complement the weights are
    bounded by ``exp(-delta T)`` so its variance stays small.  The direct
    estimator ``mean(Z 1_A)`` is kept as ``q_hat_direct``; its weights are
    lognormal with variance ``exp(<L>) - 1`` and become unusable at long
    horizons.  ``mass_hat`` is the sample mean of ``Z``.
    """

    n: int
    p_hat: float
    p_se: float
    q_hat: float
    q_se: float
    q_hat_direct: float
    q_se_direct: float
    mass_hat: float
    mass_se: float


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def estimate_pq_probabilities(indicator: np.ndarray, stopped_Z: np.ndarray, min_paths: int = 100) -> PQEstimate:
    indicator = np.asarray(indicator, dtype=bool)
    stopped_Z = np.asarray(stopped_Z, dtype=float)
    if indicator.shape != stopped_Z.shape:
        raise ShapeError("indicator and stopped_Z must have the same shape")
    if indicator.size < min_paths:
        raise ConfigurationError(f"need at least {min_paths} paths, got {indicator.size}")
    p_hat, p_se = _mean_se(indicator.astype(float))
    comp, comp_se = _mean_se(np.where(indicator, 0.0, stopped_Z))
    direct, direct_se = _mean_se(np.where(indicator, stopped_Z, 0.0))
    mass, mass_se = _mean_se(stopped_Z)
    return PQEstimate(indicator.size, p_hat, p_se, 1.0 - comp, comp_se, direct, direct_se, mass, mass_se)


@dataclass(frozen=True)
class FailureSetSample:
    """Per-path outputs of the failure-set pipeline for one horizon."""

    horizon: float
    level: float
    delta: float
    indicator: np.ndarray
    stopped_Z: np.ndarray
    stopped_L: np.ndarray
    tau_time: np.ndarray
    reached: np.ndarray
    K_T: np.ndarray
    bracket_T: np.ndarray

    def estimate(self) -> PQEstimate:
        return estimate_pq_probabilities(self.indicator, self.stopped_Z)


def failure_set_stats(paths: PathEnsemble, model: ModelSpec, c1: float, delta: float,
                      orth: OrthogonalSpec | None = None, extend_factor: float = 2.0) -> dict:
    """Failure-set statistics for one chunk, as a dict of per-path arrays."""
    T = paths.grid.horizon
    level = c1 * T
    density = density_process(paths, model, orth)
    if np.all(density.bracket[-1] >= level):
        ext = ExtendedMartingale(density.times, density.L, density.bracket, paths.grid.n_steps, density)
    else:
        ext = extend_martingale(density, paths, model, extend_factor * T)
    rec = time_change(ext, level)
    return {
        "indicator": failure_set_indicator(rec, delta, T),
        "stopped_Z": rec.stopped_Z,
        "stopped_L": rec.stopped_L,
        "tau_time": rec.tau_time,
        "reached": rec.reached,
        "K_T": np.array(density.K[-1]),
        "bracket_T": np.array(density.bracket[-1]),
    }


def concat_stats(chunks: list[dict]) -> dict:
    return {key: np.concatenate([c[key] for c in chunks]) for key in chunks[0]}


def run_failure_set(model: ModelSpec, grid: TimeGrid, n_paths: int, seed: int, c1: float, delta: float,
                    orth: OrthogonalSpec | None = None, extend_factor: float = 2.0,
                    chunk_size: int | None = None, threads: int = 1) -> FailureSetSample:
    """Stream the ensemble through density, extension, time change and failure set."""
    if not 0 < delta < c1 / 2:
        raise ConfigurationError(f"delta must satisfy 0 < δ < c₁/2, got delta={delta}, c1={c1}")
    chunks = map_ensemble(lambda p: failure_set_stats(p, model, c1, delta, orth, extend_factor),
                          model, grid, n_paths, seed, chunk_size, threads)
    s = concat_stats(chunks)
    return FailureSetSample(grid.horizon, c1 * grid.horizon, delta, s["indicator"], s["stopped_Z"],
                            s["stopped_L"], s["tau_time"], s["reached"], s["K_T"], s["bracket_T"])

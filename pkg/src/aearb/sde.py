"""Euler-Maruyama simulation of diffusion market models.

Prices follow ``dS = sigma(S, Y) (dW + phi(S, Y) dt)`` where ``Y`` is an
optional factor process driven by the same Brownian motion.  Paths are
stored time-major: scalar paths have shape ``(n_points, n_paths)`` and
vector paths ``(n_points, n_paths, dim)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError, SimulationError
from .rng import CONTINUATION_NOISE, MODEL_NOISE, path_normals

# bytes per path step the chunker budgets for (dW, S, M, A, L, Z, slack)
_BYTES_PER_POINT = 8 * 10
DEFAULT_MEMORY_BUDGET = 256 * 2**20


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 2:
            raise ConfigurationError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError(f"horizon must be positive and finite, got {self.horizon!r}")

    @classmethod
    def with_rate(cls, horizon: float, steps_per_unit: int) -> "TimeGrid":
        return cls(float(horizon), int(round(horizon * steps_per_unit)))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        return self.times_to(self.n_steps)

    def times_to(self, last_index: int) -> np.ndarray:
        # horizon * k / n keeps t_n == horizon exactly and lets extended
        # grids reproduce the base grid bit for bit
        return self.horizon * np.arange(last_index + 1) / self.n_steps


Map = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Market model ``dS = sigma (dW + phi dt)`` with an optional factor ``Y``.

    All maps are vectorised over a leading batch axis:

    * ``sigma(s, y)`` -> ``(n, d, N)``
    * ``phi(s, y)`` -> ``(n, N)``, the market price of risk in noise coordinates
    * ``lam(s, y)`` -> ``(n, d)``, the same in asset coordinates (optional)
    * ``factor_drift(y)`` -> ``(n, k)`` and ``factor_vol(y)`` -> ``(n, k, N)``
    """

    d: int
    n_noise: int
    s0: np.ndarray
    sigma: Map
    phi: Map
    lam: Map | None = None
    y0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    factor_drift: Callable[[np.ndarray], np.ndarray] | None = None
    factor_vol: Callable[[np.ndarray], np.ndarray] | None = None
    constant_phi: bool = False
    complete: bool = False
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "s0", np.atleast_1d(np.asarray(self.s0, dtype=float)))
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
        if self.s0.shape != (self.d,):
            raise ConfigurationError(f"s0 must have shape ({self.d},), got {self.s0.shape}")
        if self.y0.size and (self.factor_drift is None or self.factor_vol is None):
            raise ConfigurationError("a factor state needs factor_drift and factor_vol")
        if self.complete and self.d != self.n_noise:
            raise ConfigurationError("complete models need d == n_noise")

    @property
    def k(self) -> int:
        return self.y0.size

    @property
    def phi_value(self) -> np.ndarray:
        """The constant market price of risk; only for ``constant_phi`` models."""
        if not self.constant_phi:
            raise ConfigurationError("phi is state dependent in this model")
        return np.asarray(self.phi(self.s0[None, :], self.y0[None, :]), dtype=float)[0]

    @property
    def phi_norm2(self) -> float:
        return float(np.sum(self.phi_value**2))


def constant_phi_model(phi: float, sigma: float, s0: float = 1.0, geometric: bool = True) -> ModelSpec:
    """One asset, one noise, constant market price of risk.

    With ``geometric`` the volatility is ``sigma * S`` (Black-Scholes),
    otherwise it is the constant ``sigma`` (Bachelier).
    """
    phi = float(phi)
    sigma = float(sigma)

    if geometric:
        def sig(s, y):
            return (sigma * s)[:, :, None]

        def lam(s, y):
            return phi / (sigma * s)
    else:
        def sig(s, y):
            return np.full((s.shape[0], 1, 1), sigma)

        def lam(s, y):
            return np.full(s.shape, phi / sigma)

    def ph(s, y):
        return np.full((s.shape[0], 1), phi)

    return ModelSpec(
        d=1, n_noise=1, s0=[s0], sigma=sig, phi=ph, lam=lam,
        constant_phi=True, complete=True, kind="constant_phi",
        params={"phi": phi, "sigma": sigma, "s0": float(s0), "geometric": geometric},
    )


def ou_phi_model(kappa: float, eta: float, phi0: float, sigma: float = 0.2, s0: float = 1.0) -> ModelSpec:
    """Geometric price whose market price of risk is an OU factor.

    ``dphi = -kappa phi dt + eta dB`` with ``B`` independent of the noise
    driving ``S``, so the market is incomplete (``d = 1``, ``N = 2``).
    """
    kappa, eta, sigma = float(kappa), float(eta), float(sigma)

    def sig(s, y):
        out = np.zeros((s.shape[0], 1, 2))
        out[:, 0, 0] = sigma * s[:, 0]
        return out

    def ph(s, y):
        out = np.zeros((s.shape[0], 2))
        out[:, 0] = y[:, 0]
        return out

    def lam(s, y):
        return y[:, :1] / (sigma * s)

    def drift(y):
        return -kappa * y

    def vol(y):
        out = np.zeros((y.shape[0], 1, 2))
        out[:, 0, 1] = eta
        return out

    return ModelSpec(
        d=1, n_noise=2, s0=[s0], sigma=sig, phi=ph, lam=lam, y0=[phi0],
        factor_drift=drift, factor_vol=vol, kind="ou_phi",
        params={"kappa": kappa, "eta": eta, "phi0": float(phi0), "sigma": sigma, "s0": float(s0)},
    )


@dataclass(frozen=True)
class PathBundle:
    """A single simulated scenario."""

    grid: TimeGrid
    path_index: int
    dW: np.ndarray  # (n_steps, N)
    S: np.ndarray  # (n_points, d)
    M: np.ndarray
    A: np.ndarray
    K: np.ndarray  # (n_points,)
    Y: np.ndarray  # (n_points, k)


@dataclass(frozen=True)
class PathEnsemble:
    """A batch of paths sharing a grid, stored time-major."""

    grid: TimeGrid
    seed: int
    path_ids: np.ndarray
    dW: np.ndarray  # (n_steps, n, N)
    S: np.ndarray  # (n_points, n, d)
    M: np.ndarray
    A: np.ndarray
    K: np.ndarray  # (n_points, n); may be a read-only broadcast view
    Y: np.ndarray  # (n_points, n, k)

    def __len__(self):
        return self.path_ids.size

    def __getitem__(self, i: int) -> PathBundle:
        return PathBundle(self.grid, int(self.path_ids[i]), self.dW[:, i], self.S[:, i],
                          self.M[:, i], self.A[:, i], self.K[:, i], self.Y[:, i])

    @property
    def W(self) -> np.ndarray:
        """Brownian paths ``(n_points, n, N)`` rebuilt from the increments."""
        W = np.zeros((self.grid.n_points,) + self.dW.shape[1:])
        np.cumsum(self.dW, axis=0, out=W[1:])
        return W


def _constant_tradeoff(model: ModelSpec, times: np.ndarray, n_paths: int) -> np.ndarray:
    K = model.phi_norm2 * times
    return np.broadcast_to(K[:, None], (times.size, n_paths))


def _euler(model: ModelSpec, s_start: np.ndarray, y_start: np.ndarray, dW: np.ndarray,
           dt: float, path_ids: np.ndarray, step_offset: int = 0):
    """Run the scheme from ``(s_start, y_start)`` over the given increments.

    Returns ``(S, M, A, Y, K)`` with ``M``, ``A`` and ``K`` null at the start
    and ``S = s_start + M + A`` evaluated exactly that way at every point.
    """
    n_steps, n, _ = dW.shape
    d, k = model.d, model.k
    S = np.empty((n_steps + 1, n, d))
    M = np.zeros((n_steps + 1, n, d))
    A = np.zeros((n_steps + 1, n, d))
    Y = np.empty((n_steps + 1, n, k))
    S[0] = s_start
    Y[0] = y_start
    K = None if model.constant_phi else np.zeros((n_steps + 1, n))
    # overflow shows up as non-finite state and is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n_steps):
            s, y = S[j], Y[j]
            sig = model.sigma(s, y)
            ph = model.phi(s, y)
            M[j + 1] = M[j] + np.einsum("pij,pj->pi", sig, dW[j])
            A[j + 1] = A[j] + np.einsum("pij,pj->pi", sig, ph) * dt
            S[j + 1] = s_start + M[j + 1] + A[j + 1]
            if k:
                Y[j + 1] = y + model.factor_drift(y) * dt + np.einsum("pij,pj->pi", model.factor_vol(y), dW[j])
            if K is not None:
                K[j + 1] = K[j] + np.sum(ph * ph, axis=1) * dt
            bad = ~np.isfinite(S[j + 1]).all(axis=1)
            if k:
                bad |= ~np.isfinite(Y[j + 1]).all(axis=1)
            if bad.any():
                p = int(path_ids[np.argmax(bad)])
                raise SimulationError(f"non-finite state on path {p} at step {step_offset + j + 1}",
                                      path_index=p, step=step_offset + j + 1)
    return S, M, A, Y, K


def simulate_paths(model: ModelSpec, grid: TimeGrid, n_paths: int, seed: int, start: int = 0) -> PathEnsemble:
    """Simulate paths ``start, ..., start + n_paths - 1`` of the ensemble.

    Path ``i`` is a deterministic function of ``(seed, i)``: batching an
    ensemble into chunks reproduces the unbatched result bit for bit.
    """
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    ids = np.arange(start, start + n_paths, dtype=np.int64)
    dW = path_normals(seed, ids, grid.n_steps, model.n_noise, MODEL_NOISE) * math.sqrt(grid.dt)
    S, M, A, Y, K = _euler(model, model.s0, model.y0, dW, grid.dt, ids)
    if K is None:
        K = _constant_tradeoff(model, grid.times, n_paths)
    return PathEnsemble(grid, int(seed), ids, dW, S, M, A, K, Y)


def continue_paths(model: ModelSpec, paths: PathEnsemble, n_steps: int):
    """Continue each path past its horizon with fresh continuation noise.

    Returns ``(dW, S, Y, K_increment)`` over the ``n_steps`` additional
    steps; ``S`` and ``Y`` start at the horizon state and ``K_increment`` is
    null there.
    """
    grid = paths.grid
    dW = path_normals(paths.seed, paths.path_ids, n_steps, model.n_noise, CONTINUATION_NOISE) * math.sqrt(grid.dt)
    S, _, _, Y, K = _euler(model, paths.S[-1], paths.Y[-1], dW, grid.dt, paths.path_ids,
                           step_offset=grid.n_steps)
    if K is None:
        extra = grid.horizon * np.arange(n_steps + 1) / grid.n_steps
        K = _constant_tradeoff(model, extra, len(paths))
    return dW, S, Y, K


def default_chunk_size(grid: TimeGrid, budget: int = DEFAULT_MEMORY_BUDGET) -> int:
    return max(1, budget // (_BYTES_PER_POINT * grid.n_points))


def map_ensemble(fn, model: ModelSpec, grid: TimeGrid, n_paths: int, seed: int,
                 chunk_size: int | None = None, threads: int = 1) -> list:
    """Apply ``fn(ensemble)`` to consecutive chunks of the ensemble.

    Results come back in path order regardless of ``threads``, so reductions
    over them are deterministic.
    """
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    chunk_size = chunk_size or default_chunk_size(grid)
    starts = range(0, n_paths, chunk_size)

    def work(start):
        return fn(simulate_paths(model, grid, min(chunk_size, n_paths - start), seed, start))

    if threads <= 1:
        return [work(s) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, starts))


def stochastic_exponential(L: np.ndarray, bracket: np.ndarray) -> np.ndarray:
    """``exp(L - bracket / 2)`` pointwise along the paths."""
    L = np.asarray(L, dtype=float)
    bracket = np.asarray(bracket, dtype=float)
    if L.shape != bracket.shape:
        raise ShapeError(f"L has shape {L.shape} but bracket has shape {bracket.shape}")
    return np.exp(L - 0.5 * bracket)


def realized_quadratic_variation(path: np.ndarray) -> np.ndarray:
    """Running sum of squared increments along axis 0, null at the start."""
    path = np.asarray(path, dtype=float)
    if path.ndim == 0 or path.shape[0] < 2:
        raise ShapeError("path needs at least 2 points")
    qv = np.zeros_like(path)
    np.cumsum(np.diff(path, axis=0) ** 2, axis=0, out=qv[1:])
    return qv


def lambda_path(paths: PathEnsemble, model: ModelSpec) -> np.ndarray:
    """Asset-coordinate market price of risk at every grid point, ``(n_points, n, d)``."""
    if model.lam is None:
        raise ConfigurationError("model does not provide lam")
    n_points, n, d = paths.S.shape
    lam = model.lam(paths.S.reshape(-1, d), paths.Y.reshape(n_points * n, -1))
    return np.asarray(lam).reshape(n_points, n, d)


def tradeoff_from_lambda(lam: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Realised ``int lam' d<M> lam`` using left-point ``lam`` and squared increments of ``M``.

    ``lam`` and ``M`` have shape ``(n_points, ...)`` with the asset
    dimension last; the result drops that axis.
    """
    lam = np.asarray(lam, dtype=float)
    M = np.asarray(M, dtype=float)
    if lam.shape != M.shape:
        raise ShapeError(f"lam has shape {lam.shape} but M has shape {M.shape}")
    incr = np.sum(lam[:-1] * np.diff(M, axis=0), axis=-1) ** 2
    K = np.zeros(M.shape[:-1])
    np.cumsum(incr, axis=0, out=K[1:])
    return K


def glue_market_price_of_risk(times: np.ndarray, segments: Sequence[np.ndarray | None]) -> np.ndarray:
    """Piece together per-horizon ``lam`` paths on ``((n-1), n]``.

    ``segments[n-1]`` is the path obtained for horizon ``n`` and must be
    given on the common grid ``times``.  The point ``t = 0`` takes the first
    segment's value.
    """
    times = np.asarray(times, dtype=float)
    idx = np.maximum(np.ceil(times).astype(int), 1) - 1
    needed = int(idx.max()) + 1
    if len(segments) < needed or any(segments[n] is None for n in range(needed)):
        missing = [n + 1 for n in range(needed) if n >= len(segments) or segments[n] is None]
        raise ConfigurationError(f"missing market price of risk segment(s) for horizon(s) {missing}")
    stacked = []
    for n in range(needed):
        seg = np.asarray(segments[n], dtype=float)
        if seg.shape[0] != times.size:
            raise ShapeError(f"segment {n + 1} has {seg.shape[0]} points, grid has {times.size}")
        stacked.append(seg)
    stacked = np.stack(stacked)
    return stacked[idx, np.arange(times.size)]

"""End-to-end experiment: simulate, estimate, bound, hedge and certify.

``run_experiment`` is a pure function of the config (seed included).  Wall
clock timings are collected separately and never enter the report body.
"""
from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import (
    BoundConstants,
    CascadeParams,
    LdpEstimate,
    STATUS_ANY_C2,
    bound_constants,
    cascade_params,
    certificate_constants,
    estimate_ldp_rate,
)
from .config import AUTO, ExperimentConfig
from .errors import AearbError, ExperimentError, HorizonTooSmallError, SearchExhaustedError
from .hedging import ArbitrageCertificate, digital_claim, hedge_stats, log_scale, scaled_payoff, verify_definition
from .measure import concat_stats, estimate_pq_probabilities, failure_set_stats
from .sde import ModelSpec, TimeGrid, map_ensemble

ERROR_QUANTILES = (0.5, 0.9, 0.99, 0.999, 1.0)


@dataclass(frozen=True)
class ProbabilityRow:
    """``P[A]`` against its upper bound and ``Q[A]`` against its lower bound.

    Margins are ``bound - estimate`` for both, so a positive ``p_margin``
    and a negative ``q_margin`` are the favourable signs.
    """

    T: int
    p_hat: float
    p_se: float
    p_bound: float
    p_margin: float
    q_hat: float
    q_se: float
    q_bound: float
    q_margin: float
    q_hat_direct: float
    mass_hat: float
    mass_se: float
    n: int
    passed: bool


@dataclass(frozen=True)
class CascadeRow:
    T: int
    status: str
    params: CascadeParams | None = None


@dataclass(frozen=True)
class HedgeSummary:
    """Digital hedge diagnostics at one horizon.

    ``max_shortfall`` is the largest amount by which a terminal hedge value
    falls below zero; times the payoff scale it is the grid tolerance of the
    floor check.  ``admissible`` asks whether the value path ever drops
    below ``-max_shortfall``.
    """

    T: int
    tau: float
    cost: float
    s_cutoff: float | None
    w_cutoff: float
    freeze_index: int
    log_scale: float
    rms_error: float
    error_quantiles: tuple
    max_shortfall: float
    tolerance: float
    min_value: float
    admissible: bool


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seed: int
    code_version: str


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    provenance: Provenance
    bound_constants: BoundConstants
    ldp_estimate: LdpEstimate | None
    probability_table: tuple
    cascade_params: tuple
    hedging: tuple
    arbitrage_certificate: ArbitrageCertificate | None
    certificate_status: str
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        """Certificate outcome, or the probability table where no certificate applies."""
        if self.arbitrage_certificate is not None:
            return self.arbitrage_certificate.passed
        return all(r.passed for r in self.probability_table)


@contextmanager
def _stage(module: str, parameter: str):
    try:
        yield
    except ExperimentError:
        raise
    except (AearbError, ValueError, ArithmeticError) as exc:
        raise ExperimentError(module, parameter, exc) from exc


class _Clock:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def _ldp_samples(model: ModelSpec, cfg: ExperimentConfig, threads: int) -> dict:
    sim = cfg.simulation
    n = sim.ldp_paths or sim.n_paths
    out = {}
    for T in sim.ldp_horizons:
        if model.constant_phi:
            # the tradeoff is deterministic, so every path carries the same value
            out[T] = np.full(n, model.phi_norm2 * T)
            continue
        grid = TimeGrid.with_rate(T, sim.steps_per_unit)
        chunks = map_ensemble(lambda p: np.array(p.K[-1]), model, grid, n, sim.seed, sim.chunk_size, threads)
        out[T] = np.concatenate(chunks)
    return out


def _resolve_c2(cfg: ExperimentConfig, delta: float, ldp: LdpEstimate | None) -> float:
    b = cfg.bounds
    if b.c2 != AUTO:
        return float(b.c2)
    # value at which gamma1 stops depending on c2
    tie = (b.c1 - 2 * delta) ** 2 / (4 * b.c1)
    if ldp is None or ldp.status == STATUS_ANY_C2:
        return tie
    if not ldp.decays:
        raise ExperimentError("ldp-bounds", "c2", f"no exponential decay detected (rate proxy {ldp.rate_estimate})")
    return -ldp.rate_estimate


def _horizon_stats(paths, model, cfg: ExperimentConfig, delta: float, hedge: bool) -> dict:
    b = cfg.bounds
    out = failure_set_stats(paths, model, b.c1, delta, b.orthogonal, b.extend_factor)
    if hedge:
        h = hedge_stats(paths, model, b.c1, delta, b.freeze_fraction)
        out.update({f"hedge_{k}": v for k, v in h.items()})
    return out


def _hedge_summary(T, claim, stats, log_sc, freeze_index) -> HedgeSummary:
    terminal = stats["hedge_terminal_value"]
    err = terminal - stats["hedge_payoff"]
    # the payoff is non-negative, so any terminal value below zero is hedging error
    shortfall = max(0.0, float(-terminal.min()))
    min_value = float(stats["hedge_min_value"].min())
    return HedgeSummary(
        T=T, tau=claim.tau, cost=claim.cost, s_cutoff=claim.s_cutoff, w_cutoff=claim.w_cutoff,
        freeze_index=freeze_index, log_scale=log_sc,
        rms_error=float(np.sqrt(np.mean(err**2))),
        error_quantiles=tuple((q, float(np.quantile(np.abs(err), q))) for q in ERROR_QUANTILES),
        max_shortfall=shortfall, tolerance=math.exp(log_sc) * shortfall,
        min_value=min_value, admissible=bool(min_value >= -shortfall),
    )


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    clock = _Clock()
    sim, b = config.simulation, config.bounds
    with _stage("sde-core", "model"):
        model = config.model.build()
    delta = b.resolved_delta
    # the explicit hedge targets the failure set of the minimal measure, so no orthogonal part
    hedgeable = (model.complete and model.constant_phi and model.d == 1
                 and model.phi_norm2 > b.c1 and not b.orthogonal.active)

    ldp = None
    if sim.ldp_horizons:
        with clock("ldp"), _stage("ldp-bounds", "ldp_horizons"):
            ldp = estimate_ldp_rate(_ldp_samples(model, config, threads), b.c1,
                                    min_samples=min(1000, sim.ldp_paths or sim.n_paths))

    with _stage("ldp-bounds", "c1/c2/delta"):
        c2 = _resolve_c2(config, delta, ldp)
        constants = bound_constants(b.c1, c2, delta, ldp)
    with _stage("arbitrage-engine", "gamma3"):
        gamma3, gamma4, C = certificate_constants(constants, b.resolved_gamma3)

    rows, cascades, hedges, samples, tolerances = [], [], [], {}, {}
    for T in sim.horizons:
        grid = TimeGrid.with_rate(T, sim.steps_per_unit)
        with clock(f"horizon_{T}"), _stage("measure-lab", f"horizon {T}"):
            chunks = map_ensemble(lambda p: _horizon_stats(p, model, config, delta, hedgeable),
                                  model, grid, sim.n_paths, sim.seed, sim.chunk_size, threads)
            stats = concat_stats(chunks)
            est = estimate_pq_probabilities(stats["indicator"], stats["stopped_Z"])
        p_bound = constants.C_tilde * math.exp(-constants.gamma1 * T)
        q_bound = -math.expm1(-constants.gamma2 * T)
        rows.append(ProbabilityRow(
            T=T, p_hat=est.p_hat, p_se=est.p_se, p_bound=p_bound, p_margin=p_bound - est.p_hat,
            q_hat=est.q_hat, q_se=est.q_se, q_bound=q_bound, q_margin=q_bound - est.q_hat,
            q_hat_direct=est.q_hat_direct, mass_hat=est.mass_hat, mass_se=est.mass_se, n=est.n,
            passed=bool(est.p_hat <= p_bound + 3 * est.p_se and est.q_hat >= q_bound - 3 * est.q_se),
        ))

        try:
            cascades.append(CascadeRow(T, "ok", cascade_params(constants, T, gamma3)))
        except (HorizonTooSmallError, SearchExhaustedError) as exc:
            cascades.append(CascadeRow(T, f"not applicable: {exc}"))

        if hedgeable:
            with _stage("arbitrage-engine", f"horizon {T}"):
                claim = digital_claim(model, grid, b.c1, delta)
                log_sc = log_scale(constants.gamma2, gamma3, T)
                freeze = claim.tau_index - math.ceil(b.freeze_fraction * claim.tau_index)
                summary = _hedge_summary(T, claim, stats, log_sc, max(freeze, 0))
                samples[T] = scaled_payoff(stats["hedge_terminal_value"] - claim.cost,
                                           constants.gamma2, gamma3, T)
                tolerances[T] = summary.tolerance
            hedges.append(summary)

    certificate = None
    if hedgeable:
        with _stage("arbitrage-engine", "certificate"):
            certificate = verify_definition(samples, gamma3, gamma4, C, tolerances, min_horizons=1,
                                            min_samples=min(1000, sim.n_paths))
        status = "pass" if certificate.passed else "fail"
    else:
        status = "not applicable: explicit hedge needs a complete constant-phi model with phi^2 > c1 and nu = 0"

    return ExperimentReport(
        config=config.to_dict(),
        provenance=Provenance(config.config_hash(), sim.seed, __version__),
        bound_constants=constants,
        ldp_estimate=ldp,
        probability_table=tuple(rows),
        cascade_params=tuple(cascades),
        hedging=tuple(hedges),
        arbitrage_certificate=certificate,
        certificate_status=status,
        timings=clock.timings,
    )

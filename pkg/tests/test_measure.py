import math

import numpy as np
import pytest
from scipy.stats import norm

from aearb.errors import ConfigurationError, ShapeError
from aearb.measure import (
    ExtendedMartingale,
    NOT_REACHED,
    OrthogonalSpec,
    density_process,
    estimate_pq_probabilities,
    extend_martingale,
    failure_set_indicator,
    failure_set_stats,
    run_failure_set,
    time_change,
)
from aearb.sde import TimeGrid, constant_phi_model, map_ensemble, ou_phi_model, simulate_paths


def closed_form_pq(c1, delta, T):
    v = c1 * T
    p = norm.sf((v / 2 - delta * T) / math.sqrt(v))
    q = norm.cdf((v / 2 + delta * T) / math.sqrt(v))
    return p, q


@pytest.mark.parametrize("mode,nu", [("bogus", 0.0), ("none", 1.0), ("independent_bm", -1.0)])
def test_orthogonal_spec_validation(mode, nu):
    with pytest.raises(ConfigurationError):
        OrthogonalSpec(mode, nu)


def test_constant_phi_density_closed_form():
    m = constant_phi_model(0.6, 0.2)
    p = simulate_paths(m, TimeGrid(3.0, 300), 10, seed=1)
    d = density_process(p, m)
    W = p.W[:, :, 0]
    t = p.grid.times[:, None]
    np.testing.assert_allclose(d.L, -0.6 * W, atol=1e-12)
    np.testing.assert_allclose(d.Z, np.exp(-0.6 * W - 0.18 * t), rtol=1e-10)
    assert np.all(d.Z[0] == 1)


def test_density_rejects_mismatched_model():
    p = simulate_paths(constant_phi_model(0.6, 0.2), TimeGrid(1.0, 10), 3, seed=0)
    with pytest.raises(ShapeError):
        density_process(p, ou_phi_model(1.0, 1.0, 0.0))


def test_orthogonal_part_adds_to_bracket():
    m = ou_phi_model(1.0, 1.0, 0.4)
    p = simulate_paths(m, TimeGrid(2.0, 200), 30, seed=2)
    d = density_process(p, m, OrthogonalSpec.independent_bm(0.5))
    np.testing.assert_allclose(d.bracket - d.K, 0.25 * p.grid.times[:, None] * np.ones((1, 30)))
    assert np.all(d.bracket >= d.K)


@pytest.mark.parametrize("model,orth", [
    (constant_phi_model(0.6, 0.2), None),
    (ou_phi_model(1.0, 1.0, 0.5), None),
    (ou_phi_model(1.0, 1.0, 0.5), OrthogonalSpec.independent_bm(0.3)),
])
def test_density_has_unit_mean(model, orth):
    g = TimeGrid(2.0, 200)
    Z = np.concatenate(map_ensemble(lambda p: density_process(p, model, orth).Z[-1], model, g, 20000, seed=3))
    se = Z.std(ddof=1) / math.sqrt(Z.size)
    assert abs(Z.mean() - 1) < 3 * se


def test_extension_model_mode_continues_bracket():
    m = constant_phi_model(0.4, 0.2)
    p = simulate_paths(m, TimeGrid(5.0, 500), 8, seed=4)
    d = density_process(p, m)
    ext = extend_martingale(d, p, m, 10.0)
    assert ext.L.shape == (1001, 8)
    np.testing.assert_array_equal(ext.L[:501], d.L)
    np.testing.assert_allclose(ext.bracket[:, 0], 0.16 * ext.times, rtol=1e-12, atol=1e-12)


def test_extension_brownian_mode_has_unit_rate():
    m = ou_phi_model(1.0, 1.0, 0.0)
    p = simulate_paths(m, TimeGrid(1.0, 100), 4, seed=5)
    d = density_process(p, m)
    ext = extend_martingale(d, p, m, 3.0, mode="brownian")
    np.testing.assert_allclose(ext.bracket[-1] - d.bracket[-1], 2.0)
    with pytest.raises(ConfigurationError):
        extend_martingale(d, p, m, 3.0, mode="other")
    with pytest.raises(ConfigurationError):
        extend_martingale(d, p, m, 0.5)


def test_time_change_first_crossing_and_sentinel():
    times = np.arange(5.0)
    br = np.array([[0, 0], [1, 0.5], [2, 0.5], [3, 0.5], [4, 0.5]], dtype=float)
    L = np.arange(10.0).reshape(5, 2)
    rec = time_change(ExtendedMartingale(times, L, br, 4), 2.5)
    assert rec.tau_index.tolist() == [3, NOT_REACHED]
    assert rec.tau_time[0] == 3.0 and math.isnan(rec.tau_time[1])
    assert rec.stopped_L[0] == 6.0
    assert rec.reached.tolist() == [True, False]
    with pytest.raises(ConfigurationError):
        time_change(ExtendedMartingale(times, L, br, 4), 0.0)


def test_stopped_value_is_gaussian_with_level_variance():
    m = constant_phi_model(0.6, 0.2)
    g = TimeGrid.with_rate(10, 100)
    level = 2.5

    def stopped(p):
        d = density_process(p, m)
        return time_change(ExtendedMartingale(d.times, d.L, d.bracket, g.n_steps, d), level).stopped_L

    x = np.concatenate(map_ensemble(stopped, m, g, 20000, seed=6))
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean()) < 3 * se
    assert abs(x.var() / level - 1) < 0.05


def test_failure_set_matches_closed_form_at_moderate_horizon():
    m = constant_phi_model(0.6, 0.2)
    T = 20
    sample = run_failure_set(m, TimeGrid.with_rate(T, 50), 20000, seed=7, c1=0.25, delta=0.1)
    est = sample.estimate()
    p, q = closed_form_pq(0.25, 0.1, T)
    assert abs(est.p_hat - p) < 3 * est.p_se
    assert abs(est.q_hat - q) < 3 * est.q_se + 1e-4


def test_failure_set_via_extension_when_bracket_is_slow():
    # phi^2 = 0.16 < c1 = 0.25, so the level is crossed after T
    m = constant_phi_model(0.4, 0.2)
    p = simulate_paths(m, TimeGrid.with_rate(10, 50), 2000, seed=8)
    s = failure_set_stats(p, m, c1=0.25, delta=0.1)
    assert s["reached"].all()
    assert np.all(s["tau_time"] > 10)
    # stopped at T, so the indicator reads Z_T
    d = density_process(p, m)
    np.testing.assert_array_equal(s["indicator"], d.Z[-1] > math.exp(-1.0))


def test_failure_set_indicator_threshold():
    class Rec:
        stopped_Z = np.array([0.5, math.exp(-1.0), 1.0])

    assert failure_set_indicator(Rec, 0.1, 10).tolist() == [True, False, True]


def test_pq_estimator_formulas():
    ind = np.array([True, False, True, False] * 50)
    z = np.array([2.0, 0.1, 1.0, 0.3] * 50)
    est = estimate_pq_probabilities(ind, z)
    assert est.p_hat == 0.5
    assert est.q_hat == pytest.approx(1 - 0.1)
    assert est.q_hat_direct == pytest.approx(0.75)
    assert est.mass_hat == pytest.approx(0.85)
    with pytest.raises(ShapeError):
        estimate_pq_probabilities(ind, z[:-1])
    with pytest.raises(ConfigurationError):
        estimate_pq_probabilities(ind[:10], z[:10])


def test_delta_domain_is_checked():
    m = constant_phi_model(0.6, 0.2)
    with pytest.raises(ConfigurationError, match="δ < c₁/2"):
        run_failure_set(m, TimeGrid(10.0, 100), 200, seed=0, c1=0.25, delta=0.25)

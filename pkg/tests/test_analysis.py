import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning

from gossip_omkl.analysis import (
    BoundInputs,
    batch_objective,
    batch_oracle,
    best_kernel,
    comparator_losses,
    kernel_regret_reports,
    regret_report,
    sublinearity_check,
    theorem_bound,
)
from gossip_omkl.data import make_synthetic, partition
from gossip_omkl.graph import build_topology, consensus_step_size, metropolis_weights
from gossip_omkl.protocol import SimulationConfig, run_simulation
from gossip_omkl.quantizer import compression_delta
from gossip_omkl.rf_kernel import features, sample_feature_map


def newton_oracle(Z, y, reg):
    """Independent second-order solve of the mean regularized KLR objective."""
    n, k = Z.shape

    def f(theta):
        return np.mean(np.logaddexp(0.0, -y * (Z @ theta))) + reg * theta @ theta

    def grad(theta):
        s = expit(-y * (Z @ theta))
        return -(Z.T @ (y * s)) / n + 2 * reg * theta

    def hess(theta):
        s = expit(-y * (Z @ theta))
        return (Z.T * (s * (1 - s))) @ Z / n + 2 * reg * np.eye(k)

    res = minimize(f, np.zeros(k), jac=grad, hess=hess, method="trust-exact", options={"gtol": 1e-12})
    return res.x, res.fun


@pytest.fixture(scope="module")
def tiny():
    ds = make_synthetic(50, 2, 2.0, seed=0)
    fmap = sample_feature_map(1.0, 4, 2, 0)
    return features(fmap, ds.X), ds.y


def test_oracle_matches_newton(tiny):
    Z, y = tiny
    res = batch_oracle(Z, y, 0.001)
    theta, value = newton_oracle(Z, y, 0.001)
    assert res.converged
    assert res.objective == pytest.approx(value, abs=1e-6)
    np.testing.assert_allclose(res.theta, theta, atol=1e-5)


def test_oracle_local_optimality(tiny):
    Z, y = tiny
    res = batch_oracle(Z, y, 0.01)
    rng = np.random.default_rng(0)
    assert res.objective < batch_objective(np.zeros(Z.shape[1]), Z, y, 0.01)
    for _ in range(100):
        assert res.objective <= batch_objective(res.theta + 1e-3 * rng.normal(size=Z.shape[1]), Z, y, 0.01)


def test_oracle_large_regularizer(tiny):
    Z, y = tiny
    res = batch_oracle(Z, y, 1e3)
    # ||z|| = 1 bounds the data gradient by 1
    assert np.linalg.norm(res.theta) <= 1.0 / (2 * 1e3)


def test_oracle_uninformative_data():
    ds = make_synthetic(4000, 2, 0.0, seed=1)
    fmap = sample_feature_map(1.0, 10, 2, 1)
    res = batch_oracle(features(fmap, ds.X), ds.y, 0.001)
    assert res.objective == pytest.approx(math.log(2), abs=0.01)


def test_oracle_reports_nonconvergence(tiny):
    Z, y = tiny
    with pytest.warns(ConvergenceWarning):
        res = batch_oracle(Z, y, 0.0, tol=1e-14, max_iter=3)
    assert not res.converged and res.n_iter == 3 and res.grad_norm > 0


def test_bound_unit_example():
    assert theorem_bound(1, 1, 1.0, 0.0, 0.0, 1, 1.0) == 1.0


def reference_bound(J, T, eta, norm, L, P, c):
    terms = [
        J * norm * norm / (2 * eta),
        eta * J * T * L * L / 2,
        eta * J * T * L * 12 ** 0.5 / c,
        J * np.log(P) / eta,
        eta * J * T,
    ]
    return sum(terms)


def test_bound_experiment_scale_inputs():
    g = metropolis_weights(build_topology("path", 20))
    _, c = consensus_step_size(g.rho, g.beta, compression_delta(20, 7))
    args = (20, 265, 0.01, 3.7, 1.2, 3, c)
    assert theorem_bound(*args) == pytest.approx(reference_bound(*args), rel=1e-14)


def test_bound_blows_up_as_eta_vanishes():
    assert theorem_bound(4, 10, 1e-12, 1.0, 1.0, 2, 0.1) > 1e11


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 50), st.integers(1, 1000), st.floats(1e-3, 1.0), st.floats(0, 10),
    st.floats(0, 10), st.integers(1, 10), st.floats(1e-4, 1.0), st.floats(1.01, 3.0),
)
def test_bound_monotone(J, T, eta, norm, L, P, c, k):
    base = theorem_bound(J, T, eta, norm, L, P, c)
    assert theorem_bound(J, int(T * k) + 1, eta, norm, L, P, c) >= base
    assert theorem_bound(J, T, eta, norm, L * k + 0.1, P, c) >= base
    assert theorem_bound(J, T, eta, norm * k + 0.1, L, P, c) >= base
    assert theorem_bound(J, T, eta, norm, L, P + 1, c) >= base


def inputs(**kw):
    base = dict(n_nodes=2, n_rounds=5, learning_rate=0.1, theta_star_norm=1.0, grad_bound=1.0, n_kernels=2, c=0.1)
    base.update(kw)
    return BoundInputs(**base)


def test_regret_zero_for_own_losses():
    losses = np.random.default_rng(0).random((5, 2))
    rep = regret_report(losses, losses, inputs())
    np.testing.assert_array_equal(rep.regret, 0.0)
    assert rep.holds


def test_regret_against_zero_comparator():
    losses = np.random.default_rng(0).random((5, 2))
    rep = regret_report(losses, np.zeros((5, 2)), inputs())
    np.testing.assert_allclose(rep.regret, np.cumsum(losses.sum(axis=1)))
    assert np.all(np.diff(rep.cumulative_loss) >= 0)
    np.testing.assert_allclose(rep.average_regret, rep.regret / np.arange(1, 6))


def test_regret_length_mismatch():
    with pytest.raises(ValueError):
        regret_report(np.zeros(5), np.zeros(4), inputs())


def test_report_files(tmp_path):
    rep = regret_report(np.ones(3), np.zeros(3), inputs(n_rounds=3), label="demo")
    rep.write(tmp_path / "r.txt", tmp_path / "r.csv")
    text = (tmp_path / "r.txt").read_text()
    assert "regret (LHS) = 3" in text and "LHS <= RHS: True" in text
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 4


def test_sublinearity_examples():
    t = np.arange(1, 2001, dtype=float)
    passed, slope = sublinearity_check(np.full(2000, 0.5), 100)
    assert not passed and slope == pytest.approx(1.0, abs=1e-9)
    avg = np.cumsum(1 / np.sqrt(t)) / t
    passed, slope = sublinearity_check(avg, 100)
    assert passed and slope == pytest.approx(0.5, abs=0.02)
    assert sublinearity_check(np.zeros(2000), 100) == (True, 0.0)
    with pytest.raises(ValueError):
        sublinearity_check(np.zeros(10), 6)


def test_comparator_losses_shape():
    part = partition(make_synthetic(40, 2, 1.0), 4)
    fmap = sample_feature_map(1.0, 3, 2, 0)
    losses = comparator_losses(np.zeros(6), fmap, part, 0.0)
    assert losses.shape == (10, 4)
    np.testing.assert_allclose(losses, math.log(2))


def test_pipeline_bound_holds():
    ds = make_synthetic(2000, 3, 1.5, seed=0)
    part = partition(ds, 4, seed=0)
    cfg = SimulationConfig(n_nodes=4, topology="ring", n_rounds=500, sigmas=(1.0, 3.0), levels=7,
                           n_components=20, learning_rate=0.1, consensus_step="lemma")
    log = run_simulation(cfg, part)
    g = metropolis_weights(build_topology("ring", 4))
    c = g.rho**2 * compression_delta(20, 7) / 82
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        reports = kernel_regret_reports(log, part, cfg.reg, cfg.learning_rate, c)
    assert set(reports) == {0, 1}
    assert all(rep.holds for rep in reports.values())
    assert best_kernel(reports) in reports

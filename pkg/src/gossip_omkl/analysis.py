"""Regret against fixed comparators and the network regret bound."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .learner import klr_gradient, klr_value
from .rf_kernel import features


@dataclass(frozen=True)
class OracleResult:
    theta: np.ndarray
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool


def batch_objective(theta, Z, y, reg) -> float:
    """Mean regularized KLR loss of a fixed ``theta`` over embedded samples ``Z``."""
    return float(np.mean(klr_value(theta, Z, y, reg)))


def _batch_gradient(theta, Z, y, reg):
    return np.mean(klr_gradient(np.broadcast_to(theta, Z.shape), Z, y, reg), axis=0)


def batch_oracle(Z, y, reg: float, tol: float = 1e-8, max_iter: int = 100_000) -> OracleResult:
    """Minimize the mean regularized KLR loss over embedded samples.

    Gradient descent from ``theta = 0`` with Armijo backtracking, stopping
    once the gradient norm is at most ``tol``. Emits a ``ConvergenceWarning``
    when the iteration cap is reached first.

    Parameters
    ----------
    Z : ndarray of shape (n, 2D)
        Random-feature embeddings of the samples.
    y : ndarray of shape (n,)
        Labels in {-1, +1}.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.zeros(Z.shape[1])
    f = batch_objective(theta, Z, y, reg)
    g = _batch_gradient(theta, Z, y, reg)
    step = 1.0
    n_iter = 0
    while n_iter < max_iter:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return OracleResult(theta, f, gnorm, n_iter, True)
        while True:
            cand = theta - step * g
            f_cand = batch_objective(cand, Z, y, reg)
            if f_cand <= f - 0.5 * step * gnorm**2 or step < 1e-12:
                break
            step *= 0.5
        theta, f = cand, f_cand
        g = _batch_gradient(theta, Z, y, reg)
        step *= 2.0
        n_iter += 1
    gnorm = float(np.linalg.norm(g))
    converged = gnorm <= tol
    if not converged:
        warnings.warn(f"batch oracle stopped after {max_iter} iterations with gradient norm {gnorm:.3g}",
                      ConvergenceWarning, stacklevel=2)
    return OracleResult(theta, f, gnorm, n_iter, converged)


def comparator_losses(theta, feature_map, partition, reg) -> np.ndarray:
    """Per-round, per-node loss ``(T, J)`` of a fixed comparator model."""
    Z = features(feature_map, partition.X.reshape(-1, partition.n_features))
    losses = klr_value(np.broadcast_to(theta, Z.shape), Z, partition.y.reshape(-1), reg)
    return losses.reshape(partition.n_rounds, partition.n_nodes)


def theorem_bound(n_nodes, n_rounds, learning_rate, theta_star_norm, grad_bound, n_kernels, c) -> float:
    """Right-hand side of the network regret bound.

    ``J ||theta*||^2 / (2 eta) + eta J T L^2 / 2 + eta J T L sqrt(12) / c
    + J ln P / eta + eta J T``
    """
    J, T, eta, L = n_nodes, n_rounds, learning_rate, grad_bound
    if eta <= 0 or c <= 0:
        raise ValueError("learning rate and c must be positive")
    return (
        J * theta_star_norm**2 / (2.0 * eta)
        + eta * J * T * L**2 / 2.0
        + eta * J * T * L * math.sqrt(12.0) / c
        + J * math.log(n_kernels) / eta
        + eta * J * T
    )


@dataclass(frozen=True)
class BoundInputs:
    n_nodes: int
    n_rounds: int
    learning_rate: float
    theta_star_norm: float
    grad_bound: float
    n_kernels: int
    c: float

    def rhs(self) -> float:
        return theorem_bound(self.n_nodes, self.n_rounds, self.learning_rate,
                             self.theta_star_norm, self.grad_bound, self.n_kernels, self.c)


@dataclass
class RegretReport:
    """Cumulative network loss of a run versus a fixed comparator.

    ``regret[t]`` is summed over nodes and rounds ``1 .. t + 1``.
    """

    cumulative_loss: np.ndarray
    comparator_cumulative: np.ndarray
    regret: np.ndarray
    average_regret: np.ndarray
    rhs: float
    inputs: BoundInputs
    label: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def lhs(self) -> float:
        return float(self.regret[-1]) if len(self.regret) else 0.0

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_text(self) -> str:
        i = self.inputs
        lines = [
            f"regret report {self.label}".rstrip(),
            f"  rounds T = {i.n_rounds}, nodes J = {i.n_nodes}, kernels P = {i.n_kernels}",
            f"  learning rate = {i.learning_rate:g}",
            f"  ||theta*|| = {i.theta_star_norm:.6g}",
            f"  empirical gradient bound L = {i.grad_bound:.6g}",
            f"  c = {i.c:.6g}",
            f"  cumulative loss = {self.cumulative_loss[-1] if len(self.regret) else 0.0:.6g}",
            f"  comparator cumulative loss = {self.comparator_cumulative[-1] if len(self.regret) else 0.0:.6g}",
            f"  regret (LHS) = {self.lhs:.6g}",
            f"  bound (RHS) = {self.rhs:.6g}",
            f"  LHS <= RHS: {self.holds}",
        ]
        lines += [f"  {k} = {v}" for k, v in self.extras.items()]
        return "\n".join(lines) + "\n"

    def write(self, text_path, csv_path) -> None:
        with open(text_path, "w") as fh:
            fh.write(self.to_text())
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t", "cumulative_loss", "comparator_cumulative", "regret", "average_regret"))
            for t in range(len(self.regret)):
                w.writerow((t + 1, repr(float(self.cumulative_loss[t])),
                            repr(float(self.comparator_cumulative[t])),
                            repr(float(self.regret[t])), repr(float(self.average_regret[t]))))


def regret_report(losses, comparator, inputs: BoundInputs, label: str = "") -> RegretReport:
    """Build a report from per-round losses.

    ``losses`` and ``comparator`` are ``(T,)`` network totals or ``(T, J)``
    per-node values (summed over nodes).
    """
    losses = np.asarray(losses, dtype=float)
    comparator = np.asarray(comparator, dtype=float)
    if losses.shape != comparator.shape:
        raise ValueError(f"loss series shape {losses.shape} does not match comparator {comparator.shape}")
    if losses.ndim == 2:
        losses = losses.sum(axis=1)
        comparator = comparator.sum(axis=1)
    cum = np.cumsum(losses)
    cum_star = np.cumsum(comparator)
    regret = cum - cum_star
    avg = regret / np.arange(1, len(regret) + 1) if len(regret) else regret
    return RegretReport(cum, cum_star, regret, avg, inputs.rhs(), inputs, label)


def kernel_regret_reports(metrics, partition, reg, learning_rate, c, tol=1e-8):
    """One report per kernel comparator of a finished run.

    Each comparator is the batch minimizer in the run's own feature space
    over every sample the network saw. Returns ``{p: RegretReport}``.
    """
    T = metrics.n_rounds
    streams = partition
    if T != partition.n_rounds:
        from .data import Partition

        streams = Partition(partition.X[:T], partition.y[:T], partition.indices[:T])
    X, y = streams.flat()
    reports = {}
    for p, fmap in enumerate(metrics.feature_maps):
        oracle = batch_oracle(features(fmap, X), y, reg, tol=tol)
        comp = comparator_losses(oracle.theta, fmap, streams, reg)
        inputs = BoundInputs(metrics.n_nodes, T, learning_rate, float(np.linalg.norm(oracle.theta)),
                             metrics.grad_norm_max, metrics.n_kernels, c)
        rep = regret_report(metrics.combined_loss, comp, inputs, label=f"kernel {p} (sigma={fmap.sigma:g})")
        rep.extras["oracle_grad_norm"] = f"{oracle.grad_norm:.3g}"
        reports[p] = rep
    return reports


def best_kernel(reports) -> int:
    """Kernel whose comparator attains the lowest cumulative loss (largest regret)."""
    return min(reports, key=lambda p: reports[p].comparator_cumulative[-1])


def sublinearity_check(average_regret, window: int):
    """Compare early and late average regret and fit the growth exponent.

    Returns ``(passed, slope)``: ``passed`` is True when the mean average
    regret over the last ``window`` rounds is below that of the first
    ``window`` rounds (or there is no positive regret at all); ``slope`` is
    the least-squares slope of ``log R_t`` against ``log t`` over the second
    half, where ``R_t = t * average_regret[t]``. Growth is sub-linear when
    the slope is below 1.
    """
    avg = np.asarray(average_regret, dtype=float)
    if window < 1 or len(avg) < 2 * window:
        raise ValueError(f"need at least {2 * window} rounds, got {len(avg)}")
    first = avg[:window].mean()
    last = avg[-window:].mean()
    passed = bool(last < first or last <= 0.0)
    t = np.arange(1, len(avg) + 1, dtype=float)
    cum = avg * t
    half = slice(len(avg) // 2, None)
    positive = cum[half] > 0
    if positive.sum() < 2:
        # no growth to measure
        return passed, 0.0
    slope = np.polyfit(np.log(t[half][positive]), np.log(cum[half][positive]), 1)[0]
    return passed, float(slope)

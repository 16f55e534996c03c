"""Per-kernel online learning primitives.

All loss functions broadcast over leading axes so that a node can evaluate
its ``P`` kernels in one call: ``theta`` and ``z`` of shape ``(P, 2D)``
produce ``P`` losses.
"""

from __future__ import annotations

import abc

import numpy as np
from scipy.special import expit


def _check_labels(y):
    if isinstance(y, (float, int, np.floating, np.integer)):
        if y != 1 and y != -1:
            raise ValueError("labels must be -1 or +1")
        return float(y)
    y = np.asarray(y, dtype=float)
    if not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("labels must be -1 or +1")
    return y


def predict_single(theta, z):
    """Kernel prediction ``theta . z`` (row-wise for stacked inputs)."""
    return np.sum(np.asarray(theta, dtype=float) * np.asarray(z, dtype=float), axis=-1)


class LossModel(abc.ABC):
    """Loss of a linear model in random-feature space."""

    @abc.abstractmethod
    def value(self, theta, z, y):
        ...

    @abc.abstractmethod
    def gradient(self, theta, z, y):
        ...

    @abc.abstractmethod
    def link_value(self, prediction, y):
        """Data term evaluated at a raw prediction (no regularizer)."""

    @abc.abstractmethod
    def penalty(self, theta):
        """Regularizer, one value per trailing-axis vector."""

    def combined_value(self, normalized_weights, thetas, zs, y) -> float:
        """Loss of the weighted multi-kernel function.

        The combined function lives in the direct sum of the kernel spaces
        with parameter ``(w_1 theta_1, ..., w_P theta_P)``, so its penalty is
        ``sum_p w_p^2 penalty(theta_p)``.
        """
        w = np.asarray(normalized_weights, dtype=float)
        preds = predict_single(thetas, zs)
        data = self.link_value(combined_prediction(w, preds), y)
        return float(data + np.dot(w**2, self.penalty(thetas)))


class KLRLoss(LossModel):
    """Kernel logistic regression: ``log(1 + exp(-y theta.z)) + reg ||theta||^2``."""

    def __init__(self, reg: float = 0.001):
        if reg < 0:
            raise ValueError(f"regularization must be nonnegative, got {reg}")
        self.reg = float(reg)

    def __repr__(self):
        return f"KLRLoss(reg={self.reg})"

    def value(self, theta, z, y):
        return klr_value(theta, z, y, self.reg)

    def gradient(self, theta, z, y):
        return klr_gradient(theta, z, y, self.reg)

    def link_value(self, prediction, y):
        return np.logaddexp(0.0, -_check_labels(y) * np.asarray(prediction, dtype=float))

    def penalty(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.reg * np.sum(theta * theta, axis=-1)


def klr_value(theta, z, y, reg):
    y = _check_labels(y)
    theta = np.asarray(theta, dtype=float)
    margin = y * predict_single(theta, z)
    return np.logaddexp(0.0, -margin) + reg * np.sum(theta * theta, axis=-1)


def klr_gradient(theta, z, y, reg):
    """``-y z sigmoid(-y theta.z) + 2 reg theta``."""
    y = _check_labels(y)
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    coef = -y * expit(-y * predict_single(theta, z))
    return np.asarray(coef)[..., None] * z + 2.0 * reg * theta


def sgd_step(theta, grad, learning_rate):
    return np.asarray(theta, dtype=float) - learning_rate * np.asarray(grad, dtype=float)


class KernelWeights:
    """Hedge weights over ``P`` kernels kept in the log domain.

    Raw weights ``exp(-eta * cumulative loss)`` underflow after a few
    thousand rounds; only the normalized weights are ever exposed.
    """

    __slots__ = ("log_weights",)

    def __init__(self, log_weights):
        lw = np.array(log_weights, dtype=float)
        if lw.ndim != 1 or lw.size == 0:
            raise ValueError("log_weights must be a nonempty 1-D array")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log_weights must be finite")
        self.log_weights = lw - lw.max()

    @classmethod
    def uniform(cls, n_kernels: int) -> "KernelWeights":
        return cls(np.full(n_kernels, -np.log(n_kernels)))

    @property
    def n_kernels(self) -> int:
        return self.log_weights.size

    @property
    def normalized(self) -> np.ndarray:
        # the largest log weight is 0, so exp cannot overflow
        w = np.exp(self.log_weights)
        return w / w.sum()

    def __repr__(self):
        return f"KernelWeights({np.array2string(self.normalized, precision=4)})"


def hedge_update(weights: KernelWeights, losses, learning_rate: float) -> KernelWeights:
    """Multiplicative update ``w_p <- w_p exp(-eta loss_p)``."""
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (weights.n_kernels,):
        raise ValueError(f"expected {weights.n_kernels} losses, got shape {losses.shape}")
    if not np.all(np.isfinite(losses)):
        raise ValueError("hedge update requires finite losses")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning rate must lie in (0, 1], got {learning_rate}")
    step = learning_rate * losses
    # a loss offset shared by all kernels cancels in the normalization
    return KernelWeights(weights.log_weights - (step - step.min()))


def combined_prediction(normalized_weights, predictions) -> float:
    w = np.asarray(normalized_weights, dtype=float)
    return float(np.dot(w, np.asarray(predictions, dtype=float)))


def combined_klr_value(normalized_weights, thetas, zs, y, reg) -> float:
    return KLRLoss(reg).combined_value(normalized_weights, thetas, zs, y)

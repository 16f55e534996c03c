"""scikit-learn interface to the gossip protocol."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets, type_of_target
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset, partition
from .protocol import SimulationConfig, run_simulation
from .rf_kernel import features


class GossipOMKLClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier trained by simulated gossiped multi-kernel learning.

    ``fit`` shuffles the training set, deals it round-robin to ``n_nodes``
    simulated nodes and runs the protocol for one pass (or ``n_rounds``
    rounds). Predictions use the network-average model unless a ``node`` is
    requested.

    Parameters
    ----------
    n_nodes : int, default=20
    topology : {"complete", "ring", "path"}, default="path"
    n_components : int, default=20
        Random features per kernel; each kernel model has ``2 * n_components``
        weights.
    sigmas : tuple of float, default=(1.0, 3.0, 5.0)
        Gaussian kernel bandwidths.
    reg : float, default=0.001
    learning_rate : float, default=0.01
    consensus_step : float, "default" or "lemma", default="default"
        ``"default"`` is ``0.9 * learning_rate``.
    levels : int or None, default=7
        Quantization levels; ``None`` sends unquantized floats.
    n_rounds : int or None, default=None
    random_state : int or None, default=None
    n_jobs : int, default=1

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
    coef_ : ndarray of shape (n_nodes, n_kernels, 2 * n_components)
        Final per-node, per-kernel models.
    kernel_weights_ : ndarray of shape (n_nodes, n_kernels)
    feature_maps_ : list of FeatureMap
    metrics_ : MetricsLog
    """

    def __init__(self, n_nodes=20, topology="path", n_components=20, sigmas=(1.0, 3.0, 5.0),
                 reg=0.001, learning_rate=0.01, consensus_step="default", levels=7,
                 n_rounds=None, random_state=None, n_jobs=1):
        self.n_nodes = n_nodes
        self.topology = topology
        self.n_components = n_components
        self.sigmas = sigmas
        self.reg = reg
        self.learning_rate = learning_rate
        self.consensus_step = consensus_step
        self.levels = levels
        self.n_rounds = n_rounds
        self.random_state = random_state
        self.n_jobs = n_jobs

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def _seed(self):
        if self.random_state is None:
            return int(np.random.default_rng().integers(2**31))
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        raise ValueError("random_state must be an int or None")

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        if type_of_target(y) != "binary":
            raise ValueError("Only binary classification is supported. "
                             f"The type of the target is {type_of_target(y)}.")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError("need two classes to fit, got one class")
        seed = self._seed()
        config = SimulationConfig(
            n_nodes=self.n_nodes, n_rounds=self.n_rounds, n_components=self.n_components,
            sigmas=tuple(float(s) for s in self.sigmas), reg=self.reg,
            learning_rate=self.learning_rate, consensus_step=self.consensus_step,
            levels=self.levels, topology=self.topology, seed=seed, n_jobs=self.n_jobs,
        ).check()
        labels = np.where(y == self.classes_[1], 1.0, -1.0)
        part = partition(Dataset(X, labels), self.n_nodes, seed=seed)
        metrics, network = run_simulation(config, part, return_network=True)
        self.metrics_ = metrics
        self.feature_maps_ = network.feature_maps
        self.coef_ = network.thetas()
        self.kernel_weights_ = np.stack([node.weights.normalized for node in network.nodes])
        self.gossip_matrix_ = network.gossip
        self.consensus_step_ = network.consensus_step
        return self

    def decision_function(self, X, node=None):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        if node is None:
            theta = self.coef_.mean(axis=0)
            weights = self.kernel_weights_.mean(axis=0)
        else:
            theta = self.coef_[node]
            weights = self.kernel_weights_[node]
        scores = np.zeros(len(X))
        for p, fmap in enumerate(self.feature_maps_):
            scores += weights[p] * (features(fmap, X) @ theta[p])
        return scores

    def predict_proba(self, X, node=None):
        p = expit(self.decision_function(X, node))
        return np.column_stack([1.0 - p, p])

    def predict(self, X, node=None):
        scores = self.decision_function(X, node)
        return self.classes_[(scores > 0).astype(int)]

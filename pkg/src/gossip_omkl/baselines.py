"""Reference configurations: single-kernel gossip SGD and complete-graph OMKL."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import metropolis_weights
from .learner import klr_gradient, klr_value
from .protocol import (
    FEATURE_STREAM,
    QUANTIZER_STREAM,
    MetricsLog,
    SimulationConfig,
    _rounds_for,
    random_stream,
    run_simulation,
)
from .rf_kernel import features, sample_feature_map

BASELINE_KINDS = ("single_kernel", "complete_unquantized", "complete_quantized")


@dataclass(frozen=True)
class BaselineSpec:
    """``single_kernel`` runs one kernel of bandwidth ``sigma``; ``quantized``
    selects whether it keeps the main run's quantizer. The ``complete_*``
    kinds run every kernel on the complete graph.
    """

    kind: str
    sigma: float = 1.0
    quantized: bool = True

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {BASELINE_KINDS}")

    @property
    def label(self) -> str:
        if self.kind == "single_kernel":
            suffix = "" if self.quantized else "_unquantized"
            return f"single_kernel_sigma{self.sigma:g}{suffix}"
        return self.kind

    def apply(self, config: SimulationConfig) -> SimulationConfig:
        if self.kind == "single_kernel":
            levels = config.levels if self.quantized else None
            return replace(config, sigmas=(float(self.sigma),), levels=levels)
        levels = config.levels if self.kind == "complete_quantized" else None
        return replace(config, topology="complete", custom_edges=None, levels=levels)


def run_baseline(spec: BaselineSpec, config: SimulationConfig, partition) -> MetricsLog:
    return run_simulation(spec.apply(config), partition)


def run_single_kernel(config: SimulationConfig, partition) -> MetricsLog:
    """Direct decentralized SGD with compressed gossip for one kernel.

    Keeps all models and hidden states in shared arrays and has no hedge
    layer, no replicas and no message passing. With the same config it must
    reproduce the P = 1 run of the multi-kernel protocol exactly.
    """
    config.check()
    if config.n_kernels != 1:
        raise ValueError("run_single_kernel needs exactly one kernel bandwidth")
    T = _rounds_for(config, partition)
    J = config.n_nodes
    topology = config.build_topology()
    gossip = metropolis_weights(topology)
    W = gossip.weights
    quantizer = config.build_quantizer()
    gamma = config.resolve_consensus_step(gossip, quantizer)
    eta = config.learning_rate
    fmap = sample_feature_map(config.sigmas[0], config.n_components, partition.n_features,
                              random_stream(config.seed, FEATURE_STREAM, 0))
    rngs = [random_stream(config.seed, QUANTIZER_STREAM, j, 0) for j in range(J)]
    neighbors = [topology.neighbors(j) for j in range(J)]
    n = fmap.n_features_out

    theta = np.zeros((J, n))
    hidden = np.zeros((J, n))
    log = MetricsLog.empty(J, 1, [fmap])
    if T == 0:
        return log
    losses = np.zeros((T, J))
    consensus = np.zeros((T, J))
    bits = np.array([8 * quantizer.payload_bytes * len(nb) for nb in neighbors], dtype=np.int64)
    grad_max = 0.0
    for t in range(T):
        zs = [features(fmap, partition.X[t, j]) for j in range(J)]
        ys = partition.y[t]
        q = np.zeros((J, n))
        for j in range(J):
            losses[t, j] = klr_value(theta[j], zs[j], ys[j], config.reg)
            step = np.zeros(n)
            for i in neighbors[j]:
                step += W[i, j] * (hidden[i] - hidden[j])
            theta[j] = theta[j] + gamma * step
            # round trip through the wire format, as a transmitted message would
            q[j] = quantizer.dequantize(quantizer.decode(quantizer.encode(
                quantizer.quantize(theta[j] - hidden[j], rngs[j]))))
        hidden = hidden + q
        for j in range(J):
            g = klr_gradient(theta[j], zs[j], ys[j], config.reg)
            grad_max = max(grad_max, float(np.linalg.norm(g)))
            theta[j] = theta[j] - eta * g
        consensus[t] = np.sum((theta - theta.mean(axis=0)) ** 2, axis=1)
    log = MetricsLog(
        kernel_loss=losses[:, :, None],
        weights=np.ones((T, J, 1)),
        combined_loss=losses.copy(),
        consensus_err=consensus[:, :, None],
        bits_cum=bits[None, :] * np.arange(1, T + 1)[:, None],
        grad_norm_max=grad_max,
        feature_maps=[fmap],
    )
    return log

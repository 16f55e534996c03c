"""Round-based simulation of gossiped, quantized online multi-kernel learning.

Every node keeps, per kernel, a model ``theta``, a hidden state ``h`` that
all of its neighbors can reproduce, and a replica of each neighbor's hidden
state. A round runs in two phases separated by barriers:

1. local phase (per node): embed the sample, score the kernels, update the
   hedge weights, take the gossip step toward the neighbors' hidden states,
   then quantize ``theta - h`` and emit it as a wire message;
2. exchange phase (per node): decode the messages of every neighbor and of
   itself, add them to the matching hidden states, then take the SGD step.

Nodes only ever see their neighbors' messages, so the hidden-state replicas
stay bit-identical across the network.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import TOPOLOGY_KINDS, GossipMatrix, Topology, build_topology, consensus_step_size, metropolis_weights
from .learner import KernelWeights, KLRLoss, LossModel, hedge_update
from .quantizer import compression_delta, make_quantizer
from .rf_kernel import features, sample_feature_map

logger = logging.getLogger(__name__)

# spawn keys for independent random streams derived from one master seed
FEATURE_STREAM = 0
QUANTIZER_STREAM = 1


def random_stream(seed: int, purpose: int, *ids: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, *ids)))


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ProtocolFault(RuntimeError):
    """Protocol invariant broken during a round."""

    def __init__(self, message, round_index=None, node=None):
        self.detail = message
        self.round_index = round_index
        self.node = node
        where = []
        if round_index is not None:
            where.append(f"round {round_index}")
        if node is not None:
            where.append(f"node {node}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class SimulationConfig:
    """Hyperparameters of one simulated run.

    ``consensus_step`` is a number, ``"default"`` (``0.9 * learning_rate``)
    or ``"lemma"`` (derived from the spectral gap and the quantizer's
    compression parameter). ``levels=None`` disables quantization.
    ``n_rounds=None`` uses every sample of the partition.
    """

    n_nodes: int = 20
    n_rounds: int | None = None
    n_components: int = 20
    sigmas: tuple = (1.0, 3.0, 5.0)
    reg: float = 0.001
    learning_rate: float = 0.01
    consensus_step: float | str = "default"
    levels: int | None = 7
    topology: str = "path"
    custom_edges: tuple | None = None
    seed: int = 0
    n_jobs: int = 1
    check_replicas: bool = True

    @property
    def n_kernels(self) -> int:
        return len(self.sigmas)

    def validate(self) -> list:
        """Return one message per violated constraint (empty when valid)."""
        errors = []
        if self.n_nodes < 1:
            errors.append(f"n_nodes must be positive, got {self.n_nodes}")
        if self.n_rounds is not None and self.n_rounds < 0:
            errors.append(f"n_rounds must be nonnegative, got {self.n_rounds}")
        if self.n_components < 1:
            errors.append(f"n_components must be positive, got {self.n_components}")
        if len(self.sigmas) < 1:
            errors.append("at least one kernel bandwidth is required")
        elif any(not s > 0 for s in self.sigmas):
            errors.append(f"kernel bandwidths must be positive, got {list(self.sigmas)}")
        if self.reg < 0:
            errors.append(f"reg must be nonnegative, got {self.reg}")
        if not 0.0 <= self.learning_rate < 1.0:
            errors.append(f"learning_rate must lie in [0, 1), got {self.learning_rate}")
        if isinstance(self.consensus_step, str):
            if self.consensus_step not in ("default", "lemma"):
                errors.append(f"consensus_step must be a number, 'default' or 'lemma', got {self.consensus_step!r}")
        elif self.consensus_step < 0:
            errors.append(f"consensus_step must be nonnegative, got {self.consensus_step}")
        if self.levels is not None:
            if self.levels < 1:
                errors.append(f"levels must be positive, got {self.levels}")
            elif self.n_components >= 1:
                delta = compression_delta(self.n_components, self.levels)
                if not delta > 0:
                    errors.append(
                        f"levels={self.levels} with n_components={self.n_components} gives "
                        f"compression parameter {delta:.4g} <= 0"
                    )
        if self.topology not in TOPOLOGY_KINDS:
            errors.append(f"unknown topology {self.topology!r}")
        elif self.topology == "custom" and not self.custom_edges:
            errors.append("custom topology requires an edge list")
        elif self.n_nodes < 2 and self.n_nodes >= 1:
            errors.append("a topology needs at least 2 nodes")
        if self.n_jobs < 1:
            errors.append(f"n_jobs must be positive, got {self.n_jobs}")
        return errors

    def check(self) -> "SimulationConfig":
        errors = self.validate()
        if errors:
            raise ConfigError(errors)
        return self

    def build_topology(self) -> Topology:
        return build_topology(self.topology, self.n_nodes, self.custom_edges)

    def build_quantizer(self):
        return make_quantizer(self.levels, 2 * self.n_components)

    def resolve_consensus_step(self, gossip: GossipMatrix, quantizer) -> float:
        if self.consensus_step == "default":
            return 0.9 * self.learning_rate
        if self.consensus_step == "lemma":
            gamma, _ = consensus_step_size(gossip.rho, gossip.beta, quantizer.delta)
            return gamma
        return float(self.consensus_step)


@dataclass(frozen=True)
class NodeRecord:
    """What a node reports after its local phase."""

    kernel_losses: np.ndarray
    weights: np.ndarray
    combined_loss: float
    message: bytes


class Node:
    """One participant of the protocol.

    The node only stores its own state and the replicas of its neighbors'
    hidden states; ``mixing`` maps each neighbor index to the gossip weight
    of the edge.
    """

    def __init__(self, index, mixing, feature_maps, loss, quantizer, learning_rate,
                 consensus_step, rngs):
        self.index = index
        self.neighbors = tuple(sorted(mixing))
        self.mixing = dict(mixing)
        self.feature_maps = list(feature_maps)
        self.loss = loss
        self.quantizer = quantizer
        self.learning_rate = learning_rate
        self.consensus_step = consensus_step
        self.rngs = list(rngs)
        P = len(self.feature_maps)
        n = self.feature_maps[0].n_features_out
        self.theta = np.zeros((P, n))
        self.hidden = np.zeros((P, n))
        self.replicas = {i: np.zeros((P, n)) for i in self.neighbors}
        self.weights = KernelWeights.uniform(P)
        self._sample = None

    @property
    def n_kernels(self) -> int:
        return len(self.feature_maps)

    def embed(self, x) -> np.ndarray:
        return np.stack([features(fm, x) for fm in self.feature_maps])

    def gossip_direction(self) -> np.ndarray:
        """``sum_i w_ij (h_i - h_j)`` over the neighbors, from the local replicas."""
        mix = np.zeros_like(self.hidden)
        for i in self.neighbors:
            mix += self.mixing[i] * (self.replicas[i] - self.hidden)
        return mix

    def local_phase(self, x, y) -> NodeRecord:
        z = self.embed(x)
        kernel_losses = self.loss.value(self.theta, z, y)
        if not np.all(np.isfinite(kernel_losses)):
            raise ProtocolFault("non-finite kernel loss", node=self.index)
        weights = self.weights.normalized
        combined = self.loss.combined_value(weights, self.theta, z, y)
        if self.learning_rate > 0:
            self.weights = hedge_update(self.weights, kernel_losses, self.learning_rate)

        self.theta = self.theta + self.consensus_step * self.gossip_direction()
        message = self.quantizer.compress(self.theta - self.hidden, self.rngs)
        self._sample = (z, y)
        return NodeRecord(kernel_losses, weights, float(combined), message)

    def decode_message(self, message: bytes) -> np.ndarray:
        return self.quantizer.expand(message, self.n_kernels)

    def exchange_phase(self, inbox: dict, own_message: bytes) -> float:
        """Apply received differences, then take the local SGD step.

        Returns the largest per-kernel gradient norm of the step.
        """
        for i in self.neighbors:
            self.replicas[i] = self.replicas[i] + self.decode_message(inbox[i])
        self.hidden = self.hidden + self.decode_message(own_message)
        z, y = self._sample
        self._sample = None
        grad = self.loss.gradient(self.theta, z, y)
        self.theta = self.theta - self.learning_rate * grad
        return float(np.max(np.linalg.norm(grad, axis=1)))


@dataclass(frozen=True)
class RoundResult:
    kernel_losses: np.ndarray
    weights: np.ndarray
    combined_loss: np.ndarray
    grad_norm_max: float


class GossipNetwork:
    """A set of :class:`Node` objects wired by a topology and gossip matrix.

    ``n_jobs > 1`` runs each phase across nodes on a thread pool; the two
    phases act as barriers, so results do not depend on scheduling.
    """

    def __init__(self, topology: Topology, gossip: GossipMatrix, feature_maps, loss: LossModel,
                 quantizer, learning_rate: float, consensus_step: float, seed: int = 0,
                 n_jobs: int = 1, check_replicas: bool = True):
        if gossip.n_nodes != topology.n_nodes:
            raise ValueError("gossip matrix and topology disagree on the node count")
        self.topology = topology
        self.gossip = gossip
        self.feature_maps = list(feature_maps)
        self.loss = loss
        self.quantizer = quantizer
        self.learning_rate = learning_rate
        self.consensus_step = consensus_step
        self.n_jobs = n_jobs
        self.check_replicas = check_replicas
        self.round_index = 0
        W = gossip.weights
        P = len(self.feature_maps)
        self.nodes = []
        for j in range(topology.n_nodes):
            mixing = {i: float(W[i, j]) for i in topology.neighbors(j)}
            rngs = [random_stream(seed, QUANTIZER_STREAM, j, p) for p in range(P)]
            self.nodes.append(Node(j, mixing, self.feature_maps, loss, quantizer,
                                   learning_rate, consensus_step, rngs))
        self._message_bits = np.array(
            [8 * quantizer.payload_bytes * P * len(node.neighbors) for node in self.nodes],
            dtype=np.int64,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def bits_per_round(self) -> np.ndarray:
        """Bits each node transmits to its neighbors in one round."""
        return self._message_bits.copy()

    def thetas(self) -> np.ndarray:
        return np.stack([node.theta for node in self.nodes])

    def hiddens(self) -> np.ndarray:
        return np.stack([node.hidden for node in self.nodes])

    def _map(self, fn, items):
        if self.n_jobs == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
            return list(pool.map(fn, items))

    def replicas_consistent(self) -> bool:
        return all(
            np.array_equal(node.replicas[i], self.nodes[i].hidden)
            for node in self.nodes for i in node.neighbors
        )

    def _check_replicas(self):
        for node in self.nodes:
            for i in node.neighbors:
                if not np.array_equal(node.replicas[i], self.nodes[i].hidden):
                    raise ProtocolFault(
                        f"replica of node {i}'s hidden state is out of sync",
                        self.round_index, node.index,
                    )

    def _check_finite(self):
        for node in self.nodes:
            if not (np.all(np.isfinite(node.theta)) and np.all(np.isfinite(node.hidden))):
                raise ProtocolFault("non-finite model or hidden state", self.round_index, node.index)

    def run_round(self, X, y) -> RoundResult:
        """Advance every node by one round on samples ``X[j], y[j]``."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(X) != self.n_nodes or len(y) != self.n_nodes:
            raise ValueError(f"need one sample per node ({self.n_nodes}), got {len(X)}")
        self.round_index += 1
        if self.check_replicas:
            self._check_replicas()

        try:
            records = self._map(lambda j: self.nodes[j].local_phase(X[j], y[j]), range(self.n_nodes))
        except ProtocolFault as exc:
            raise ProtocolFault(exc.detail, self.round_index, exc.node) from None
        messages = [r.message for r in records]

        def exchange(j):
            node = self.nodes[j]
            return node.exchange_phase({i: messages[i] for i in node.neighbors}, messages[j])

        grad_norms = self._map(exchange, range(self.n_nodes))
        self._check_finite()
        return RoundResult(
            kernel_losses=np.stack([r.kernel_losses for r in records]),
            weights=np.stack([r.weights for r in records]),
            combined_loss=np.array([r.combined_loss for r in records]),
            grad_norm_max=max(grad_norms),
        )


def consensus_error(thetas, kernel: int | None = None):
    """``sum_j ||theta_j - mean_j theta_j||^2`` for node-stacked models.

    ``thetas`` has shape ``(J, P, n)`` (or ``(J, n)``); with ``kernel`` given
    only that kernel is measured, otherwise one value per kernel is returned.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 2:
        thetas = thetas[:, None, :]
    dev = thetas - thetas.mean(axis=0)
    per_kernel = np.sum(dev**2, axis=(0, 2))
    return float(per_kernel[kernel]) if kernel is not None else per_kernel


def _node_consensus(thetas):
    dev = thetas - thetas.mean(axis=0)
    return np.sum(dev**2, axis=-1)


CSV_COLUMNS = ("t", "j", "p", "kernel_loss", "weight", "combined_loss", "consensus_err", "bits_cum")


@dataclass
class MetricsLog:
    """Per-round, per-node record of a run.

    Attributes
    ----------
    kernel_loss, weights, consensus_err : ndarray of shape (T, J, P)
        Per-kernel loss at the round-entry model, the normalized hedge weight
        used for that round's prediction, and the node's squared distance to
        the network mean after the round.
    combined_loss : ndarray of shape (T, J)
    bits_cum : ndarray of shape (T, J)
        Cumulative bits sent by each node.
    """

    kernel_loss: np.ndarray
    weights: np.ndarray
    combined_loss: np.ndarray
    consensus_err: np.ndarray
    bits_cum: np.ndarray
    grad_norm_max: float = 0.0
    feature_maps: list = field(default_factory=list)

    @classmethod
    def empty(cls, n_nodes, n_kernels, feature_maps=()):
        z3 = np.zeros((0, n_nodes, n_kernels))
        return cls(z3, z3.copy(), np.zeros((0, n_nodes)), z3.copy(),
                   np.zeros((0, n_nodes), dtype=np.int64), 0.0, list(feature_maps))

    @property
    def n_rounds(self) -> int:
        return self.combined_loss.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.combined_loss.shape[1]

    @property
    def n_kernels(self) -> int:
        return self.kernel_loss.shape[2]

    def average_loss_curve(self) -> np.ndarray:
        """Running mean over rounds of the node-averaged combined loss."""
        per_round = self.combined_loss.mean(axis=1)
        return np.cumsum(per_round) / np.arange(1, self.n_rounds + 1)

    def final_average_loss(self) -> float:
        if self.n_rounds == 0:
            return float("nan")
        return float(self.average_loss_curve()[-1])

    def network_consensus_error(self) -> np.ndarray:
        """Shape ``(T, P)``: summed squared deviation from the network mean."""
        return self.consensus_err.sum(axis=1)

    def to_csv(self, path) -> None:
        """Write one row per (t, j, p) plus a ``p = -1`` aggregate row per (t, j)."""
        T, J, P = self.kernel_loss.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for t in range(T):
                for j in range(J):
                    bits = int(self.bits_cum[t, j])
                    for p in range(P):
                        writer.writerow((t + 1, j, p, repr(float(self.kernel_loss[t, j, p])),
                                         repr(float(self.weights[t, j, p])), "",
                                         repr(float(self.consensus_err[t, j, p])), bits))
                    writer.writerow((t + 1, j, -1, "", "", repr(float(self.combined_loss[t, j])),
                                     repr(float(self.consensus_err[t, j].sum())), bits))

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = list(reader)
        if not rows:
            raise ValueError(f"{path}: no data rows (cannot infer shape)")
        T = max(int(r[0]) for r in rows)
        J = max(int(r[1]) for r in rows) + 1
        P = max(int(r[2]) for r in rows) + 1
        log = cls(np.zeros((T, J, P)), np.zeros((T, J, P)), np.zeros((T, J)),
                  np.zeros((T, J, P)), np.zeros((T, J), dtype=np.int64))
        for r in rows:
            t, j, p = int(r[0]) - 1, int(r[1]), int(r[2])
            log.bits_cum[t, j] = int(r[7])
            if p < 0:
                log.combined_loss[t, j] = float(r[5])
            else:
                log.kernel_loss[t, j, p] = float(r[3])
                log.weights[t, j, p] = float(r[4])
                log.consensus_err[t, j, p] = float(r[6])
        return log


def build_network(config: SimulationConfig, n_features: int) -> GossipNetwork:
    """Construct the network, feature maps and quantizer described by ``config``."""
    config.check()
    topology = config.build_topology()
    gossip = metropolis_weights(topology)
    quantizer = config.build_quantizer()
    feature_maps = [
        sample_feature_map(sigma, config.n_components, n_features,
                           random_stream(config.seed, FEATURE_STREAM, p))
        for p, sigma in enumerate(config.sigmas)
    ]
    gamma = config.resolve_consensus_step(gossip, quantizer)
    return GossipNetwork(topology, gossip, feature_maps, KLRLoss(config.reg), quantizer,
                         config.learning_rate, gamma, seed=config.seed, n_jobs=config.n_jobs,
                         check_replicas=config.check_replicas)


def _rounds_for(config, partition) -> int:
    if partition.n_nodes != config.n_nodes:
        raise ConfigError([f"partition has {partition.n_nodes} streams but n_nodes={config.n_nodes}"])
    T = partition.n_rounds if config.n_rounds is None else config.n_rounds
    if T > partition.n_rounds:
        raise ConfigError([f"n_rounds={T} exceeds the {partition.n_rounds} samples per node"])
    return T


def run_network(network: GossipNetwork, partition, n_rounds: int) -> MetricsLog:
    """Run ``n_rounds`` rounds of an existing network and collect metrics."""
    J = network.n_nodes
    P = len(network.feature_maps)
    if n_rounds == 0:
        return MetricsLog.empty(J, P, network.feature_maps)
    log = MetricsLog(
        np.zeros((n_rounds, J, P)), np.zeros((n_rounds, J, P)), np.zeros((n_rounds, J)),
        np.zeros((n_rounds, J, P)), np.zeros((n_rounds, J), dtype=np.int64),
        0.0, network.feature_maps,
    )
    per_round_bits = network.bits_per_round
    for t in range(n_rounds):
        res = network.run_round(partition.X[t], partition.y[t])
        log.kernel_loss[t] = res.kernel_losses
        log.weights[t] = res.weights
        log.combined_loss[t] = res.combined_loss
        log.consensus_err[t] = _node_consensus(network.thetas())
        log.bits_cum[t] = per_round_bits * (t + 1)
        log.grad_norm_max = max(log.grad_norm_max, res.grad_norm_max)
    return log


def run_simulation(config: SimulationConfig, partition, return_network: bool = False):
    """Run the protocol from the all-zero initial state on ``partition``.

    Returns the :class:`MetricsLog`, and the final network when
    ``return_network`` is set.
    """
    config.check()
    T = _rounds_for(config, partition)
    network = build_network(config, partition.n_features)
    logger.debug("running %d rounds on %d nodes (gamma=%.4g)", T, config.n_nodes, network.consensus_step)
    log = run_network(network, partition, T)
    return (log, network) if return_network else log

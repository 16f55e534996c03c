"""Gossiped, quantized online multi-kernel learning over a network of nodes."""

from .analysis import batch_oracle, regret_report, sublinearity_check, theorem_bound
from .baselines import BaselineSpec, run_baseline, run_single_kernel
from .data import Dataset, Partition, make_banana_like, make_synthetic, partition
from .estimator import GossipOMKLClassifier
from .graph import GossipMatrix, Topology, build_topology, consensus_step_size, metropolis_weights
from .learner import KernelWeights, KLRLoss, hedge_update
from .protocol import ConfigError, GossipNetwork, MetricsLog, ProtocolFault, SimulationConfig, run_simulation
from .quantizer import IdentityQuantizer, LevelQuantizer, compression_delta
from .rf_kernel import FeatureMap, RandomFourierFeatures, sample_feature_map

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec", "ConfigError", "Dataset", "FeatureMap", "GossipMatrix", "GossipNetwork",
    "GossipOMKLClassifier", "IdentityQuantizer", "KLRLoss", "KernelWeights", "LevelQuantizer",
    "MetricsLog", "Partition", "ProtocolFault", "RandomFourierFeatures", "SimulationConfig",
    "Topology", "batch_oracle", "build_topology", "compression_delta", "consensus_step_size",
    "hedge_update", "make_banana_like", "make_synthetic", "metropolis_weights", "partition",
    "regret_report", "run_baseline", "run_simulation", "run_single_kernel", "sample_feature_map",
    "sublinearity_check", "theorem_bound",
]

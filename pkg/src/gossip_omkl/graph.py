"""Communication topologies, Metropolis gossip matrices and their spectra."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

TOPOLOGY_KINDS = ("complete", "ring", "path", "custom")

_STOCHASTIC_TOL = 1e-10


class DisconnectedGraphError(ValueError):
    """Raised when a topology is not connected.

    The ``components`` attribute lists the node sets of every connected
    component, smallest index first.
    """

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        shown = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in self.components)
        super().__init__(f"graph is disconnected: {len(self.components)} components {shown}")


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes ``0 .. n_nodes - 1``."""

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be positive, got {self.n_nodes}")
        normalized = set()
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i}, {j}) references a node outside [0, {self.n_nodes})")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(normalized))

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self, node: int) -> tuple:
        """Sorted neighbor indices of ``node`` (excluding itself)."""
        out = [j if i == node else i for i, j in self.edges if node in (i, j)]
        return tuple(sorted(out))

    def components(self) -> list:
        if not self.edges:
            return [[i] for i in range(self.n_nodes)]
        rows, cols = zip(*self.edges)
        adj = coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_nodes, self.n_nodes)
        )
        n_comp, labels = connected_components(adj, directed=False)
        return [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def check_connected(self) -> "Topology":
        comps = self.components()
        if len(comps) != 1:
            raise DisconnectedGraphError(comps)
        return self


def build_topology(kind: str, n_nodes: int, custom_edges=None) -> Topology:
    """Build one of the named topologies and check that it is connected.

    Parameters
    ----------
    kind : {"complete", "ring", "path", "custom"}
    n_nodes : int
        Number of nodes, at least 2.
    custom_edges : iterable of (int, int), optional
        Edge list, required when ``kind == "custom"``.

    Raises
    ------
    DisconnectedGraphError
        If the resulting graph has more than one component.
    """
    if n_nodes < 2:
        raise ValueError(f"a topology needs at least 2 nodes, got {n_nodes}")
    if kind == "complete":
        edges = {(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)}
    elif kind == "ring":
        edges = {(i, (i + 1) % n_nodes) for i in range(n_nodes)}
        # J = 2 ring degenerates to the single edge
        edges = {(min(e), max(e)) for e in edges}
    elif kind == "path":
        edges = {(i, i + 1) for i in range(n_nodes - 1)}
    elif kind == "custom":
        if custom_edges is None:
            raise ValueError("custom topology requires an edge list")
        edges = set(map(tuple, custom_edges))
    else:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    return Topology(n_nodes, frozenset(edges)).check_connected()


def read_topology(path) -> Topology:
    """Read a topology file: first line ``J``, then one ``i j`` edge per line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty topology file")
    try:
        n_nodes = int(lines[0])
    except ValueError:
        raise ValueError(f"{path}: first line must be the node count, got {lines[0]!r}") from None
    edges = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected 'i j', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-integer node index in {line!r}") from None
    return build_topology("custom", n_nodes, edges)


def write_topology(topology: Topology, path) -> None:
    lines = [str(topology.n_nodes)] + [f"{i} {j}" for i, j in sorted(topology.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def spectral_quantities(weights) -> tuple:
    """Return ``(rho, beta)`` for a symmetric doubly stochastic matrix.

    ``rho`` is one minus the second largest (signed) eigenvalue and ``beta``
    the spectral norm of ``I - W``. A disconnected matrix yields ``rho == 0``;
    callers decide whether that is acceptable.
    """
    W = np.asarray(weights, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"gossip matrix must be square, got shape {W.shape}")
    if not np.allclose(W, W.T, rtol=0.0, atol=_STOCHASTIC_TOL):
        raise ValueError("gossip matrix is not symmetric")
    if np.any(W < -_STOCHASTIC_TOL):
        raise ValueError("gossip matrix has negative entries")
    row_dev = np.max(np.abs(W.sum(axis=1) - 1.0))
    if row_dev > _STOCHASTIC_TOL:
        raise ValueError(f"gossip matrix is not stochastic (max row-sum deviation {row_dev:.3g})")
    n = W.shape[0]
    if n == 1:
        return 1.0, 0.0
    eig = np.linalg.eigvalsh(W)[::-1]
    rho = float(1.0 - eig[1])
    if abs(rho) < 1e-12:
        rho = 0.0
    beta = float(np.max(np.abs(1.0 - eig)))
    return rho, beta


@dataclass(frozen=True)
class GossipMatrix:
    """Symmetric doubly stochastic mixing matrix together with its spectra.

    Attributes
    ----------
    weights : ndarray of shape (J, J)
    rho : float
        Spectral gap, ``1 - lambda_2``.
    beta : float
        ``||I - W||_2``.
    """

    weights: np.ndarray
    rho: float
    beta: float

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)
        if not self.rho > 0.0:
            raise ValueError(f"gossip matrix has spectral gap {self.rho}; the graph is not connected")

    @classmethod
    def from_weights(cls, weights) -> "GossipMatrix":
        rho, beta = spectral_quantities(weights)
        return cls(np.asarray(weights, dtype=float), rho, beta)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]


def metropolis_weights(topology: Topology) -> GossipMatrix:
    """Metropolis-Hastings gossip weights for a connected topology.

    Off-diagonal weight of edge ``(i, j)`` is ``1 / (1 + max(deg_i, deg_j))``
    and each diagonal entry absorbs the remaining row mass.
    """
    topology.check_connected()
    n = topology.n_nodes
    deg = topology.degrees
    W = np.zeros((n, n))
    for i, j in topology.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return GossipMatrix.from_weights(W)


def consensus_step_size(rho: float, beta: float, delta: float) -> tuple:
    """Consensus step size for compressed gossip and the regret constant ``c``.

    Returns
    -------
    gamma : float
        ``rho^2 delta / (16 rho + rho^2 + 4 beta^2 + 2 rho beta^2 - 8 rho delta)``
    c : float
        ``rho^2 delta / 82``
    """
    if not delta > 0.0:
        raise ValueError(f"compression parameter must be positive (quantizer too coarse), got {delta}")
    if delta > 1.0:
        raise ValueError(f"compression parameter must be at most 1, got {delta}")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"spectral gap must lie in (0, 1], got {rho}")
    if not 0.0 <= beta <= 2.0:
        raise ValueError(f"beta must lie in [0, 2], got {beta}")
    num = rho**2 * delta
    den = 16.0 * rho + rho**2 + 4.0 * beta**2 + 2.0 * rho * beta**2 - 8.0 * rho * delta
    return num / den, num / 82.0

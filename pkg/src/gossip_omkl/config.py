"""Flat ``key = value`` experiment configuration files.

Example::

    # Banana reproduction
    dataset = banana
    data_path = data/banana.csv
    nodes = 20
    sigmas = 1, 3, 5
    levels = 7
    baselines = single_kernel, complete_quantized
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .baselines import BASELINE_KINDS, BaselineSpec
from .data import load_banana, load_credit_card, load_mnist, make_banana_like, make_synthetic, standardize
from .graph import read_topology
from .protocol import SimulationConfig
from .quantizer import compression_delta

DATASETS = ("banana", "banana_like", "credit_card", "mnist", "synthetic")

KEYS = {
    "dataset", "data_path", "images_path", "labels_path",
    "synthetic_n", "synthetic_d", "synthetic_separation",
    "nodes", "rounds", "components", "sigmas", "reg", "eta", "gamma", "levels",
    "topology", "edges_file", "seeds", "baselines", "single_sigma", "jobs",
    "topologies", "levels_sweep",
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}: line {lineno}: empty key")
        if key in values:
            raise ValueError(f"{source}: line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_config(path) -> dict:
    return parse_config_text(Path(path).read_text(), str(path))


def _split(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _levels(value: str):
    return None if value.strip().lower() in ("identity", "none", "off") else int(value)


@dataclass
class ExperimentConfig:
    """A validated experiment: simulation settings plus data, seeds and variants."""

    simulation: SimulationConfig
    dataset: str
    data_path: str | None = None
    images_paths: list = field(default_factory=list)
    labels_paths: list = field(default_factory=list)
    synthetic: tuple = (30000, 23, 1.0)
    seeds: list = field(default_factory=lambda: [0])
    baselines: list = field(default_factory=list)
    topologies: list = field(default_factory=lambda: ["complete", "ring", "path"])
    levels_sweep: list = field(default_factory=lambda: [7, 15, 31, None])

    @classmethod
    def from_mapping(cls, values: dict, defaults: dict | None = None, seeds=None):
        """Build and validate; returns ``(config, errors)``.

        ``defaults`` supplies values for keys the file leaves unset.
        ``config`` is None whenever ``errors`` is nonempty.
        """
        merged = dict(defaults or {})
        merged.update(values)
        errors = [f"unknown key {k!r}" for k in merged if k not in KEYS]

        def get(key, convert, default):
            if key not in merged:
                return default
            try:
                return convert(merged[key])
            except (TypeError, ValueError):
                errors.append(f"invalid value for {key}: {merged[key]!r}")
                return default

        dataset = merged.get("dataset", "")
        if dataset not in DATASETS:
            errors.append(f"dataset must be one of {', '.join(DATASETS)}; got {dataset!r}")
        data_path = merged.get("data_path")
        images = _split(merged.get("images_path", ""))
        labels = _split(merged.get("labels_path", ""))
        if dataset in ("banana", "credit_card"):
            if not data_path:
                errors.append(f"dataset {dataset} requires data_path")
            elif not Path(data_path).is_file():
                errors.append(f"data_path does not exist: {data_path}")
        if dataset == "mnist":
            if not images or len(images) != len(labels):
                errors.append("mnist requires matching images_path and labels_path lists")
            for p in images + labels:
                if not Path(p).is_file():
                    errors.append(f"dataset file does not exist: {p}")

        eta = get("eta", float, 0.01)
        gamma_raw = merged.get("gamma", "default")
        if gamma_raw in ("default", "lemma"):
            gamma = gamma_raw
        else:
            gamma = get("gamma", float, "default")
        custom_edges = None
        topology = merged.get("topology", "path")
        nodes = get("nodes", int, 20)
        if "edges_file" in merged:
            try:
                topo = read_topology(merged["edges_file"])
                custom_edges = tuple(sorted(topo.edges))
                topology = "custom"
                if "nodes" in merged and topo.n_nodes != nodes:
                    errors.append(f"edges_file has {topo.n_nodes} nodes but nodes = {nodes}")
                nodes = topo.n_nodes
            except (OSError, ValueError) as exc:
                errors.append(f"edges_file: {exc}")
        rounds = get("rounds", lambda v: None if v.lower() in ("all", "auto") else int(v), None)
        sim = SimulationConfig(
            n_nodes=nodes,
            n_rounds=rounds,
            n_components=get("components", int, 20),
            sigmas=get("sigmas", lambda v: tuple(float(s) for s in _split(v)), (1.0, 3.0, 5.0)),
            reg=get("reg", float, 0.001),
            learning_rate=eta,
            consensus_step=gamma,
            levels=get("levels", _levels, 7),
            topology=topology,
            custom_edges=custom_edges,
            n_jobs=get("jobs", int, 1),
        )
        sim_errors = sim.validate()
        if not sim_errors:
            try:
                sim.build_topology()
            except ValueError as exc:
                sim_errors.append(str(exc))
        errors.extend(sim_errors)

        if seeds is None:
            seeds = get("seeds", lambda v: [int(s) for s in _split(v)], [0])
        if not seeds:
            errors.append("at least one seed is required")
        baselines = []
        single_sigma = get("single_sigma", float, 1.0)
        for name in _split(merged.get("baselines", "")):
            if name not in BASELINE_KINDS:
                errors.append(f"unknown baseline {name!r}")
            else:
                baselines.append(BaselineSpec(name, sigma=single_sigma))
        topologies = _split(merged.get("topologies", "complete, ring, path"))
        for t in topologies:
            if t not in ("complete", "ring", "path"):
                errors.append(f"topologies may only list complete, ring, path; got {t!r}")
        levels_sweep = get("levels_sweep", lambda v: [_levels(s) for s in _split(v)], [7, 15, 31, None])
        for m in levels_sweep:
            if m is not None and sim.n_components >= 1:
                if m < 1 or compression_delta(sim.n_components, m) <= 0:
                    errors.append(f"levels_sweep entry {m} gives a nonpositive compression parameter")
        synthetic = (
            get("synthetic_n", int, 30000),
            get("synthetic_d", int, 23),
            get("synthetic_separation", float, 1.0),
        )
        if errors:
            return None, errors
        return cls(sim, dataset, data_path, images, labels, synthetic, list(seeds), baselines,
                   topologies, levels_sweep), []

    def load_dataset(self):
        if self.dataset == "banana":
            return load_banana(self.data_path)
        if self.dataset == "credit_card":
            return load_credit_card(self.data_path)
        if self.dataset == "mnist":
            return load_mnist(self.images_paths, self.labels_paths)
        if self.dataset == "banana_like":
            return make_banana_like()
        n, d, sep = self.synthetic
        return standardize(make_synthetic(n, d, sep, seed=0))

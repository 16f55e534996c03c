"""Command-line experiment runner.

Subcommands::

    gossip-omkl run <config>                 main run plus configured baselines
    gossip-omkl sweep-topology <config>      complete / ring / path comparison
    gossip-omkl sweep-quantization <config>  M in {7, 15, 31, identity}

Exit status is 0 on success, 1 when the configuration (or its data) is
rejected, and 2 when a simulation fails at runtime. A rejected
configuration writes nothing.

All summaries are computed by reading back the metrics CSVs just written.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import run_baseline
from .config import ExperimentConfig, read_config
from .data import partition
from .plotting import write_line_chart
from .protocol import MetricsLog, run_simulation

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

MAIN_VARIANT = "gossip_omkl"

# applied by sweep-topology unless the config sets them
TOPOLOGY_SWEEP_DEFAULTS = {"eta": "0.1", "gamma": "0.09", "levels": "identity"}

logger = logging.getLogger("gossip_omkl")


class _ConfigRejected(Exception):
    def __init__(self, errors):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


def _parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _load(args, defaults=None):
    """Parse and validate the config and load its dataset, writing nothing."""
    try:
        values = read_config(args.config)
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise _ConfigRejected([str(exc)])
    config, errors = ExperimentConfig.from_mapping(values, defaults, seeds=args.seeds)
    if errors:
        raise _ConfigRejected(errors)
    try:
        dataset = config.load_dataset()
    except (OSError, ValueError) as exc:
        raise _ConfigRejected([f"dataset: {exc}"])
    rounds = config.simulation.n_rounds
    available = dataset.n_samples // config.simulation.n_nodes
    if rounds is not None and rounds > available:
        raise _ConfigRejected([f"rounds = {rounds} exceeds the {available} samples per node"])
    if available == 0:
        raise _ConfigRejected([f"dataset has fewer samples than nodes ({dataset.n_samples})"])
    return config, dataset


def _metrics_name(variant, seed):
    return f"metrics_{seed}.csv" if variant == MAIN_VARIANT else f"metrics_{variant}_{seed}.csv"


def _run_variants(config, dataset, variants, out):
    """Run ``{name: callable(config, partition)}`` for every seed and write CSVs."""
    paths = {name: {} for name in variants}
    for seed in config.seeds:
        part = partition(dataset, config.simulation.n_nodes, seed=seed)
        sim = replace(config.simulation, seed=seed)
        for name, fn in variants.items():
            logger.info("seed %d: %s", seed, name)
            log = fn(sim, part)
            path = out / _metrics_name(name, seed)
            log.to_csv(path)
            paths[name][seed] = path
    return paths


def _read_back(paths):
    """``{variant: {seed: MetricsLog}}`` re-read from disk."""
    return {name: {seed: MetricsLog.from_csv(p) for seed, p in by_seed.items()}
            for name, by_seed in paths.items()}


def _mean_curve(logs):
    curves = [log.average_loss_curve() for log in logs.values()]
    return np.mean(curves, axis=0)


def _write_curves(path, curves):
    names = list(curves)
    T = len(next(iter(curves.values())))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for t in range(T):
            writer.writerow([t + 1] + [repr(float(curves[n][t])) for n in names])


def _chart(path, curves, title):
    series = {name: (np.arange(1, len(c) + 1), c) for name, c in curves.items()}
    write_line_chart(path, series, title=title, xlabel="t", ylabel="average loss")


def _final_table(logs):
    lines = []
    finals = {}
    for name, by_seed in logs.items():
        per_seed = {seed: log.final_average_loss() for seed, log in by_seed.items()}
        finals[name] = float(np.mean(list(per_seed.values())))
        seeds = " ".join(f"{s}:{v:.6f}" for s, v in per_seed.items())
        lines.append(f"{name:<40s} {finals[name]:.6f}   [{seeds}]")
    return finals, lines


def cmd_run(args) -> int:
    config, dataset = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = {MAIN_VARIANT: run_simulation}
    for spec in config.baselines:
        variants[spec.label] = (lambda s: lambda cfg, part: run_baseline(s, cfg, part))(spec)
    logs = _read_back(_run_variants(config, dataset, variants, out))
    finals, table = _final_table(logs)
    best = min(finals, key=finals.get)
    text = [
        f"dataset: {dataset.name} ({dataset.n_samples} samples, {dataset.n_features} features)",
        f"seeds: {','.join(map(str, config.seeds))}",
        "final average loss (mean over seeds) per variant:",
        *table,
        f"lowest: {best}",
    ]
    for name in finals:
        if name != MAIN_VARIANT:
            rel = "below" if finals[MAIN_VARIANT] < finals[name] else "not below"
            text.append(f"{MAIN_VARIANT} is {rel} {name}")
    (out / "summary.txt").write_text("\n".join(text) + "\n")
    curves = {name: _mean_curve(by_seed) for name, by_seed in logs.items()}
    _chart(out / "loss_curve.svg", curves, f"{dataset.name}: average loss")
    print("\n".join(text))
    return EXIT_OK


def cmd_sweep_topology(args) -> int:
    config, dataset = _load(args, TOPOLOGY_SWEEP_DEFAULTS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = {
        kind: (lambda k: lambda cfg, part: run_simulation(replace(cfg, topology=k, custom_edges=None), part))(kind)
        for kind in config.topologies
    }
    logs = _read_back(_run_variants(config, dataset, variants, out))
    finals, table = _final_table(logs)
    curves = {name: _mean_curve(by_seed) for name, by_seed in logs.items()}
    _write_curves(out / "topology_curves.csv", curves)
    _chart(out / "topology_curves.svg", curves, f"{dataset.name}: topology sweep")
    order = sorted(finals, key=finals.get)
    text = ["final average loss (mean over seeds) per topology:", *table,
            "ordering (best first): " + " <= ".join(order)]
    densest = [k for k in ("complete", "ring", "path") if k in finals]
    for a, b in zip(densest, densest[1:]):
        gap = (finals[b] - finals[a]) / abs(finals[a])
        text.append(f"{a} vs {b}: relative gap {gap:+.4%}")
    (out / "topology_summary.txt").write_text("\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK


def _levels_label(m):
    return "identity" if m is None else f"M{m}"


def cmd_sweep_quantization(args) -> int:
    config, dataset = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    levels = list(dict.fromkeys(config.levels_sweep))
    if None not in levels:
        levels.append(None)
    variants = {
        _levels_label(m): (lambda m: lambda cfg, part: run_simulation(replace(cfg, levels=m), part))(m)
        for m in levels
    }
    logs = _read_back(_run_variants(config, dataset, variants, out))
    finals, table = _final_table(logs)
    reference = logs["identity"]
    text = ["final average loss (mean over seeds) per quantizer:", *table, "",
            f"{'quantizer':<10s} {'max |final - identity|':>24s} {'bits/node/round':>16s} {'cumulative bits/node':>22s}"]
    for name, by_seed in logs.items():
        dev = max(abs(log.final_average_loss() - reference[s].final_average_loss())
                  for s, log in by_seed.items())
        first = next(iter(by_seed.values()))
        per_round = float(first.bits_cum[0].mean()) if first.n_rounds else 0.0
        cumulative = float(first.bits_cum[-1].mean()) if first.n_rounds else 0.0
        text.append(f"{name:<10s} {dev:>24.3e} {per_round:>16.1f} {cumulative:>22.1f}")
    (out / "quantization_summary.txt").write_text("\n".join(text) + "\n")
    curves = {name: _mean_curve(by_seed) for name, by_seed in logs.items()}
    _chart(out / "quantization_curves.svg", curves, f"{dataset.name}: quantization sweep")
    print("\n".join(text))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossip-omkl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
        ("run", cmd_run, "run the configured experiment and its baselines"),
        ("sweep-topology", cmd_sweep_topology, "compare complete, ring and path graphs"),
        ("sweep-quantization", cmd_sweep_quantization, "compare quantization levels against identity"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="key = value configuration file")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
        p.add_argument("--seeds", type=_parse_seeds, default=None,
                       help="comma-separated seeds, overriding the config's seeds")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are config errors here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _ConfigRejected as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any simulation failure is a runtime fault
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

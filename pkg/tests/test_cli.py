import csv

import numpy as np
import pytest

from gossip_omkl.cli import main
from gossip_omkl.config import ExperimentConfig, parse_config_text
from gossip_omkl.protocol import MetricsLog

BASE = """\
# tiny synthetic experiment
dataset = synthetic
synthetic_n = 400
synthetic_d = 3
nodes = 4
topology = ring
rounds = 40
components = 5
sigmas = 1, 3
eta = 0.05
gamma = 0.045
"""


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config_text():
    values = parse_config_text("a = 1  # trailing\n\n# comment\nb=x, y\n")
    assert values == {"a": "1", "b": "x, y"}
    with pytest.raises(ValueError, match="line 1"):
        parse_config_text("no equals sign\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_config_text("a = 1\na = 2\n")


def test_experiment_config_defaults():
    config, errors = ExperimentConfig.from_mapping({"dataset": "banana_like"})
    assert errors == []
    sim = config.simulation
    assert (sim.n_nodes, sim.n_components, sim.sigmas, sim.reg, sim.learning_rate, sim.levels) == (
        20, 20, (1.0, 3.0, 5.0), 0.001, 0.01, 7)
    assert config.seeds == [0]


def test_experiment_config_collects_every_violation(tmp_path):
    config, errors = ExperimentConfig.from_mapping({
        "dataset": "banana", "levels": "1", "bogus": "1", "baselines": "oracle", "eta": "fast",
    })
    assert config is None
    assert len(errors) == 5
    assert any("bogus" in e for e in errors)
    assert any("data_path" in e for e in errors)
    assert any("compression parameter" in e for e in errors)


def test_edges_file(tmp_path):
    edges = tmp_path / "g.txt"
    edges.write_text("3\n0 1\n1 2\n")
    config, errors = ExperimentConfig.from_mapping({"dataset": "synthetic", "edges_file": str(edges)})
    assert errors == []
    assert config.simulation.topology == "custom" and config.simulation.n_nodes == 3
    edges.write_text("4\n0 1\n2 3\n")
    _, errors = ExperimentConfig.from_mapping({"dataset": "synthetic", "edges_file": str(edges)})
    assert len(errors) == 1 and "edges_file" in errors[0]


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + "seeds = 0, 1\nbaselines = single_kernel, complete_unquantized\n")
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted([
        "metrics_0.csv", "metrics_1.csv",
        "metrics_single_kernel_sigma1_0.csv", "metrics_single_kernel_sigma1_1.csv",
        "metrics_complete_unquantized_0.csv", "metrics_complete_unquantized_1.csv",
        "summary.txt", "loss_curve.svg",
    ])
    summary = (out / "summary.txt").read_text()
    # the summary must agree with what an external tool re-derives from the CSVs
    finals = [MetricsLog.from_csv(out / f"metrics_{s}.csv").final_average_loss() for s in (0, 1)]
    assert f"{np.mean(finals):.6f}" in summary.splitlines()[3]
    assert (out / "loss_curve.svg").read_text().startswith("<svg")


def test_run_is_reproducible(tmp_path):
    cfg = write_config(tmp_path, BASE)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("metrics_0.csv", "summary.txt", "loss_curve.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path, BASE + "seeds = 0\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o"), "--seeds", "5,6"]) == 0
    assert (tmp_path / "o" / "metrics_5.csv").exists() and not (tmp_path / "o" / "metrics_0.csv").exists()


@pytest.mark.parametrize("extra,fragment", [
    ("levels = 1\n", "compression parameter"),
    ("nodes = 1\n", "nodes"),
    ("rounds = 5000\n", "exceeds"),
    ("colour = blue\n", "unknown key"),
])
def test_rejected_configs_write_nothing(tmp_path, capsys, extra, fragment):
    key = extra.split("=")[0].strip()
    text = "".join(ln for ln in BASE.splitlines(keepends=True) if not ln.startswith(key + " "))
    cfg = write_config(tmp_path, text + extra)
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 1
    assert not out.exists()
    err = capsys.readouterr().err
    assert fragment in err
    assert all(line.startswith("config error: ") for line in err.strip().splitlines())


def test_missing_dataset_file(tmp_path, capsys):
    cfg = write_config(tmp_path, "dataset = credit_card\ndata_path = /nonexistent/cc.csv\n")
    assert main(["sweep-topology", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "does not exist" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_and_usage_errors(tmp_path):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 1
    assert main(["run"]) == 1
    assert main(["run", "x.cfg", "--seeds", "a,b"]) == 1


def test_runtime_fault_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE.replace("eta = 0.05", "eta = 0.9") + "reg = 1e308\nlevels = identity\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "runtime fault" in capsys.readouterr().err


def test_sweep_topology(tmp_path):
    cfg = write_config(tmp_path, BASE.replace("topology = ring\n", ""))
    out = tmp_path / "o"
    assert main(["sweep-topology", cfg, "--out", str(out), "--seeds", "0,1"]) == 0
    with open(out / "topology_curves.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "complete", "ring", "path"]
    assert len(rows) == 41
    summary = (out / "topology_summary.txt").read_text()
    assert "ordering (best first)" in summary
    assert (out / "metrics_path_1.csv").exists()


def test_sweep_topology_two_nodes_coincide(tmp_path):
    cfg = write_config(tmp_path, BASE.replace("nodes = 4", "nodes = 2"))
    out = tmp_path / "o"
    assert main(["sweep-topology", cfg, "--out", str(out)]) == 0
    a = (out / "metrics_complete_0.csv").read_bytes()
    assert a == (out / "metrics_ring_0.csv").read_bytes() == (out / "metrics_path_0.csv").read_bytes()


def test_sweep_quantization(tmp_path):
    cfg = write_config(tmp_path, BASE + "levels_sweep = 7, 15, identity\n")
    out = tmp_path / "o"
    assert main(["sweep-quantization", cfg, "--out", str(out)]) == 0
    lines = (out / "quantization_summary.txt").read_text().splitlines()
    table = {ln.split()[0]: ln.split() for ln in lines if ln.split() and ln.split()[0] in ("M7", "M15", "identity")}
    assert float(table["identity"][-3]) == 0.0
    # ring: two neighbors, two kernels, 8 + ceil(10 * 4 / 8) bytes each
    assert float(table["M7"][-2]) == 2 * 2 * (8 + 5) * 8
    assert float(table["identity"][-2]) == 2 * 2 * 10 * 8 * 8
    assert float(table["M7"][-1]) == 40 * 2 * 2 * (8 + 5) * 8


def test_sweep_quantization_identity_only(tmp_path):
    cfg = write_config(tmp_path, BASE + "levels_sweep = identity\n")
    out = tmp_path / "o"
    assert main(["sweep-quantization", cfg, "--out", str(out)]) == 0
    assert "0.000e+00" in (out / "quantization_summary.txt").read_text()

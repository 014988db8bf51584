import json

import pytest

from qevae import datasets, pqc
from qevae.cli import main


def run_cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "d.json"
    assert run_cli("gen-data", "--family", "circuit", "--qubits", 3, "--seed", 4,
                   "--out", path) == 0
    return path


def test_gen_data(tmp_path, capsys):
    path = tmp_path / "h.json"
    assert run_cli("gen-data", "--family", "haar", "--qubits", 4, "--seed", 42, "--out", path) == 0
    d = datasets.load(path)
    assert len(d.samples) == 1024 and d.family == "haar"
    out = capsys.readouterr().out
    assert "entropy" in out and "uniform-baseline fidelity" in out


def test_gen_data_qkr(tmp_path):
    path = tmp_path / "q.json"
    assert run_cli("gen-data", "--family", "qkr", "--qubits", 8, "--kappa", 6,
                   "--kicks", 1000, "--out", path) == 0
    d = datasets.load(path)
    assert d.n_qubits == 8 and d.family == "qkr"


def test_usage_errors(tmp_path, data):
    assert run_cli("gen-data", "--qubits", 4, "--out", tmp_path / "x.json") == 2
    assert run_cli("gen-data", "--family", "qkr", "--qubits", 3, "--kicks", -1,
                   "--out", tmp_path / "x.json") == 2
    assert run_cli("train", "--model", "qcbm", "--latent", 3, "--data", data,
                   "--out", tmp_path / "c.json") == 2
    assert run_cli("train", "--lr-encoder", 0.5, "--data", data, "--out", tmp_path / "c.json") == 2
    assert run_cli("frobnicate") == 2


def test_io_errors(tmp_path, data):
    assert run_cli("train", "--data", tmp_path / "missing.json", "--out", tmp_path / "c.json") == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 9}))
    assert run_cli("train", "--data", bad, "--out", tmp_path / "c.json") == 1


def test_config_file_and_precedence(tmp_path, data):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"latent": 1, "max_epochs": 2, "batch": 16, "seed": 3}))
    ck = tmp_path / "c.json"
    assert run_cli("train", "--config", cfg, "--batch", 20, "--data", data, "--out", ck) == 0
    obj = json.loads(ck.read_text())
    assert obj["latent_dim"] == 1
    assert obj["train_config"]["batch"] == 20
    assert obj["train_config"]["seed"] == 3
    cfg.write_text(json.dumps({"learning_rate": 0.1}))
    assert run_cli("train", "--config", cfg, "--data", data, "--out", ck) == 2


def test_train_eval_export_and_report(tmp_path, data):
    ck, hist = tmp_path / "c.json", tmp_path / "h.csv"
    assert run_cli("train", "--model", "qevae", "--latent", 2, "--beta", 1.0, "--schedule", "fixed",
                   "--max-epochs", 3, "--data", data, "--out", ck, "--history", hist) == 0
    lines = hist.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,beta,fidelity"
    assert len(lines) == 4
    ck_obj = json.loads(ck.read_text())
    for key in ("schema_version", "model_kind", "n_qubits", "latent_dim", "encoder", "preproc",
                "feature_map", "ansatz", "theta", "train_config", "history"):
        assert key in ck_obj

    rep = tmp_path / "r.json"
    assert run_cli("eval", "--checkpoint", ck, "--data", data, "--out", rep,
                   "--z-samples", 200) == 0
    obj = json.loads(rep.read_text())
    assert set(obj) >= {"fidelities", "gate_counts_before", "gate_counts_after",
                        "n_z_samples", "seeds"}
    assert obj["fidelities"]["uniform"] <= 1 and 0 <= obj["fidelities"]["model"] <= 1
    assert run_cli("eval", "--checkpoint", ck, "--data", data, "--out", rep,
                   "--z-samples", 0) == 2

    qasm = tmp_path / "c.qasm"
    assert run_cli("export-qasm", "--checkpoint", ck, "--out", qasm, "--z", "0.1,-0.2") == 0
    circuit = pqc.from_qasm(qasm.read_text())
    assert circuit.n_qubits == 3
    assert run_cli("export-qasm", "--checkpoint", ck, "--out", qasm, "--z", "0.1") == 2

    cr = tmp_path / "cr.json"
    assert run_cli("compile-report", "--checkpoint", ck, "--layers", 20, "--out", cr,
                   "--z-samples", 200) == 0
    obj = json.loads(cr.read_text())
    assert obj["gate_counts_before"] == {"CX": 40, "RX": 60, "RY": 60}
    assert obj["gate_counts_after"]["CX"] == 2 * 2 + 2 * 2  # map pairs, ansatz chains
    assert "total_reduction" in obj and "model" in obj["fidelities"]


def test_cvae_checkpoint_rejected_by_circuit_commands(tmp_path, data):
    ck = tmp_path / "c.json"
    assert run_cli("train", "--model", "cvae", "--latent", 3, "--max-epochs", 2,
                   "--data", data, "--out", ck) == 0
    assert run_cli("export-qasm", "--checkpoint", ck, "--out", tmp_path / "x.qasm") == 2
    assert run_cli("compile-report", "--checkpoint", ck, "--out", tmp_path / "x.json") == 2


def test_sweep(tmp_path, data):
    out, best = tmp_path / "s.csv", tmp_path / "b.json"
    assert run_cli("sweep", "--data", data, "--out", out, "--latent", "0,1",
                   "--feature-map", "Z,ZZ", "--max-epochs", 2, "--z-samples", 100,
                   "--best-checkpoint", best) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("latent,feature_map,ansatz_reps,beta")
    assert len(rows) == 1 + 4
    fids = [float(r.split(",")[-2]) for r in rows[1:]]
    obj = json.loads(best.read_text())
    assert obj["train_config"] is not None
    rep = tmp_path / "r.json"
    assert run_cli("eval", "--checkpoint", best, "--data", data, "--out", rep,
                   "--z-samples", 100) == 0
    assert json.loads(rep.read_text())["fidelities"]["model"] == pytest.approx(max(fids), abs=1e-12)

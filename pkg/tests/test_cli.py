import json

import numpy as np
import pytest

from qadagrad.cli import main
from qadagrad.data import load_libsvm
from qadagrad.harness import ExperimentConfig, parse_synth_spec, quantcheck, read_jsonl

SMALL = "synth:n=300,d=40,k=5,noise=0.3,test=100,seed=2"


def _train(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["train", "--dataset", SMALL, "--rounds", "20", "-o", str(out), *extra]) == 0
    return out


def test_train_is_reproducible(tmp_path):
    a = _train(tmp_path, "a.jsonl", "--seed", "3")
    b = _train(tmp_path, "b.jsonl", "--seed", "3", "--threads")
    header_a, rounds_a, _ = read_jsonl(a)
    header_b, rounds_b, _ = read_jsonl(b)
    assert rounds_a == rounds_b
    assert _train(tmp_path, "c.jsonl", "--seed", "3").read_bytes() == a.read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QADAGRAD_SEED", "3")
    a = _train(tmp_path, "env.jsonl")
    b = _train(tmp_path, "flag.jsonl", "--seed", "3")
    assert a.read_bytes() == b.read_bytes()


def test_config_echo_and_summary(tmp_path):
    out = _train(tmp_path, "m.jsonl", "--method", "qrda", "--quantizer", "ternary", "--lambda", "0.01",
                 "--eta", "0.1")
    header, rounds, summary = read_jsonl(out)
    assert header["method"] == "qrda" and header["lam"] == 0.01 and header["eta"] == 0.1
    assert header["dim"] == 40 and header["n_train"] == 300 and header["n_test"] == 100
    assert ExperimentConfig.from_dict(header).quantizer == "ternary"
    assert len(rounds) == 20 and [r["round"] for r in rounds] == list(range(1, 21))
    assert summary["total_bits"] == sum(r["bits_up"] + r["bits_down"] for r in rounds)
    assert 0 <= summary["accuracy_pct"] <= 100


def test_zero_rounds(tmp_path):
    out = tmp_path / "z.jsonl"
    assert main(["train", "--dataset", SMALL, "--rounds", "0", "-o", str(out)]) == 0
    _, rounds, summary = read_jsonl(out)
    assert rounds == [] and summary["sparsity_pct"] == 100.0 and summary["total_bits"] == 0


def test_full_precision_methods_ignore_quantizer(tmp_path):
    a = _train(tmp_path, "cmd.jsonl", "--method", "cmd", "--quantizer", "ternary")
    b = _train(tmp_path, "qcmd.jsonl", "--method", "qcmd", "--quantizer", "identity")
    ra, rb = read_jsonl(a)[1], read_jsonl(b)[1]
    assert read_jsonl(a)[0]["effective_quantizer"] == "identity"
    assert ra == rb


def test_csv_output(tmp_path):
    out = _train(tmp_path, "m.csv", "--csv")
    lines = out.read_text().splitlines()
    assert lines[0].startswith("round,train_loss")
    assert lines[1].startswith("# ") and lines[-1].startswith("# ")
    assert len([ln for ln in lines if not ln.startswith("#")]) == 21


def test_trace_dir(tmp_path):
    _train(tmp_path, "t.jsonl", "--trace-dir", str(tmp_path / "trace"))
    assert len(list((tmp_path / "trace").iterdir())) == 20


def test_bad_arguments(tmp_path, capsys):
    assert main(["train", "--dataset", "synth:bogus=1", "--rounds", "1"]) == 2
    assert main(["train", "--dataset", str(tmp_path / "missing.txt")]) == 2
    assert main(["train", "--dataset", SMALL, "--eta", "0"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["train", "--method", "adam"])


def test_quantcheck(capsys):
    assert main(["quantcheck", "--trials", "50", "--seed", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["trials"] == 50
    assert quantcheck(20, dmin=1, dmax=4).ok
    with pytest.raises(ValueError):
        quantcheck(1, dmax=13)


def test_audit(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    assert main(["train", "--dataset", SMALL, "--rounds", "200", "--delta", "10", "--strict-qrda-delta",
                 "--reference", "--reference-factor", "2", "-o", str(out)]) == 0
    assert main(["audit", str(out), "--check-bound"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["dual_prev_checked"] and report["bound_checked"]
    assert main(["audit", str(out), "--slope-range", "5", "6"]) == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"round": 1}\n')
    assert main(["audit", str(bad)]) == 2


def test_gen_synth(tmp_path):
    prefix = tmp_path / "syn"
    assert main(["gen-synth", "--n", "50", "--test-n", "10", "--d", "12", "--k", "3", "--seed", "4",
                 "--out", str(prefix)]) == 0
    train = load_libsvm(f"{prefix}.train", dim=12)
    assert len(train) == 50 and len(load_libsvm(f"{prefix}.test", dim=12)) == 10
    assert np.count_nonzero(np.loadtxt(f"{prefix}.xtrue")) == 3
    out = tmp_path / "f.jsonl"
    assert main(["train", "--dataset", f"{prefix}.train", "--test", f"{prefix}.test", "--rounds", "5",
                 "-o", str(out)]) == 0
    assert read_jsonl(out)[0]["dim"] == 12


def test_parse_synth_spec():
    p = parse_synth_spec("synth:n=5,noise=0.25")
    assert p["n"] == 5 and p["noise"] == 0.25 and p["d"] == 2000
    with pytest.raises(ValueError):
        parse_synth_spec("other:n=1")

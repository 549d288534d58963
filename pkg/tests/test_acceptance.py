"""End-to-end acceptance checks.

Run on their own with ``pytest tests/test_acceptance.py``; a summary with one
PASS/FAIL line per criterion is printed at the end of the session.
"""

import os
import time

import numpy as np
import pytest

from qadagrad import codec
from qadagrad.diagnostics import audit_records
from qadagrad.harness import ExperimentConfig, load_data, quantcheck, train
from qadagrad.quantize import (
    TernaryGradient,
    quantization_error,
    quantize_ternary_stochastic,
    quantize_threshold_approx,
    quantize_threshold_exact,
)
from qadagrad.optimizer import OptimizerConfig
from qadagrad.parallel import Simulation

pytestmark = pytest.mark.slow

# synthetic stand-in for a sparse text corpus
PARITY_DATA = "synth:n=10000,d=2000,k=40,noise=0.5,density=0.1,test=2000,seed=1"
REGRET_DATA = "synth:n=5000,d=50,k=10,noise=1.0,density=0.2,test=1000,seed=1"
PARITY_RUNS = {
    "cmd": dict(method="cmd", eta=0.2, lam=0.002, rounds=6000),
    "qcmd": dict(method="qcmd", eta=0.2, lam=0.002, rounds=6000),
    "rda": dict(method="rda", eta=0.1, lam=0.002, rounds=3000),
    "qrda": dict(method="qrda", eta=0.1, lam=0.002, rounds=3000),
}
AUDITED = []


def _run(**kw):
    cfg = ExperimentConfig(**kw)
    out = list(train(cfg))
    run = {"config": out[0]["config"], "rounds": out[1:-1], "summary": out[-1]["summary"], "cfg": cfg}
    AUDITED.append(run)
    return run


@pytest.fixture(scope="module")
def parity_runs():
    data = load_data(ExperimentConfig(dataset=PARITY_DATA))
    runs = {}
    for name, kw in PARITY_RUNS.items():
        cfg = ExperimentConfig(dataset=PARITY_DATA, quantizer="threshold", workers=2, batch_per_worker=20,
                               seed=0, eval_every=0, **kw)
        out = list(train(cfg, data=data))
        run = {"config": out[0]["config"], "rounds": out[1:-1], "summary": out[-1]["summary"], "cfg": cfg}
        AUDITED.append(run)
        runs[name] = run
    return runs


@pytest.fixture(scope="module")
def regret_run():
    return _run(dataset=REGRET_DATA, method="qcmd", quantizer="ternary", eta=0.5, lam=0.001, rounds=5000,
                seed=1, eval_every=0, reference=True)


@pytest.fixture(scope="module")
def strict_run():
    return _run(dataset=REGRET_DATA, method="qrda", quantizer="ternary", eta=0.5, lam=0.001, delta=5.0,
                rounds=1000, seed=2, eval_every=0, strict_qrda_delta=True)


@pytest.mark.criterion("1", "exact threshold quantizer matches brute force (1000 vectors, d<=12)")
def test_quantizer_optimality():
    t0 = time.perf_counter()
    report = quantcheck(trials=1000, dmin=1, dmax=12, seed=0, draws=10, rtol=1e-12)
    assert report.oracle_violations == 0, report
    assert time.perf_counter() - t0 < 30


STOCHASTIC_DRAWS = 100_000


@pytest.fixture(scope="module")
def unbiasedness():
    """20 vectors of dimension 32, 100k stochastic draws each."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    z_max, dominance = 0.0, 0
    for _ in range(20):
        v = rng.standard_normal(32)
        exact = quantization_error(v, quantize_threshold_exact(v))
        slack = 1e-12 * float(v @ v)
        dominance += exact > quantization_error(v, quantize_threshold_approx(v)) + slack
        total = np.zeros(32)
        for _ in range(STOCHASTIC_DRAWS):
            dense = quantize_ternary_stochastic(v, rng).dense()
            total += dense
            r = v - dense
            dominance += exact > float(r @ r) + slack
        # each entry is +-max|v| with probability |v_i|/max|v|, else 0
        a = np.abs(v)
        se = np.sqrt(np.maximum(a.max() * a - a * a, 0.0) / STOCHASTIC_DRAWS)
        dev = np.abs(total / STOCHASTIC_DRAWS - v)
        # the largest entry is kept every time; only summation rounding remains
        fixed = se == 0
        assert np.all(dev[fixed] <= 1e-9 * a[fixed])
        z_max = max(z_max, float((dev[~fixed] / se[~fixed]).max()))
    return z_max, dominance, time.perf_counter() - t0


@pytest.mark.criterion("2", "stochastic ternary is unbiased within 4 standard errors")
def test_unbiasedness(unbiasedness):
    z_max, _, seconds = unbiasedness
    assert z_max < 4.0
    assert seconds < 60


@pytest.mark.criterion("3", "exact threshold error dominates approx and every stochastic draw")
def test_error_dominance(unbiasedness):
    report = quantcheck(trials=1000, dmin=1, dmax=12, seed=0, draws=10, rtol=1e-12)
    assert report.approx_violations == 0 and report.stochastic_violations == 0
    assert unbiasedness[1] == 0


@pytest.mark.criterion("4", "codec roundtrip and 32+d+2k bit length on 10000 fuzzed messages")
def test_codec_fuzz():
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(10_000):
        d = int(rng.integers(1, 4097))
        k = int(rng.integers(0, d + 1))
        mask = np.zeros(d, dtype=bool)
        mask[rng.choice(d, size=k, replace=False)] = True
        codes = rng.integers(-1, 2, size=d).astype(np.int8)
        q = TernaryGradient(float(rng.uniform(0.001, 10)), codes)
        msg = codec.encode(q, codec.IndicatorBitmap(mask))
        raw = msg.to_bytes()
        out = codec.decode(raw)
        nbits = 32 + d + 2 * k
        bad += codec.payload_bits(msg) != nbits
        bad += 32 + msg.payload_bit_stream().size != nbits
        bad += len(raw) - codec.HEADER_BYTES != (d + 2 * k + 7) // 8
        bad += not np.array_equal(out.codes, np.where(mask, codes, 0))
        bad += out.scale != float(np.float32(q.scale))
    assert bad == 0


@pytest.mark.criterion("5", "quantized methods with identity quantizer replay full precision bitwise")
@pytest.mark.parametrize("workers", [1, 2, 4])
def test_degenerate_equivalence(workers):
    data, _ = load_data(ExperimentConfig(dataset="synth:n=2000,d=200,k=10,noise=0.5,test=0,seed=3"))
    for full, quant in (("cmd", "qcmd"), ("rda", "qrda")):
        traj = []
        for method in (full, quant):
            cfg = OptimizerConfig(method, 0.2, 0.005)
            with Simulation(data, cfg, "identity", workers=workers, batch_size=10, seed=workers) as sim:
                traj.append(np.array([sim.step() and sim.x.copy() for _ in range(200)]))
        assert traj[0].tobytes() == traj[1].tobytes()


@pytest.mark.criterion("7", "synthetic parity: quantized within 1 point of full precision, QRDA sparser")
def test_convergence_parity_synthetic(parity_runs):
    acc = {k: r["summary"]["accuracy_pct"] for k, r in parity_runs.items()}
    spars = {k: r["summary"]["sparsity_pct"] for k, r in parity_runs.items()}
    print(f"\naccuracy {acc}\nsparsity {spars}")
    assert abs(acc["qcmd"] - acc["cmd"]) <= 1.0
    assert abs(acc["qrda"] - acc["rda"]) <= 1.0
    assert spars["qrda"] >= spars["qcmd"]


RCV1_TRAIN = os.environ.get("QADAGRAD_RCV1_TRAIN")
RCV1_TEST = os.environ.get("QADAGRAD_RCV1_TEST")


@pytest.mark.criterion("7-rcv1", "rcv1 parity with published accuracy and sparsity bands")
@pytest.mark.skipif(not (RCV1_TRAIN and RCV1_TEST), reason="set QADAGRAD_RCV1_TRAIN/TEST to LIBSVM files")
@pytest.mark.parametrize("method, eta, lam, acc, spars", [
    ("qcmd", 1.0, 5e-6, 94.99, 73.18),
    ("qrda", 0.1, 0.5, 93.01, 97.39),
])
def test_convergence_parity_rcv1(method, eta, lam, acc, spars):
    rounds = int(os.environ.get("QADAGRAD_RCV1_ROUNDS", "5000"))
    run = _run(dataset=RCV1_TRAIN, test=RCV1_TEST, method=method, quantizer="threshold", eta=eta, lam=lam,
               rounds=rounds, workers=2, batch_per_worker=20, eval_every=0)
    assert abs(run["summary"]["accuracy_pct"] - acc) <= 1.5
    assert abs(run["summary"]["sparsity_pct"] - spars) <= 5.0


@pytest.mark.criterion("8", "average regret decays with log-log slope in [-0.8, -0.3] and stays under the bound")
def test_regret_decay(regret_run):
    c = regret_run["config"]
    report = audit_records(regret_run["rounds"], dim=c["dim"], eta=c["eta"], lam=c["lam"], delta=c["delta"],
                           ref_l1_norm=c["reference_l1_norm"], check_bound=True)
    print(f"\nslope {report.slope:.3f}")
    assert -0.8 <= report.slope <= -0.3
    assert report.bound_checked and report.bound_violations == 0


@pytest.mark.criterion("9", "uplink bits under 20% of dense float once k/d < 0.1 on a sparse run")
def test_bit_savings(parity_runs):
    run = parity_runs["qrda"]
    d = run["config"]["dim"]
    assert run["summary"]["sparsity_pct"] >= 90.0
    checked = 0
    for r in run["rounds"]:
        for k in r["k_up"]:
            if k / d < 0.1:
                checked += 1
                assert 32 + d + 2 * k < 0.2 * codec.dense_float_bits(d)
        assert r["bits_up"] == sum(32 + d + 2 * k for k in r["k_up"])
    total = len(run["rounds"]) * run["cfg"].workers
    print(f"\n{checked} of {total} uplink messages had k/d < 0.1")
    assert checked > 0


@pytest.mark.criterion("6", "dual-norm inequalities hold at every prefix of every run above")
def test_inequality_audit(parity_runs, regret_run, strict_run):
    assert len(AUDITED) >= 6
    for run in AUDITED:
        c = run["config"]
        report = audit_records(run["rounds"], dim=c["dim"], eta=c["eta"], lam=c["lam"], delta=c["delta"],
                               strict=c["strict_qrda_delta"])
        assert report.dual_violations == 0, c["method"]
        if c["strict_qrda_delta"]:
            assert report.dual_prev_checked and report.dual_prev_violations == 0
    assert any(r["config"]["strict_qrda_delta"] for r in AUDITED)

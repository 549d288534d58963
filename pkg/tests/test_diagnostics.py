import numpy as np
import pytest

from qadagrad.data import synth_sparse_dataset
from qadagrad.diagnostics import (
    audit_records,
    checkpoints,
    fit_loglog_slope,
    regret_diagnostics,
    regret_bound,
)
from qadagrad.optimizer import OptimizerConfig
from qadagrad.parallel import Simulation


def test_scalar_history():
    r = regret_diagnostics([[3.0], [4.0]], [[0.0], [0.0]], [1.0, 1.0], [1.0, 1.0], [0.0], eta=1.0)
    assert r.dual_lhs == pytest.approx(3.1) and r.dual_rhs == pytest.approx(5.0)
    assert r.dual_holds and r.g_inf == 5.0 and r.avg_regret == 0.0


def test_zero_history():
    r = regret_diagnostics([[0.0, 0.0]], [[0.0, 0.0]], [0.5], [0.5], [0.0, 0.0], eta=1.0)
    assert r.dual_lhs == r.dual_rhs == r.dual_prev_lhs == 0.0
    assert r.bound == 0.0
    with pytest.raises(ValueError):
        regret_diagnostics(np.zeros((0, 2)), np.zeros((0, 2)), [], [], [0.0, 0.0], eta=1.0)


def test_bound():
    assert regret_bound(10, 2.0, 1.0, 0.5, 4) == pytest.approx(10 * 2 / 2 + 10 * 2 * 1 / (2 * 0.5 * 2))
    rng = np.random.default_rng(0)
    qs = rng.standard_normal((20, 5))
    r = regret_diagnostics(qs, np.zeros((20, 5)), np.ones(20), np.ones(20), np.ones(5), eta=0.1, delta=1e-8)
    assert r.bound > 0 and r.dual_holds


def test_previous_step_variant_needs_large_delta():
    qs = np.random.default_rng(1).uniform(-1, 1, (50, 4))
    r = regret_diagnostics(qs, np.zeros((50, 4)), np.zeros(50), np.zeros(50), np.zeros(4), eta=1.0, delta=1.0)
    assert r.dual_prev_holds


def test_slope_and_checkpoints():
    ts = np.array([10, 100, 1000])
    assert fit_loglog_slope(ts, ts ** -0.5) == pytest.approx(-0.5)
    assert np.isnan(fit_loglog_slope(ts, [-1.0, 0.0, 1.0]))
    cps = checkpoints(5000)
    assert cps[0] == 10 and cps[-1] == 5000 and len(cps) == 25
    assert checkpoints(4)[-1] == 4


def test_records_path_agrees_with_history():
    ds, _ = synth_sparse_dataset(300, 30, 4, noise=0.5, seed=2, density=0.3)
    cfg = OptimizerConfig("qcmd", 0.3, 0.01, 0.5)
    x_ref = np.zeros(30)
    qs, records = [], []
    with Simulation(ds, cfg, "ternary", workers=2, batch_size=10, seed=1, x_ref=x_ref) as sim:
        prev = sim.state.adaptive.sq_accum.copy()
        for m in sim.run(80):
            qs.append(np.sqrt(sim.state.adaptive.sq_accum - prev))
            prev = sim.state.adaptive.sq_accum.copy()
            records.append(m.to_dict())
    rep = audit_records(records, dim=30, eta=0.3, lam=0.01, delta=0.5, ref_l1_norm=0.0, strict=True,
                        check_bound=True)
    hist = regret_diagnostics(np.array(qs), np.zeros((80, 30)), np.zeros(80), np.zeros(80), x_ref,
                              eta=0.3, delta=0.5)
    assert rep.final_dual_lhs == pytest.approx(hist.dual_lhs, rel=1e-9)
    assert rep.final_dual_rhs == pytest.approx(hist.dual_rhs, rel=1e-9)
    assert rep.dual_violations == 0 and rep.dual_prev_checked and rep.dual_prev_violations == 0
    assert rep.bound_checked and len(rep.avg_regret) == len(rep.checkpoints)


def test_audit_missing_fields():
    with pytest.raises(KeyError):
        audit_records([{"round": 1}], dim=1, eta=1.0)
    assert audit_records([], dim=1, eta=1.0).ok

"""
Checking the regret analysis on a live run
==========================================

Each round record carries the scalars needed to rebuild the adagrad
dual-norm inequality and the average regret against a long reference run.
"""

from qadagrad import ExperimentConfig, audit_records, train

cfg = ExperimentConfig(dataset="synth:n=3000,d=50,k=10,noise=1.0,density=0.2,test=500,seed=1",
                       method="qcmd", quantizer="ternary", eta=0.5, lam=0.001, rounds=2000,
                       seed=1, eval_every=0, reference=True)
out = list(train(cfg))
header, rounds = out[0]["config"], out[1:-1]

report = audit_records(rounds, dim=header["dim"], eta=cfg.eta, lam=cfg.lam, delta=cfg.delta,
                       ref_l1_norm=header["reference_l1_norm"], check_bound=True)
print("inequality violations:", report.dual_violations)
print(f"final sides: {report.final_dual_lhs:.3f} <= {report.final_dual_rhs:.3f}")
for t, r, b in list(zip(report.checkpoints, report.avg_regret, report.bound))[::4]:
    print(f"T={t:5d}  avg regret {r:9.5f}  bound {b:9.2f}")
print(f"log-log slope {report.slope:.3f} (about -0.5 expected)")

"""
Training on a simulated parameter server
========================================

Two workers send double-quantized sparse gradients; we compare accuracy,
sparsity and traffic against the full-precision baseline.
"""

from qadagrad import ExperimentConfig, train

data = "synth:n=4000,d=500,k=20,noise=0.5,test=1000,seed=1"
rows = []
for method, quantizer in (("cmd", "identity"), ("qcmd", "threshold"), ("rda", "identity"),
                          ("qrda", "threshold"), ("qrda", "ternary")):
    cfg = ExperimentConfig(dataset=data, method=method, quantizer=quantizer, rounds=800,
                           eta=0.2 if "cmd" in method else 0.1, lam=0.002, eval_every=0)
    summary = list(train(cfg))[-1]["summary"]
    rows.append((method, quantizer, summary))

print(f"{'method':6} {'quantizer':10} {'acc %':>6} {'sparse %':>8} {'Mbit':>8}")
for method, quantizer, s in rows:
    print(f"{method:6} {quantizer:10} {s['accuracy_pct']:6.2f} {s['sparsity_pct']:8.2f} {s['total_bits'] / 1e6:8.2f}")

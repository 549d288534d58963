"""
Adaptive l1 updates
===================

Composite mirror descent takes a per-coordinate step then soft-thresholds;
dual averaging works from the running gradient sum and truncates
coordinates whose average gradient is below lambda.
"""

import numpy as np

from qadagrad import OptimizerConfig, OptimizerState, qcmd_update, qrda_update

rng = np.random.default_rng(1)
grads = rng.normal(0.05, 0.3, size=(200, 8))
grads[:, :2] += 0.4  # two coordinates with a consistent signal

for name, rule in (("cmd", qcmd_update), ("rda", qrda_update)):
    cfg = OptimizerConfig(name, eta=0.1, lam=0.1, delta=1e-8)
    state = OptimizerState.zeros(8, cfg.delta)
    for g in grads:
        state = rule(state, g, cfg)
    print(name, state.x.round(3), "zeros:", int(np.sum(state.x == 0)))

# the dual-averaging support depends only on |z_t| / t > lambda,
# so the iterate is exactly zero wherever the mean gradient is small
print("mean gradient", grads.mean(axis=0).round(3))

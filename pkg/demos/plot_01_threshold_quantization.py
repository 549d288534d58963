"""
Ternary quantization of a gradient
==================================

A gradient ``v`` is replaced by ``s * t`` with ``t`` in {-1, 0, +1}^d.
The threshold quantizer picks the support that minimizes the squared
error; the stochastic quantizer is unbiased but noisier.
"""

import numpy as np

from qadagrad import (
    optimal_threshold,
    oracle_optimal_ternary,
    quantization_error,
    quantize_ternary_stochastic,
    quantize_threshold_approx,
    quantize_threshold_exact,
)

v = np.array([0.1, -0.5, 0.8, 0.05])

# exact solver: scan the sorted magnitudes, keep the prefix maximizing S_k^2 / k
delta, J = optimal_threshold(v)
q = quantize_threshold_exact(v)
print("threshold", delta, "objective", J)
print("scale", q.scale, "codes", q.codes, "error", quantization_error(v, q))

# the brute-force search over all 3^4 code vectors agrees
print("oracle error", oracle_optimal_ternary(v)[2])

# the cheap rule 0.75 * mean|v| happens to find the same support here
print("approx codes", quantize_threshold_approx(v).codes)

# stochastic ternarization keeps each sign with probability |v_i| / max|v|
rng = np.random.default_rng(0)
draws = np.array([quantize_ternary_stochastic(v, rng).dense() for _ in range(20000)])
print("stochastic mean", draws.mean(axis=0).round(3))
print("stochastic mean error", np.mean(((draws - v) ** 2).sum(axis=1)).round(4))

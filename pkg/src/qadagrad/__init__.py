"""Quantized adaptive subgradient methods (QCMD / QRDA adagrad) for sparse
linear models, with a simulated synchronous parameter server."""

from .codec import (
    GradientMessage,
    IndicatorBitmap,
    decode,
    dense_float_bits,
    dense_ternary_bits,
    encode,
    indicator_or,
    payload_bits,
)
from .data import Dataset, SparseExample, evaluate, load_libsvm, logistic_loss_grad, synth_sparse_dataset
from .diagnostics import audit_records, regret_diagnostics, regret_bound
from .harness import ExperimentConfig, audit, quantcheck, train
from .optimizer import (
    Method,
    OptimizerConfig,
    OptimizerState,
    cmd_update,
    proxgd_update,
    qcmd_update,
    qrda_update,
    rda_update,
    update,
)
from .parallel import RoundMetrics, Simulation, run_round
from .quantize import (
    QuantizerKind,
    TernaryGradient,
    optimal_threshold,
    oracle_optimal_ternary,
    quantization_error,
    quantize,
    quantize_ternary_stochastic,
    quantize_threshold_approx,
    quantize_threshold_exact,
)

__version__ = "0.1.0"

"""Experiment driver and verification routines behind the command line."""

import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import diagnostics
from .data import evaluate, load_libsvm, logistic_loss_grad, synth_sparse_dataset
from .optimizer import DEFAULT_DELTA, Method, OptimizerConfig, OptimizerState, cmd_update
from .parallel import Simulation, effective_quantizer
from .quantize import (
    QuantizerKind,
    oracle_optimal_ternary,
    quantization_error,
    quantize_ternary_stochastic,
    quantize_threshold_approx,
    quantize_threshold_exact,
)

__all__ = [
    "SEED_ENV",
    "ExperimentConfig",
    "parse_synth_spec",
    "load_data",
    "reference_solution",
    "train",
    "write_jsonl",
    "write_csv",
    "quantcheck",
    "audit",
]

SEED_ENV = "QADAGRAD_SEED"

SYNTH_DEFAULTS = {"n": 10000, "d": 2000, "k": 40, "noise": 0.5, "density": 0.1, "test": 2000, "seed": 1}


def default_seed():
    return int(os.environ.get(SEED_ENV, "0"))


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a training run.

    ``dataset`` is a LIBSVM path or ``synth[:key=value,...]`` with keys
    ``n, d, k, noise, density, test, seed``.
    """

    dataset: str = "synth"
    test: str = None
    method: str = "qcmd"
    quantizer: str = "threshold"
    workers: int = 2
    batch_per_worker: int = 20
    rounds: int = 1000
    eta: float = 0.2
    lam: float = 0.002
    delta: float = DEFAULT_DELTA
    seed: int = 0
    strict_qrda_delta: bool = False
    threads: bool = False
    bootstrap_full_indicator: bool = True
    eval_every: int = 1
    reference: bool = False
    reference_factor: int = 10

    def __post_init__(self):
        self.method = Method(self.method).value
        self.quantizer = QuantizerKind(self.quantizer).value
        for name in ("workers", "batch_per_worker"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.reference_factor < 1:
            raise ValueError("reference_factor must be positive")
        OptimizerConfig(self.method, self.eta, self.lam, self.delta)

    @property
    def optimizer(self):
        return OptimizerConfig(self.method, self.eta, self.lam, self.delta)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def parse_synth_spec(spec):
    """``synth:n=500,d=50`` -> dict merged over :data:`SYNTH_DEFAULTS`."""
    head, _, rest = spec.partition(":")
    if head != "synth":
        raise ValueError(f"not a synthetic dataset spec: {spec!r}")
    params = dict(SYNTH_DEFAULTS)
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep or key not in params:
            raise ValueError(f"bad synthetic parameter {item!r}")
        params[key] = float(value) if key in ("noise", "density") else int(value)
    return params


def load_data(cfg):
    """Return ``(train, test)``; ``test`` may be ``None`` for a file without a test split."""
    if cfg.dataset.startswith("synth"):
        p = parse_synth_spec(cfg.dataset)
        full, _ = synth_sparse_dataset(p["n"] + p["test"], p["d"], p["k"], p["noise"], p["seed"], p["density"])
        if p["test"] == 0:
            return full, None
        return full.split(p["n"])
    train = load_libsvm(cfg.dataset)
    test = None
    if cfg.test:
        test = load_libsvm(cfg.test)
        dim = max(train.dim, test.dim)
        train = load_libsvm(cfg.dataset, dim=dim) if train.dim < dim else train
        test = load_libsvm(cfg.test, dim=dim) if test.dim < dim else test
    return train, test


def reference_solution(train, cfg, rounds=None):
    """Long single-machine full-precision CMD adagrad run; its final iterate serves as ``x*``."""
    rounds = cfg.reference_factor * cfg.rounds if rounds is None else rounds
    opt = OptimizerConfig(Method.CMD, cfg.eta, cfg.lam, cfg.delta)
    state = OptimizerState.zeros(train.dim, cfg.delta)
    rng = np.random.default_rng([cfg.seed, 0xFEED])
    batch = cfg.workers * cfg.batch_per_worker
    for _ in range(rounds):
        _, g = logistic_loss_grad(state.x, train.subset(rng.integers(len(train), size=batch)))
        state = cmd_update(state, g, opt)
    return state.x


def _accuracy(x, train, test):
    return evaluate(x, test if test is not None else train)


def train(cfg, data=None, trace_dir=None):
    """Yield the config header, one record per round and a final summary, as dicts."""
    train_set, test_set = data if data is not None else load_data(cfg)
    x_ref = reference_solution(train_set, cfg) if cfg.reference else None
    header = cfg.to_dict()
    header.update(
        dim=train_set.dim,
        n_train=len(train_set),
        n_test=None if test_set is None else len(test_set),
        effective_quantizer=effective_quantizer(cfg.method, cfg.quantizer).value,
        reference_l1_norm=None if x_ref is None else float(np.abs(x_ref).sum()),
    )
    yield {"config": header}

    total_bits, mse, psi, last = 0, [], [], None
    sim = Simulation(
        train_set, cfg.optimizer, cfg.quantizer, workers=cfg.workers, batch_size=cfg.batch_per_worker,
        seed=cfg.seed, threads=cfg.threads, bootstrap_full_indicator=cfg.bootstrap_full_indicator,
        test=test_set, x_ref=x_ref, strict_delta=cfg.strict_qrda_delta, trace_dir=trace_dir,
        eval_every=cfg.eval_every,
    )
    with sim:
        for m in sim.run(cfg.rounds):
            total_bits += m.bits_up + m.bits_down
            mse.append(m.mse_error)
            psi.append(m.psi_error)
            last = m
            yield m.to_dict()
        x = sim.x
    yield {
        "summary": {
            "rounds": cfg.rounds,
            "accuracy_pct": _accuracy(x, train_set, test_set),
            "sparsity_pct": 100.0 * float(np.count_nonzero(x == 0)) / x.size,
            "total_bits": total_bits,
            "mean_mse_error": float(np.mean(mse)) if mse else 0.0,
            "mean_psi_error": float(np.mean(psi)) if psi else 0.0,
            "final_train_loss": None if last is None else last.train_loss,
            "nonzeros": int(np.count_nonzero(x)),
        }
    }


def write_jsonl(records, fh):
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


CSV_COLUMNS = (
    "round", "train_loss", "accuracy_pct", "sparsity_pct", "bits_up", "bits_down",
    "k_syn", "mse_error", "psi_error", "single_mse",
)


def write_csv(records, fh):
    """Flat per-round projection; the config header and summary are written as ``#`` comments."""
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for rec in records:
        if "config" in rec or "summary" in rec:
            fh.write("# " + json.dumps(rec, sort_keys=True) + "\n")
            continue
        fh.write(",".join("" if rec.get(c) is None else repr(rec[c]) for c in CSV_COLUMNS) + "\n")


def read_jsonl(path):
    header, rounds, summary = None, [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "config" in rec:
                header = rec["config"]
            elif "summary" in rec:
                summary = rec["summary"]
            else:
                rounds.append(rec)
    if header is None:
        raise KeyError(f"{path}: missing config header")
    return header, rounds, summary


@dataclass
class QuantcheckReport:
    trials: int
    oracle_violations: int = 0
    approx_violations: int = 0
    stochastic_violations: int = 0
    max_oracle_rel_gap: float = 0.0
    max_approx_rel_excess: float = 0.0

    @property
    def ok(self):
        return self.oracle_violations == self.approx_violations == self.stochastic_violations == 0


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def quantcheck(trials=1000, dmin=1, dmax=12, seed=0, draws=10, rtol=1e-12):
    """Certify the exact threshold solver against the brute-force oracle.

    For each trial ``v ~ N(0, I_d)`` with ``d`` uniform in ``[dmin, dmax]``:
    exact error must equal the oracle's (relative ``rtol``), and must not
    exceed the approximate solver's or any of ``draws`` stochastic
    realizations' error by more than ``rtol * ||v||^2`` (rounding in the
    scale mean).
    """
    if dmax > 12 or dmin < 1 or dmin > dmax:
        raise ValueError("dimensions must satisfy 1 <= dmin <= dmax <= 12")
    rng = np.random.default_rng(seed)
    report = QuantcheckReport(trials)
    for _ in range(trials):
        v = rng.standard_normal(int(rng.integers(dmin, dmax + 1)))
        exact = quantization_error(v, quantize_threshold_exact(v))
        oracle = oracle_optimal_ternary(v)[2]
        gap = _rel(exact, oracle)
        report.max_oracle_rel_gap = max(report.max_oracle_rel_gap, gap)
        report.oracle_violations += gap > rtol
        approx = quantization_error(v, quantize_threshold_approx(v))
        report.max_approx_rel_excess = max(report.max_approx_rel_excess, _rel(approx, exact))
        slack = rtol * float(v @ v)
        report.approx_violations += exact > approx + slack
        for _ in range(draws):
            stoch = quantization_error(v, quantize_ternary_stochastic(v, rng))
            report.stochastic_violations += exact > stoch + slack
    return report


def audit(metrics_path, strict=None, check_bound=False, first_checkpoint=10, rtol=diagnostics.INEQ_RTOL):
    """Re-check the dual-norm inequalities (and regret, if recorded) on a ``train`` JSON-lines trace."""
    header, rounds, _ = read_jsonl(metrics_path)
    strict = header.get("strict_qrda_delta", False) if strict is None else strict
    return diagnostics.audit_records(
        rounds, dim=header["dim"], eta=header["eta"], lam=header["lam"], delta=header["delta"],
        ref_l1_norm=header.get("reference_l1_norm"), strict=strict, check_bound=check_bound,
        first_checkpoint=first_checkpoint, rtol=rtol,
    )

"""Synchronous parameter-server simulation with double gradient quantization.

One round, for ``M`` workers holding identical parameter replicas:

1. every worker samples a mini-batch from its shard and computes the
   full-precision gradient;
2. it takes a tentative local step with that gradient and marks the
   coordinates that are nonzero before or after it (the indicator);
3. it quantizes the selected gradient entries and ships them to the server
   as a wire message;
4. the server decodes all ``M`` messages, ORs the indicators, averages the
   decoded gradients, quantizes the average again and broadcasts it on the
   OR-ed support;
5. every worker decodes the broadcast and applies the update rule.

Messages cross the worker/server boundary as bytes in the codec wire format
(except for the uncompressed ``identity`` baseline, which ships float
vectors and is accounted at 32 bits per coordinate). Workers can run on a
thread pool or sequentially; both produce identical results because every
random draw is seeded by ``(seed, worker, round)``.
"""

import os
import queue
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codec
from .data import evaluate, logistic_loss, logistic_loss_grad
from .optimizer import Method, OptimizerState, build_indicator, tentative_update, update
from .quantize import QuantizerKind, TernaryGradient, quantize

__all__ = [
    "ProtocolError",
    "ReplicaDivergence",
    "WorkerNode",
    "ServerNode",
    "RoundMetrics",
    "averaging",
    "measure_quant_error",
    "shard_dataset",
    "effective_quantizer",
    "run_round",
    "Simulation",
    "read_trace",
]

_UPLINK, _DOWNLINK = 0, 1
_TRACE_FRAME = struct.Struct("<BII")
# stream tags for seeding per-(worker, round) generators
_BATCH_STREAM, _QUANT_STREAM, _SERVER_STREAM, _PROBE_STREAM = 0, 1, 2, 3


class ProtocolError(RuntimeError):
    pass


class ReplicaDivergence(RuntimeError):
    pass


@dataclass
class WorkerNode:
    id: int
    shard: object
    state: OptimizerState
    batch_size: int
    seed: int = 0

    def rng(self, round_, stream):
        return np.random.default_rng([self.seed, stream, self.id, round_])


@dataclass
class ServerNode:
    expected_workers: int
    quantizer: QuantizerKind
    seed: int = 0
    round: int = 0
    bootstrap_full_indicator: bool = True

    def rng(self, stream=_SERVER_STREAM):
        return np.random.default_rng([self.seed, stream, self.expected_workers, self.round])


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    bits_up: int
    bits_down: int
    mse_error: float
    psi_error: float
    sparsity_pct: float
    accuracy_pct: float = None
    k_up: list = field(default_factory=list)
    k_syn: int = 0
    single_mse: float = None
    q_inf: float = 0.0
    psi_q_sq: float = 0.0
    psi_prev_q_sq: float = 0.0
    col_norm_sum: float = 0.0
    g_inf: float = 0.0
    l1_norm: float = 0.0
    next_loss: float = None
    next_l1_norm: float = 0.0
    ref_loss: float = None
    dist_inf: float = None

    def to_dict(self):
        return asdict(self)


def averaging(decoded):
    """Coordinate-wise mean, summed in list order in float64."""
    if not decoded:
        raise ValueError("nothing to average")
    dim = np.shape(decoded[0])
    total = np.zeros(dim, dtype=np.float64)
    for v in decoded:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != dim:
            raise ValueError(f"dimension mismatch: {v.shape} != {dim}")
        total += v
    return total / len(decoded)


def measure_quant_error(sync_full, q_t, adaptive):
    """Plain and ``H_t^{-1}``-weighted squared distance of ``q_t`` to ``sync_full``."""
    dense = q_t.dense() if isinstance(q_t, TernaryGradient) else np.asarray(q_t, dtype=np.float64)
    sync_full = np.asarray(sync_full, dtype=np.float64)
    h = adaptive.diag()
    if not dense.shape == sync_full.shape == h.shape:
        raise ValueError("dimension mismatch")
    r2 = (dense - sync_full) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        weighted = np.where(r2 == 0, 0.0, r2 / h)
    return float(r2.sum()), float(weighted.sum())


def shard_dataset(dataset, workers):
    """Contiguous equal splits; the last shard takes the remainder."""
    n = len(dataset)
    if workers < 1 or n < workers:
        raise ValueError(f"cannot split {n} examples over {workers} workers")
    size = n // workers
    bounds = [m * size for m in range(workers)] + [n]
    return [dataset.subset(slice(bounds[m], bounds[m + 1])) for m in range(workers)]


def effective_quantizer(method, quantizer):
    """Full-precision methods always run with the identity quantizer."""
    return QuantizerKind(quantizer) if Method(method).quantized else QuantizerKind.IDENTITY


def _quantize_selected(v, indicator, kind, rng):
    """Quantize only the selected entries of ``v``; result is dense with zeros elsewhere."""
    sel = indicator.bits
    if kind is QuantizerKind.IDENTITY:
        return np.where(sel, v, 0.0)
    codes = np.zeros(v.size, dtype=np.int8)
    if not sel.any():
        return TernaryGradient(0.0, codes)
    sub = quantize(v[sel], kind, rng)
    codes[sel] = sub.codes
    return TernaryGradient(sub.scale, codes)


def _worker_push(worker, server, cfg, round_):
    x = worker.state.x
    rng = worker.rng(round_, _BATCH_STREAM)
    batch = worker.shard.subset(rng.integers(len(worker.shard), size=worker.batch_size))
    loss, grad = logistic_loss_grad(x, batch)
    if round_ == 0 and server.bootstrap_full_indicator:
        indicator = codec.IndicatorBitmap.full(x.size)
    else:
        indicator = build_indicator(x, tentative_update(worker.state, grad, cfg))
    q = _quantize_selected(grad, indicator, server.quantizer, worker.rng(round_, _QUANT_STREAM))
    if isinstance(q, TernaryGradient):
        payload = codec.encode(q, indicator).to_bytes()
    else:
        payload = (indicator, q)
    return worker.id, payload, loss, np.where(indicator.bits, grad, 0.0), batch


def _message_bits(payload, dim):
    if isinstance(payload, bytes):
        return codec.payload_bits(codec.GradientMessage.from_bytes(payload))
    return codec.dense_float_bits(dim)


def _unpack(payload):
    if isinstance(payload, bytes):
        msg = codec.GradientMessage.from_bytes(payload)
        return msg.indicator, codec.decode(msg).dense()
    indicator, values = payload
    return indicator, values


def _trace(trace_dir, round_, frames):
    if trace_dir is None:
        return
    path = os.path.join(trace_dir, f"round_{round_:06d}.bin")
    with open(path, "wb") as fh:
        for direction, worker, payload in frames:
            if isinstance(payload, bytes):
                fh.write(_TRACE_FRAME.pack(direction, worker, len(payload)))
                fh.write(payload)


def read_trace(path):
    """Parse a per-round trace file into ``[(direction, worker, message_bytes), ...]``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    frames, pos = [], 0
    while pos < len(buf):
        direction, worker, size = _TRACE_FRAME.unpack_from(buf, pos)
        pos += _TRACE_FRAME.size
        frames.append(("up" if direction == _UPLINK else "down", worker, buf[pos:pos + size]))
        pos += size
    return frames


def run_round(workers, server, cfg, *, pool=None, test=None, x_ref=None,
              strict_delta=False, trace_dir=None, evaluate_now=True):
    """Execute one synchronous round in place and return its metrics.

    ``pool`` (a ``ThreadPoolExecutor``) runs the worker phases concurrently;
    without it workers run sequentially in id order.
    """
    M = server.expected_workers
    round_ = server.round
    dim = workers[0].state.dim
    x_t = workers[0].state.x.copy()
    prev_h = workers[0].state.adaptive.diag()

    # worker -> server channel
    uplink = queue.Queue(maxsize=M)

    def push(w):
        uplink.put(_worker_push(w, server, cfg, round_))

    if pool is None:
        for w in workers:
            push(w)
    else:
        list(pool.map(push, workers))
    received = []
    while not uplink.empty():
        received.append(uplink.get_nowait())
    if len(received) != M:
        raise ProtocolError(f"expected {M} messages, received {len(received)}")
    received.sort(key=lambda r: r[0])

    indicators, decoded = [], []
    for _, payload, *_ in received:
        ind, dense = _unpack(payload)
        indicators.append(ind)
        decoded.append(dense)
    syn_indicator = indicators[0]
    for ind in indicators[1:]:
        syn_indicator = codec.indicator_or(syn_indicator, ind)
    syn_q = averaging(decoded)
    q_t = _quantize_selected(syn_q, syn_indicator, server.quantizer, server.rng())
    if isinstance(q_t, TernaryGradient):
        down = codec.encode(q_t, syn_indicator).to_bytes()
    else:
        down = (syn_indicator, q_t)

    def pull(w):
        _, q = _unpack(down)
        w.state = update(w.state, q, cfg)

    if pool is None:
        for w in workers:
            pull(w)
    else:
        list(pool.map(pull, workers))

    x_next = workers[0].state.x
    for w in workers[1:]:
        if w.state.x.tobytes() != x_next.tobytes():
            raise ReplicaDivergence(f"worker {w.id} diverged in round {round_}")

    _trace(trace_dir, round_, [(_UPLINK, r[0], r[1]) for r in received] + [(_DOWNLINK, M, down)])

    # instrumentation
    _, q_dense = _unpack(down)
    adaptive = workers[0].state.adaptive
    # full-precision counterpart of syn_q: same selection, no quantization
    sync_full = averaging([r[3] for r in received])
    mse, psi = measure_quant_error(sync_full, q_dense, adaptive)
    single_mse = None
    if server.quantizer is not QuantizerKind.IDENTITY:
        single = _quantize_selected(sync_full, syn_indicator, server.quantizer, server.rng(_PROBE_STREAM))
        r = single.dense() - sync_full
        single_mse = float(r @ r)
    q_inf = float(np.abs(q_dense).max())
    if strict_delta and q_inf > adaptive.delta:
        raise ValueError(f"strict delta mode: |q_t|_inf = {q_inf} exceeds delta = {adaptive.delta}")
    q2 = q_dense * q_dense
    with np.errstate(divide="ignore", invalid="ignore"):
        psi_q_sq = float(np.where(q2 == 0, 0.0, q2 / adaptive.diag()).sum())
        psi_prev_q_sq = float(np.where(q2 == 0, 0.0, q2 / prev_h).sum())
    col_norms = np.sqrt(adaptive.sq_accum)

    metrics = RoundMetrics(
        round=round_ + 1,
        train_loss=float(np.mean([r[2] for r in received])),
        bits_up=sum(_message_bits(r[1], dim) for r in received),
        bits_down=M * _message_bits(down, dim),
        mse_error=mse,
        psi_error=psi,
        sparsity_pct=100.0 * float(np.count_nonzero(x_next == 0)) / dim,
        k_up=[ind.count for ind in indicators],
        k_syn=syn_indicator.count,
        single_mse=single_mse,
        q_inf=q_inf,
        psi_q_sq=psi_q_sq,
        psi_prev_q_sq=psi_prev_q_sq,
        col_norm_sum=float(col_norms.sum()),
        g_inf=float(col_norms.max()),
        l1_norm=float(np.abs(x_t).sum()),
        next_l1_norm=float(np.abs(x_next).sum()),
    )
    if test is not None and evaluate_now:
        metrics.accuracy_pct = evaluate(x_next, test)
    if x_ref is not None:
        batches = [r[4] for r in received]
        metrics.ref_loss = float(np.mean([logistic_loss(x_ref, b) for b in batches]))
        metrics.next_loss = float(np.mean([logistic_loss(x_next, b) for b in batches]))
        metrics.dist_inf = float(np.abs(x_ref - x_t).max())
    server.round += 1
    return metrics


class Simulation:
    """Owns the workers, the server and (optionally) a thread pool.

    Parameters
    ----------
    dataset : Dataset
        Training data, split contiguously over the workers.
    cfg : OptimizerConfig
    quantizer : QuantizerKind or str
        Used at both the worker and the server stage for the quantized
        methods; ignored (identity) for full-precision ones.
    workers : int
    batch_size : int
        Mini-batch size per worker.
    threads : bool
        Run worker phases on a pool of ``workers`` threads.
    """

    def __init__(self, dataset, cfg, quantizer, workers=2, batch_size=20, seed=0,
                 threads=False, bootstrap_full_indicator=True, test=None, x_ref=None,
                 strict_delta=False, trace_dir=None, eval_every=1):
        self.cfg = cfg
        self.test = test
        self.x_ref = x_ref
        self.strict_delta = strict_delta
        self.trace_dir = trace_dir
        self.eval_every = eval_every
        self.server = ServerNode(workers, effective_quantizer(cfg.method, quantizer), seed,
                                 bootstrap_full_indicator=bootstrap_full_indicator)
        self.workers = [
            WorkerNode(m, shard, OptimizerState.zeros(dataset.dim, cfg.delta), batch_size, seed)
            for m, shard in enumerate(shard_dataset(dataset, workers))
        ]
        self._pool = ThreadPoolExecutor(max_workers=workers) if threads else None
        if trace_dir is not None:
            os.makedirs(trace_dir, exist_ok=True)

    @property
    def x(self):
        return self.workers[0].state.x

    @property
    def state(self):
        return self.workers[0].state

    def step(self):
        round_ = self.server.round + 1
        evaluate_now = self.eval_every > 0 and round_ % self.eval_every == 0
        return run_round(self.workers, self.server, self.cfg, pool=self._pool, test=self.test,
                         x_ref=self.x_ref, strict_delta=self.strict_delta,
                         trace_dir=self.trace_dir, evaluate_now=evaluate_now)

    def run(self, rounds):
        for _ in range(rounds):
            yield self.step()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

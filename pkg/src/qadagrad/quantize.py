"""Ternary gradient quantizers.

Every quantizer maps a real vector ``v`` to ``scale * codes`` with
``codes`` in ``{-1, 0, +1}``:

* :func:`quantize_ternary_stochastic` -- unbiased TernGrad-style sampling
  with the max-norm as scaler.
* :func:`quantize_threshold_exact` -- the least-squares optimal
  threshold/scaler pair, found by a sorted scan in ``O(d log d)``.
* :func:`quantize_threshold_approx` -- the ``0.75 * mean(|v|)`` threshold
  heuristic, ``O(d)``.

:func:`oracle_optimal_ternary` enumerates all ``3**d`` code vectors and is
only meant for certifying the exact solver on small inputs.
"""

import enum
import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantizerKind",
    "TernaryGradient",
    "quantize_ternary_stochastic",
    "quantize_threshold_exact",
    "quantize_threshold_approx",
    "optimal_threshold",
    "threshold_objective",
    "quantization_error",
    "oracle_optimal_ternary",
    "quantize",
]

ORACLE_MAX_DIM = 20
_ORACLE_CHUNK_DIM = 12
APPROX_THRESHOLD_FACTOR = 0.75


class QuantizerKind(str, enum.Enum):
    TERNARY_STOCHASTIC = "ternary"
    THRESHOLD_EXACT = "threshold"
    THRESHOLD_APPROX = "threshold-approx"
    IDENTITY = "identity"


@dataclass(frozen=True)
class TernaryGradient:
    """A vector represented as ``scale * codes``.

    ``codes`` is an int8 array with entries in {-1, 0, +1}; ``scale`` is a
    non-negative float. A zero scale forces all codes to 0 (this is what a
    tiny scale underflowing to float32 zero on the wire decodes to).
    """

    scale: float
    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int8)
        if codes.ndim != 1:
            raise ValueError("codes must be one-dimensional")
        if np.any(np.abs(codes) > 1):
            raise ValueError("codes must be in {-1, 0, +1}")
        if not self.scale >= 0.0:
            raise ValueError(f"scale must be non-negative, got {self.scale}")
        if self.scale == 0.0 and codes.any():
            codes = np.zeros_like(codes)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def dim(self):
        return self.codes.shape[0]

    @property
    def nnz(self):
        return int(np.count_nonzero(self.codes))

    def dense(self):
        return self.scale * self.codes.astype(np.float64)

    @classmethod
    def zeros(cls, dim):
        return cls._trusted(0.0, np.zeros(dim, dtype=np.int8))

    @classmethod
    def _trusted(cls, scale, codes):
        # skips validation; codes must already be int8 in {-1, 0, 1}
        obj = object.__new__(cls)
        object.__setattr__(obj, "scale", float(scale))
        object.__setattr__(obj, "codes", codes)
        return obj


def _check_input(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    if v.size == 0:
        raise ValueError("empty input")
    if not np.isfinite(v).all():
        raise ValueError("non-finite gradient")
    return v


def _from_mask(v, mask):
    """Ternarize ``v`` on ``mask`` with the least-squares scale for that support."""
    if not mask.any():
        return TernaryGradient.zeros(v.size)
    scale = np.abs(v[mask]).mean()
    if scale == 0.0:
        return TernaryGradient.zeros(v.size)
    codes = np.sign(v).astype(np.int8)
    codes *= mask
    return TernaryGradient._trusted(scale, codes)


def quantize_ternary_stochastic(v, rng):
    """Unbiased stochastic ternarization.

    Coordinate ``i`` keeps its sign with probability ``|v_i| / max|v|`` and
    is zeroed otherwise, so ``E[scale * codes] == v``.

    Parameters
    ----------
    v : array_like
        Finite, non-empty real vector.
    rng : numpy.random.Generator
        Caller-owned random source.
    """
    v = _check_input(v)
    absv = np.abs(v)
    scale = absv.max()
    if scale == 0.0:
        return TernaryGradient.zeros(v.size)
    keep = rng.random(v.size) * scale < absv
    codes = np.sign(v).astype(np.int8)
    codes *= keep
    return TernaryGradient._trusted(scale, codes)


def threshold_objective(v, delta):
    """``J(delta) = (sum_{|v_i| > delta} |v_i|)**2 / |I_delta|`` (0 for an empty set)."""
    absv = np.abs(np.asarray(v, dtype=np.float64))
    sel = absv[absv > delta]
    if sel.size == 0:
        return 0.0
    return sel.sum() ** 2 / sel.size


def optimal_threshold(v):
    """Return ``(delta, J)`` maximizing the threshold objective.

    Candidates are every distinct ``|v_i|`` (used with strict ``>``) plus one
    value just below the smallest magnitude, which selects everything. Ties
    in ``J`` go to the smallest threshold. For the all-in candidate the
    returned ``delta`` is ``-inf``.
    """
    v = _check_input(v)
    mags = np.sort(np.abs(v))[::-1]
    prefix = np.cumsum(mags)
    counts = np.arange(1, mags.size + 1)
    # a top-k set is realizable by a strict threshold only at group boundaries
    boundary = np.empty(mags.size, dtype=bool)
    boundary[:-1] = mags[:-1] > mags[1:]
    boundary[-1] = True
    objective = np.where(boundary, prefix**2 / counts, -np.inf)
    best = objective.max()
    # largest k attaining the max == smallest threshold
    k = int(np.flatnonzero(objective == best)[-1]) + 1
    delta = mags[k] if k < mags.size else -np.inf
    return float(delta), float(best)


def quantize_threshold_exact(v):
    """Least-squares optimal ternarization via a sorted threshold scan."""
    v = _check_input(v)
    if not np.any(v):
        return TernaryGradient.zeros(v.size)
    delta, _ = optimal_threshold(v)
    return _from_mask(v, np.abs(v) > delta)


def quantize_threshold_approx(v):
    """Ternarize with threshold ``0.75 * mean(|v|)``.

    No fallback to the exact scan: if nothing clears the threshold the zero
    gradient is returned.
    """
    v = _check_input(v)
    absv = np.abs(v)
    delta = APPROX_THRESHOLD_FACTOR * absv.sum() / v.size
    return _from_mask(v, absv > delta)


def quantization_error(v, q):
    """Squared Euclidean distance ``||v - q.scale * q.codes||**2``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (q.dim,):
        raise ValueError(f"dimension mismatch: {v.shape[0] if v.ndim else 0} != {q.dim}")
    r = v - q.dense()
    return float(r @ r)


_code_tables = {}


def _code_table(d):
    table = _code_tables.get(d)
    if table is None:
        table = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int8)
        _code_tables[d] = table
    return table


def oracle_optimal_ternary(v):
    """Exhaustive minimizer of ``||v - s*c||**2`` over s >= 0 and ternary c.

    Returns ``(scale, codes, error)``. Exponential in ``len(v)``; limited to
    20 coordinates. For a fixed code vector ``c`` the best scale is
    ``max(0, <c, v> / nnz(c))`` and the error drops by ``<c, v>**2 / nnz(c)``,
    so the search maximizes that gain.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("empty input")
    if v.size > ORACLE_MAX_DIM:
        raise ValueError(f"oracle limited to dim <= {ORACLE_MAX_DIM}, got {v.size}")
    tail = min(v.size, _ORACLE_CHUNK_DIM)
    head = v.size - tail
    table = _code_table(tail)
    table_nnz = np.count_nonzero(table, axis=1)
    table_proj = table @ v[head:]

    best_gain, best_codes = 0.0, np.zeros(v.size, dtype=np.int8)
    for prefix in itertools.product((-1, 0, 1), repeat=head):
        prefix = np.array(prefix, dtype=np.int8)
        proj = table_proj + prefix @ v[:head]
        nnz = table_nnz + np.count_nonzero(prefix)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where((nnz > 0) & (proj > 0), proj**2 / nnz, 0.0)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain = gain[i]
            best_codes = np.concatenate([prefix, table[i]])

    nnz = np.count_nonzero(best_codes)
    scale = max(0.0, float(best_codes @ v) / nnz) if nnz else 0.0
    resid = v - scale * best_codes
    return scale, best_codes, float(resid @ resid)


def quantize(v, kind, rng=None):
    """Dispatch on :class:`QuantizerKind`. ``IDENTITY`` returns ``v`` unchanged as float64."""
    kind = QuantizerKind(kind)
    if kind is QuantizerKind.IDENTITY:
        return np.asarray(v, dtype=np.float64)
    if kind is QuantizerKind.TERNARY_STOCHASTIC:
        if rng is None:
            raise ValueError("stochastic quantizer needs a random source")
        return quantize_ternary_stochastic(v, rng)
    if kind is QuantizerKind.THRESHOLD_EXACT:
        return quantize_threshold_exact(v)
    return quantize_threshold_approx(v)

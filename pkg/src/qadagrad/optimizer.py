"""Adaptive subgradient update rules for l1-regularized models.

All rules operate coordinate-wise on a diagonal adaptive matrix
``H_t = delta + sqrt(sum_{tau<=t} q_tau**2)``. The current gradient is
accumulated *before* the step, so ``H_t`` includes round ``t``.

``cmd``/``qcmd`` share one closed form (adaptive proximal step followed by
soft-thresholding), as do ``rda``/``qrda`` (dual averaging with l1
truncation). The quantized and full-precision names differ only in what
the caller feeds them.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .codec import IndicatorBitmap

__all__ = [
    "Method",
    "OptimizerConfig",
    "AdaptiveState",
    "OptimizerState",
    "composite_step",
    "dual_averaging_step",
    "qcmd_update",
    "qrda_update",
    "cmd_update",
    "rda_update",
    "proxgd_update",
    "update",
    "tentative_update",
    "build_indicator",
]

DEFAULT_DELTA = 1e-8


class Method(str, enum.Enum):
    PROXGD = "proxgd"
    CMD = "cmd"
    RDA = "rda"
    QCMD = "qcmd"
    QRDA = "qrda"

    @property
    def quantized(self):
        return self in (Method.QCMD, Method.QRDA)

    @property
    def dual_averaging(self):
        return self in (Method.RDA, Method.QRDA)


@dataclass(frozen=True)
class OptimizerConfig:
    method: Method
    eta: float
    lam: float = 0.0
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")


@dataclass
class AdaptiveState:
    """Per-coordinate sum of squared gradients plus the fixed ``delta``."""

    sq_accum: np.ndarray
    delta: float = DEFAULT_DELTA

    @property
    def dim(self):
        return self.sq_accum.shape[0]

    def diag(self):
        """Diagonal of ``H_t``."""
        return self.delta + np.sqrt(self.sq_accum)

    def copy(self):
        return AdaptiveState(self.sq_accum.copy(), self.delta)


@dataclass
class OptimizerState:
    x: np.ndarray
    adaptive: AdaptiveState
    grad_sum: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        if self.grad_sum is None:
            self.grad_sum = np.zeros_like(self.x)

    @classmethod
    def zeros(cls, dim, delta=DEFAULT_DELTA):
        return cls(np.zeros(dim), AdaptiveState(np.zeros(dim), delta))

    @property
    def dim(self):
        return self.x.shape[0]

    def copy(self):
        return OptimizerState(self.x.copy(), self.adaptive.copy(), self.grad_sum.copy(), self.t)


def _as_gradient(state, g):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.x.shape:
        raise ValueError(f"dimension mismatch: gradient {g.shape}, parameters {state.x.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient")
    return g


def _inv(h, numer):
    """``numer / h`` with the ``h == 0`` limit (zero numerator gives 0, else inf)."""
    numer = np.broadcast_to(numer, h.shape)
    out = np.where(numer == 0, 0.0, np.inf)
    return np.divide(numer, h, out=out, where=h > 0)


def composite_step(x, g, h, eta, lam):
    """``sign(u) * max(0, |u| - lam*eta/h)`` with ``u = x - eta*g/h``."""
    u = x - _inv(h, eta * g)
    shrink = _inv(h, np.full_like(h, lam * eta))
    mag = np.abs(u) - shrink
    return np.where(mag > 0, np.sign(u) * mag, 0.0)


def dual_averaging_step(grad_sum, t, h, eta, lam):
    """``sign(-z) * t*eta/h * max(0, |z|/t - lam)`` for running sum ``z``."""
    excess = np.abs(grad_sum) / t - lam
    active = excess > 0
    scale = _inv(h, np.where(active, t * eta * excess, 0.0))
    return np.where(active, -np.sign(grad_sum) * scale, 0.0)


def qcmd_update(state, q, cfg):
    """One composite mirror descent adagrad step driven by ``q``; returns a new state."""
    q = _as_gradient(state, q)
    adaptive = AdaptiveState(state.adaptive.sq_accum + q * q, state.adaptive.delta)
    x = composite_step(state.x, q, adaptive.diag(), cfg.eta, cfg.lam)
    return OptimizerState(x, adaptive, state.grad_sum.copy(), state.t + 1)


def qrda_update(state, q, cfg):
    """One regularized dual averaging adagrad step driven by ``q``; returns a new state."""
    q = _as_gradient(state, q)
    adaptive = AdaptiveState(state.adaptive.sq_accum + q * q, state.adaptive.delta)
    grad_sum = state.grad_sum + q
    t = state.t + 1
    x = dual_averaging_step(grad_sum, t, adaptive.diag(), cfg.eta, cfg.lam)
    return OptimizerState(x, adaptive, grad_sum, t)


cmd_update = qcmd_update
rda_update = qrda_update


def proxgd_update(state, g, cfg):
    """Plain proximal gradient step (identity proximal matrix).

    The squared-gradient accumulator is still maintained so that diagnostics
    can be computed uniformly across methods.
    """
    g = _as_gradient(state, g)
    adaptive = AdaptiveState(state.adaptive.sq_accum + g * g, state.adaptive.delta)
    x = composite_step(state.x, g, np.ones_like(g), cfg.eta, cfg.lam)
    return OptimizerState(x, adaptive, state.grad_sum.copy(), state.t + 1)


_RULES = {
    Method.PROXGD: proxgd_update,
    Method.CMD: cmd_update,
    Method.QCMD: qcmd_update,
    Method.RDA: rda_update,
    Method.QRDA: qrda_update,
}


def update(state, g, cfg):
    return _RULES[cfg.method](state, g, cfg)


def tentative_update(state, g_full, cfg):
    """Parameters a worker would reach with its own full-precision gradient.

    Uses ``H_hat = delta + sqrt(sq_accum + g_full**2)``; ``state`` is not
    modified. Only used to decide which coordinates to transmit.
    """
    return update(state, g_full, cfg).x


def build_indicator(x_t, x_hat):
    """Select coordinates that are nonzero before or after the tentative step."""
    x_t = np.asarray(x_t)
    x_hat = np.asarray(x_hat)
    if x_t.shape != x_hat.shape:
        raise ValueError(f"dimension mismatch: {x_t.shape} != {x_hat.shape}")
    return IndicatorBitmap((x_t != 0) | (x_hat != 0))

"""Runtime checks of the regret analysis.

Two entry points:

* :func:`regret_diagnostics` works on a full in-memory history of applied
  gradients and iterates.
* :func:`audit_records` works on per-round metric records (as streamed by
  the ``train`` command), which carry the per-round scalars needed to
  rebuild every prefix sum without storing whole vectors.

Both compute the adagrad dual-norm inequality

    1/2 sum_t ||q_t||^2_{H_t^-1}  <=  sum_i ||q_{1:T,i}||_2

(always valid), its variant with ``H_{t-1}`` on the left (valid once
``delta >= max_t ||q_t||_inf``), the average regret against a reference
point and the ``d G / sqrt(T) + d G D / (2 eta sqrt(T))`` bound.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegretReport",
    "AuditReport",
    "regret_diagnostics",
    "regret_bound",
    "fit_loglog_slope",
    "audit_records",
]

INEQ_RTOL = 1e-12


@dataclass
class RegretReport:
    rounds: int
    avg_regret: float
    avg_regret_next: float
    dual_lhs: float
    dual_rhs: float
    dual_prev_lhs: float
    g_inf: float
    d_inf: float
    bound: float

    @property
    def dual_holds(self):
        return self.dual_lhs <= self.dual_rhs * (1 + INEQ_RTOL)

    @property
    def dual_prev_holds(self):
        return self.dual_prev_lhs <= self.dual_rhs * (1 + INEQ_RTOL)


def regret_bound(dim, g_inf, d_inf, eta, rounds):
    root = np.sqrt(rounds)
    return dim * g_inf / root + dim * g_inf * d_inf / (2.0 * eta * root)


def _dual_norm_terms(q2, h):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(q2 == 0, 0.0, q2 / h).sum(axis=-1)


def regret_diagnostics(qs, xs, losses, ref_losses, x_star, eta, lam=0.0, delta=0.0,
                       next_losses=None, xs_next=None):
    """Regret and inequality quantities for a complete history.

    Parameters
    ----------
    qs : (T, d) array
        Gradients actually applied, one row per round.
    xs : (T, d) array
        Iterates ``x_t`` at which round ``t``'s loss was taken.
    losses, ref_losses : (T,) arrays
        ``f_t(x_t)`` and ``f_t(x_star)``.
    next_losses, xs_next : optional
        ``f_t(x_{t+1})`` and ``x_{t+1}`` for the shifted regret variant.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    T, d = qs.shape
    if T == 0:
        raise ValueError("empty history")
    x_star = np.asarray(x_star, dtype=np.float64)
    q2 = qs * qs
    cum = np.cumsum(q2, axis=0)
    h = delta + np.sqrt(cum)
    h_prev = delta + np.sqrt(np.vstack([np.zeros((1, d)), cum[:-1]]))
    col = np.sqrt(cum[-1])

    ref = np.asarray(ref_losses, dtype=np.float64) + lam * np.abs(x_star).sum()
    gaps = np.asarray(losses, dtype=np.float64) + lam * np.abs(xs).sum(axis=1) - ref
    if next_losses is not None and xs_next is not None:
        xs_next = np.atleast_2d(np.asarray(xs_next, dtype=np.float64))
        gaps_next = np.asarray(next_losses, dtype=np.float64) + lam * np.abs(xs_next).sum(axis=1) - ref
        avg_next = float(gaps_next.mean())
    else:
        avg_next = float("nan")
    g_inf = float(col.max())
    d_inf = float(np.abs(x_star[None, :] - xs).max())
    return RegretReport(
        rounds=T,
        avg_regret=float(gaps.mean()),
        avg_regret_next=avg_next,
        dual_lhs=0.5 * float(_dual_norm_terms(q2, h).sum()),
        dual_rhs=float(col.sum()),
        dual_prev_lhs=0.5 * float(_dual_norm_terms(q2, h_prev).sum()),
        g_inf=g_inf,
        d_inf=d_inf,
        bound=float(regret_bound(d, g_inf, d_inf, eta, T)),
    )


def fit_loglog_slope(ts, values):
    """Least-squares slope of ``log(values)`` against ``log(ts)``; non-positive values are dropped."""
    ts = np.asarray(ts, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = values > 0
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(ts[keep]), np.log(values[keep]), 1)
    return float(slope)


def checkpoints(rounds, first=10, count=25):
    """Log-spaced prefix lengths from ``first`` to ``rounds``."""
    first = min(first, rounds)
    return np.unique(np.round(np.geomspace(first, rounds, count)).astype(int))


@dataclass
class AuditReport:
    rounds: int
    dual_violations: int = 0
    dual_prev_checked: bool = False
    dual_prev_violations: int = 0
    bound_checked: bool = False
    bound_violations: int = 0
    final_dual_lhs: float = 0.0
    final_dual_rhs: float = 0.0
    avg_regret: list = field(default_factory=list)
    avg_regret_next: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    slope: float = float("nan")

    @property
    def ok(self):
        return self.dual_violations == 0 and self.dual_prev_violations == 0 and self.bound_violations == 0


_REQUIRED = ("psi_q_sq", "psi_prev_q_sq", "col_norm_sum", "g_inf", "q_inf")


def audit_records(records, dim, eta, lam=0.0, delta=0.0, ref_l1_norm=None,
                  strict=False, check_bound=False, first_checkpoint=10, rtol=INEQ_RTOL):
    """Recompute every prefix inequality from streamed round records.

    ``strict`` enables the ``H_{t-1}`` variant (only meaningful when
    ``delta >= max |q|``; prefixes where that fails are skipped). Regret is
    evaluated only when the records carry reference losses.
    """
    T = len(records)
    report = AuditReport(rounds=T)
    if T == 0:
        return report
    for key in _REQUIRED:
        if any(key not in r for r in records):
            raise KeyError(f"metrics trace lacks field {key!r}")
    col = lambda key: np.array([r[key] for r in records], dtype=np.float64)  # noqa: E731

    lhs1 = 0.5 * np.cumsum(col("psi_q_sq"))
    rhs = col("col_norm_sum")
    report.dual_violations = int(np.sum(lhs1 > rhs * (1 + rtol)))
    report.final_dual_lhs = float(lhs1[-1])
    report.final_dual_rhs = float(rhs[-1])

    if strict:
        report.dual_prev_checked = True
        lhs2 = 0.5 * np.cumsum(col("psi_prev_q_sq"))
        applicable = np.maximum.accumulate(col("q_inf")) <= delta
        report.dual_prev_violations = int(np.sum(applicable & (lhs2 > rhs * (1 + rtol))))

    if all(r.get("ref_loss") is not None for r in records) and ref_l1_norm is not None:
        ts = np.arange(1, T + 1)
        ref = col("ref_loss") + lam * ref_l1_norm
        avg = np.cumsum(col("train_loss") + lam * col("l1_norm") - ref) / ts
        avg_next = np.cumsum(col("next_loss") + lam * col("next_l1_norm") - ref) / ts
        d_inf = np.maximum.accumulate(col("dist_inf"))
        bound = regret_bound(dim, col("g_inf"), d_inf, eta, ts)
        cps = checkpoints(T, first_checkpoint)
        report.checkpoints = cps.tolist()
        report.avg_regret = avg[cps - 1].tolist()
        report.avg_regret_next = avg_next[cps - 1].tolist()
        report.bound = bound[cps - 1].tolist()
        report.slope = fit_loglog_slope(cps, avg[cps - 1])
        if check_bound:
            report.bound_checked = True
            report.bound_violations = int(np.sum((avg > bound) | (avg_next > bound)))
    return report

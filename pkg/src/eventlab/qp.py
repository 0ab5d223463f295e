"""Minimum-norm quadratic programming under interval balance constraints.

Solves  min ½‖w‖²  subject to  lo ≤ Aᵀw ≤ hi  (componentwise, lo = hi allowed)
and optionally w ≥ 0, with a primal active-set method.  The identity Hessian
makes every working-set subproblem a minimum-norm solve onto the active
constraint planes, so iterates are exact up to one small dense least-squares
solve per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

__all__ = ["IntervalQP", "QpSolution", "solve_interval_qp", "minimal_inflation"]

_FEAS_TOL = 1e-9
_DUAL_TOL = 1e-9
_STEP_TOL = 1e-12


@dataclass(frozen=True)
class IntervalQP:
    """min ½‖w‖² s.t. lo ≤ Aᵀw ≤ hi (+ optional w ≥ 0)."""

    A: np.ndarray          # (n, m) constraint gradients as columns
    lo: np.ndarray         # (m,)
    hi: np.ndarray         # (m,)
    nonneg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        n, m = self.A.shape
        if self.lo.shape != (m,) or self.hi.shape != (m,):
            raise ValueError("bound vectors must match the constraint count")
        if (self.lo > self.hi + 1e-15).any():
            raise ValueError("constraint interval with lo > hi")


@dataclass
class QpSolution:
    weights: np.ndarray
    duals: np.ndarray              # per constraint, signed (lo-active > 0, hi-active < 0)
    status: str                    # optimal | infeasible | max-iterations
    iterations: int
    kkt_residual: float
    violation: np.ndarray          # per-constraint interval violation at weights
    infeasibility: dict = field(default_factory=dict)


def _cheap_start(qp: IntervalQP, feas_tol: float) -> np.ndarray | None:
    """Feasible point without a linear program when one is easy to find.

    The minimum-norm solve onto the interval midpoints lands inside every
    interval whenever the midpoint system is consistent, which covers the
    typical well-posed balancing problem; anything else defers to phase one.
    """
    mid = 0.5 * (qp.lo + qp.hi)
    G = qp.A.T @ qp.A
    lam, *_ = np.linalg.lstsq(G, mid, rcond=None)
    w = qp.A @ lam
    if qp.nonneg:
        if (w < -feas_tol).any():
            return None
        w = np.maximum(w, 0.0)
    if float(_violation(qp, w).max(initial=0.0)) > feas_tol:
        return None
    return w


def _phase_one(qp: IntervalQP) -> np.ndarray | None:
    """A feasible point via linear programming, or None when the polytope is empty."""
    n, m = qp.A.shape
    eq = qp.hi - qp.lo <= 1e-15
    A_eq = qp.A[:, eq].T if eq.any() else None
    b_eq = qp.lo[eq] if eq.any() else None
    ineq = ~eq
    A_ub, b_ub = None, None
    if ineq.any():
        A_ub = np.vstack([qp.A[:, ineq].T, -qp.A[:, ineq].T])
        b_ub = np.concatenate([qp.hi[ineq], -qp.lo[ineq]])
    bounds = (0, None) if qp.nonneg else (None, None)
    res = linprog(np.zeros(n), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success:
        return None
    w = np.asarray(res.x, dtype=float)
    if qp.nonneg:
        w = np.maximum(w, 0.0)
    return w


def _violation(qp: IntervalQP, w: np.ndarray) -> np.ndarray:
    vals = qp.A.T @ w
    return np.maximum(np.maximum(qp.lo - vals, vals - qp.hi), 0.0)


def _scale(qp: IntervalQP) -> float:
    return max(1.0, float(np.abs(qp.A).max(initial=0.0)),
               float(np.abs(qp.lo).max(initial=0.0)),
               float(np.abs(qp.hi).max(initial=0.0)))


def solve_interval_qp(qp: IntervalQP, max_iter: int | None = None) -> QpSolution:
    """Primal active-set solve; equality-only unrestricted problems short-circuit
    to the closed-form minimum-norm solution of the KKT system."""
    n, m = qp.A.shape
    scale = _scale(qp)
    feas_tol = _FEAS_TOL * scale
    eq = qp.hi - qp.lo <= 1e-15

    if not qp.nonneg and eq.all():
        return _solve_equality(qp, feas_tol)

    w = _cheap_start(qp, feas_tol)
    if w is None:
        w = _phase_one(qp)
    if w is None:
        return _report_infeasible(qp)
    if max_iter is None:
        max_iter = 100 * (m + 1) + 2 * n + 100

    vals = qp.A.T @ w
    # active side per constraint: 0 free, +1 at lo, -1 at hi (equalities use +1)
    side = np.zeros(m, dtype=int)
    side[eq] = 1
    side[~eq & (vals <= qp.lo + feas_tol)] = 1
    side[(~eq) & (side == 0) & (vals >= qp.hi - feas_tol)] = -1
    bound_active = (w <= feas_tol) if qp.nonneg else np.zeros(n, bool)
    if qp.nonneg:
        w = np.where(bound_active, 0.0, w)

    lam = np.zeros(m)
    for it in range(1, max_iter + 1):
        J = np.where(side != 0)[0]
        free = ~bound_active
        target = np.where(side[J] > 0, qp.lo[J], qp.hi[J])
        AFJ = qp.A[np.ix_(free, J)]
        if J.size:
            G = AFJ.T @ AFJ
            lam_J, *_ = np.linalg.lstsq(G, target, rcond=None)
            x = np.zeros(n)
            x[free] = AFJ @ lam_J
        else:
            lam_J = np.empty(0)
            x = np.zeros(n)

        p = x - w
        if float(np.abs(p).max(initial=0.0)) <= _STEP_TOL * scale:
            mu = -(qp.A[np.ix_(bound_active, J)] @ lam_J) if bound_active.any() else np.empty(0)
            # optimality: lo-active need lam >= 0, hi-active lam <= 0, bounds mu >= 0
            worst, worst_kind, worst_idx = -_DUAL_TOL * scale, None, -1
            for k, j in enumerate(J):
                if eq[j]:
                    continue
                v = lam_J[k] if side[j] > 0 else -lam_J[k]
                if v < worst:
                    worst, worst_kind, worst_idx = v, "constraint", j
            if mu.size:
                bidx = np.where(bound_active)[0]
                k = int(np.argmin(mu))
                if mu[k] < worst:
                    worst, worst_kind, worst_idx = mu[k], "bound", bidx[k]
            if worst_kind is None:
                lam = np.zeros(m)
                lam[J] = lam_J
                return _finish(qp, w, lam, bound_active, "optimal", it, scale)
            if worst_kind == "constraint":
                side[worst_idx] = 0
            else:
                bound_active[worst_idx] = False
            continue

        # ratio test against inactive constraint sides and inactive bounds
        alpha, block_kind, block_idx, block_side = 1.0, None, -1, 0
        d = qp.A.T @ p
        cvals = qp.A.T @ w
        for j in range(m):
            if side[j] != 0 or eq[j]:
                continue
            if d[j] > _STEP_TOL * scale:
                a = (qp.hi[j] - cvals[j]) / d[j]
                if a < alpha:
                    alpha, block_kind, block_idx, block_side = a, "constraint", j, -1
            elif d[j] < -_STEP_TOL * scale:
                a = (qp.lo[j] - cvals[j]) / d[j]
                if a < alpha:
                    alpha, block_kind, block_idx, block_side = a, "constraint", j, 1
        if qp.nonneg:
            desc = np.where(~bound_active & (p < -_STEP_TOL * scale))[0]
            if desc.size:
                ratios = -w[desc] / p[desc]
                k = int(np.argmin(ratios))
                if ratios[k] < alpha:
                    alpha, block_kind, block_idx = float(ratios[k]), "bound", int(desc[k])

        alpha = max(alpha, 0.0)
        w = w + alpha * p
        if qp.nonneg:
            w[bound_active] = 0.0
        if block_kind == "constraint":
            side[block_idx] = block_side
        elif block_kind == "bound":
            bound_active[block_idx] = True
            w[block_idx] = 0.0
        elif alpha >= 1.0:
            w = x

    lam = np.zeros(m)
    return _finish(qp, w, lam, bound_active, "max-iterations", max_iter, scale)


def _solve_equality(qp: IntervalQP, feas_tol: float) -> QpSolution:
    """Closed form for min ‖w‖² s.t. Aᵀw = b: w = Aλ with (AᵀA)λ = b."""
    b = qp.lo
    G = qp.A.T @ qp.A
    lam, *_ = np.linalg.lstsq(G, b, rcond=None)
    w = qp.A @ lam
    viol = _violation(qp, w)
    if float(viol.max(initial=0.0)) > max(feas_tol, 1e-8 * _scale(qp)):
        return _report_infeasible(qp)
    return _finish(qp, w, lam, np.zeros(qp.A.shape[0], bool), "optimal", 1, _scale(qp))


def _finish(qp, w, lam, bound_active, status, iterations, scale) -> QpSolution:
    viol = _violation(qp, w)
    stat = w - qp.A @ lam
    stat[bound_active] = 0.0       # absorbed by bound multipliers
    if qp.nonneg:
        mu = (w - qp.A @ lam)[bound_active]
        dual_viol = float(max(0.0, -(mu.min(initial=0.0))))
    else:
        dual_viol = 0.0
    kkt = max(float(np.abs(stat).max(initial=0.0)),
              float(viol.max(initial=0.0)),
              dual_viol)
    if status == "max-iterations" and kkt <= 1e-8 * scale:
        status = "optimal"
    return QpSolution(weights=w, duals=lam, status=status, iterations=iterations,
                      kkt_residual=kkt, violation=viol)


def _report_infeasible(qp: IntervalQP) -> QpSolution:
    info = minimal_inflation(qp)
    n, m = qp.A.shape
    return QpSolution(
        weights=np.zeros(n), duals=np.zeros(m), status="infeasible",
        iterations=0, kkt_residual=np.inf,
        violation=info.get("residuals", np.zeros(m)),
        infeasibility=info,
    )


def minimal_inflation(qp: IntervalQP, tol: float = 1e-10) -> dict:
    """Smallest uniform widening s of every interval that restores feasibility,
    found by bisection on linear-programming feasibility checks.

    Returns {"inflation": s, "most_violated": constraint index,
    "residuals": per-constraint violation at the closest feasible point}.
    """

    def feasible_point(s: float):
        widened = IntervalQP(qp.A, qp.lo - s, qp.hi + s, nonneg=qp.nonneg)
        return _phase_one(widened)

    scale = _scale(qp)
    hi = max(1.0, scale)
    w = feasible_point(hi)
    for _ in range(60):
        if w is not None:
            break
        hi *= 2
        w = feasible_point(hi)
    if w is None:
        return {"inflation": np.inf, "most_violated": None, "residuals": np.full(qp.lo.shape, np.inf)}

    lo_s = 0.0
    while hi - lo_s > tol * max(1.0, hi):
        mid = 0.5 * (lo_s + hi)
        cand = feasible_point(mid)
        if cand is None:
            lo_s = mid
        else:
            hi, w = mid, cand
    residuals = _violation(qp, w)
    worst = int(np.argmax(residuals)) if residuals.size else None
    return {"inflation": float(hi), "most_violated": worst, "residuals": residuals}

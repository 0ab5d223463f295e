"""Two-way fixed-effects regression and its exact implied-weight decomposition.

The dynamic specification regresses the outcome on unit indicators, time
indicators, baseline covariates, and relative-event-time indicators (the
period immediately before initiation is the omitted reference).  Every target
coefficient is a linear functional h'Y of the outcomes; splitting h by the
sign convention of the target indicator yields a weighted treatment/control
contrast whose components each sum to one and are exactly balanced on every
retained design column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contrast import WeightedContrast
from .panel import NEVER_REL, Panel, PanelError, ResolvedEstimand

__all__ = [
    "TwfeSpec",
    "TwfeFit",
    "fit_twfe",
    "implied_weights",
    "twfe_general_estimate",
    "demean_two_way",
]

#: Rank tolerance for the deterministic in-order collinearity scan.
_RANK_TOL = 1e-9


@dataclass(frozen=True)
class TwfeSpec:
    """Regression layout: dynamic (per-relative-time) or static, with options.

    ``horizon=(a, b)`` restricts the event-time indicators to relative times
    within [a, b]; ``bin_endpoints=True`` pools times beyond the horizon into
    the endpoint indicators instead of dropping those observations' indicators.
    ``interaction_weighted`` replaces tau_l with cohort-by-relative-time
    indicators tau_{t0,l}.
    """

    dynamic: bool = True
    horizon: tuple[int, int] | None = None
    covariates: tuple[str, ...] = ()
    interaction_weighted: bool = False
    bin_endpoints: bool = False


@dataclass
class TwfeFit:
    panel: Panel
    spec: TwfeSpec
    column_names: list[str]            # retained columns, in canonical order
    dropped_columns: list[str]
    coefficients: np.ndarray           # per retained column
    design: np.ndarray                 # (N, p) retained design matrix
    obs_index: np.ndarray              # (N, 2) rows of (unit_idx, time 1..T)
    y: np.ndarray                      # (N,) outcomes
    gram_cholesky: np.ndarray          # Cholesky factor of X'X, reused downstream
    condition_number: float
    drop_witness: dict[str, str] = field(default_factory=dict)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def tau_names(self) -> list[str]:
        return [c for c in self.column_names if c.startswith("tau[")]

    def tau(self, l: int, cohort: int | None = None) -> float:
        return self.coefficient(tau_name(l, cohort))

    def fitted(self) -> np.ndarray:
        return self.design @ self.coefficients

    def residuals(self) -> np.ndarray:
        return self.y - self.fitted()

    def estimator_row(self, name: str) -> np.ndarray:
        """h with h'Y = coefficient: the row of the least-squares estimator map."""
        j = self.column_names.index(name)
        e = np.zeros(len(self.column_names))
        e[j] = 1.0
        a = _chol_solve(self.gram_cholesky, e)
        return self.design @ a

    def leverage(self) -> np.ndarray:
        """Diagonal of the hat matrix for the retained design."""
        w = np.linalg.solve(self.gram_cholesky, self.design.T)
        return np.einsum("ji,ji->i", w, w)


def tau_name(l: int, cohort: int | None = None) -> str:
    return f"tau[{cohort},{l}]" if cohort is not None else f"tau[{l}]"


def _chol_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, z)


def build_design(panel: Panel, spec: TwfeSpec):
    """Full design matrix in the canonical column order
    [unit dummies, time dummies, covariates, event-time dummies]."""
    n_i, n_t = panel.n_units, panel.n_times
    rel = panel.relative_time()
    keep = ~panel.missing if panel.missing is not None else np.ones((n_i, n_t), bool)
    obs = np.argwhere(keep)
    obs_index = np.column_stack([obs[:, 0], obs[:, 1] + 1])  # time as 1..T
    n = len(obs_index)
    y = panel.outcome[keep]

    cols: list[np.ndarray] = []
    names: list[str] = []
    for i in range(n_i):
        cols.append((obs_index[:, 0] == i).astype(float))
        names.append(f"unit[{panel.units[i]}]")
    for t in range(1, n_t + 1):
        cols.append((obs_index[:, 1] == t).astype(float))
        names.append(f"time[{panel.time_label(t)}]")
    for name in spec.covariates:
        if name not in panel.covariates:
            raise PanelError(f"unknown covariate {name!r}")
        cols.append(panel.covariates[name][obs_index[:, 0]])
        names.append(f"x[{name}]")

    rel_obs = rel[obs_index[:, 0], obs_index[:, 1] - 1]
    if spec.dynamic:
        observed = sorted({int(r) for r in rel_obs if r != NEVER_REL})
        if spec.horizon is not None:
            a, b = spec.horizon
            levels = [l for l in observed if a <= l <= b]
        else:
            levels = observed
        if spec.interaction_weighted:
            cohorts = sorted({int(g) for g in panel.init_time if g != panel.never_code})
            for t0 in cohorts:
                for l in levels:
                    if l == -1:
                        continue
                    ind = (rel_obs == l) & (panel.init_time[obs_index[:, 0]] == t0)
                    if ind.any():
                        cols.append(ind.astype(float))
                        names.append(tau_name(l, t0))
        else:
            for l in levels:
                if l == -1:
                    continue
                if spec.bin_endpoints and spec.horizon is not None and l in spec.horizon:
                    a, b = spec.horizon
                    if l == a:
                        ind = (rel_obs <= a) & (rel_obs != NEVER_REL)
                    else:
                        ind = rel_obs >= b
                else:
                    ind = rel_obs == l
                cols.append(ind.astype(float))
                names.append(tau_name(l))
    else:
        cols.append((rel_obs >= 0).astype(float) * (rel_obs != NEVER_REL))
        names.append("tau")

    X = np.column_stack(cols) if cols else np.empty((n, 0))
    return X, names, obs_index, y


def _select_columns(X: np.ndarray, names: list[str]):
    """In-order greedy rank scan: keep a column iff it is independent of the
    columns already kept, so drops are deterministic (later columns lose)."""
    n = X.shape[0]
    Q = np.empty((n, 0))
    keep, dropped, witness = [], [], {}
    for j, name in enumerate(names):
        c = X[:, j]
        norm = np.linalg.norm(c)
        if norm == 0:
            dropped.append(name)
            witness[name] = "all-zero column"
            continue
        r = c - Q @ (Q.T @ c)
        # one re-orthogonalization pass for numerical safety
        r = r - Q @ (Q.T @ r)
        if np.linalg.norm(r) <= _RANK_TOL * norm:
            dropped.append(name)
            coeffs = Q.T @ c
            kept_names = [names[k] for k in keep]
            top = np.argsort(-np.abs(coeffs))[:3]
            witness[name] = "linear combination of " + ", ".join(
                kept_names[k] for k in top if abs(coeffs[k]) > 1e-8
            )
            continue
        Q = np.column_stack([Q, r / np.linalg.norm(r)])
        keep.append(j)
    return keep, dropped, witness


def fit_twfe(panel: Panel, spec: TwfeSpec | None = None) -> TwfeFit:
    """Least-squares fit of the two-way fixed-effects model.

    Collinear columns are dropped deterministically in reverse canonical
    priority (unit dummies survive over time dummies, which survive over
    covariates and event-time indicators).
    """
    spec = spec or TwfeSpec()
    X_full, names, obs_index, y = build_design(panel, spec)
    if spec.dynamic and not any(n.startswith("tau[") for n in names):
        raise PanelError("no non-degenerate event-time indicator in the design")
    keep, dropped, witness = _select_columns(X_full, names)
    X = X_full[:, keep]
    kept_names = [names[j] for j in keep]
    gram = X.T @ X
    chol = np.linalg.cholesky(gram)
    beta = _chol_solve(chol, X.T @ y)
    svals = np.linalg.svd(X, compute_uv=False)
    cond = float(svals[0] / svals[-1]) if len(svals) else 0.0
    return TwfeFit(
        panel=panel,
        spec=spec,
        column_names=kept_names,
        dropped_columns=dropped,
        coefficients=beta,
        design=X,
        obs_index=obs_index,
        y=y,
        gram_cholesky=chol,
        condition_number=cond,
        drop_witness=witness,
    )


def implied_weights(fit: TwfeFit, target: str) -> WeightedContrast:
    """Exact decomposition of a fitted coefficient into a weighted contrast.

    The treatment component carries the estimator-row entries over cells where
    the target indicator is one; the control component carries their negatives
    over all remaining cells.  Both components sum to one and the contrast
    reproduces the coefficient.
    """
    if target in fit.dropped_columns:
        raise PanelError(
            f"target {target!r} was dropped for collinearity: {fit.drop_witness[target]}"
        )
    if target not in fit.column_names:
        raise PanelError(f"unknown coefficient {target!r}")
    h = fit.estimator_row(target)
    ind = fit.design[:, fit.column_names.index(target)]
    treat = ind == 1.0
    weights = np.where(treat, h, -h)
    return WeightedContrast(
        obs_index=fit.obs_index,
        weights=weights,
        treatment_mask=treat,
        outcomes=fit.y,
        provenance={
            "solver": "twfe-implied",
            "target": target,
            "spec": repr(fit.spec),
        },
    )


def twfe_general_estimate(fit: TwfeFit, estimand: ResolvedEstimand) -> float:
    """Corrected estimate for a mixed reference regime:
    tau_{ty-t1} minus the reference-probability-weighted tau_{ty-t} terms.

    Coefficients for "never" and for relative times absorbed by the omitted
    reference period are zero by construction.
    """
    panel = fit.panel

    def tau_value(l: int | None) -> float:
        if l is None or l == -1:
            return 0.0
        name = tau_name(l)
        if name in fit.column_names:
            return fit.coefficient(name)
        raise PanelError(f"required coefficient {name} missing from the fit")

    total = tau_value(estimand.horizon)
    for t, p in estimand.reference.items():
        l = None if t == panel.never_code else estimand.ty - t
        total -= p * tau_value(l)
    return float(total)


def demean_two_way(values: np.ndarray, obs_index: np.ndarray, n_units: int,
                   n_times: int, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Alternating-projections removal of unit and time means from a column.

    Utility for within-transformation fitting on large panels; equivalent to
    projecting out the two fixed-effect dummy blocks.
    """
    v = np.asarray(values, dtype=float).copy()
    ui = obs_index[:, 0]
    ti = obs_index[:, 1] - 1
    for _ in range(max_iter):
        shift = 0.0
        for idx, size in ((ui, n_units), (ti, n_times)):
            sums = np.bincount(idx, weights=v, minlength=size)
            counts = np.bincount(idx, minlength=size)
            means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
            v -= means[idx]
            shift = max(shift, float(np.abs(means).max(initial=0.0)))
        if shift < tol:
            break
    return v

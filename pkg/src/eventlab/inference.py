"""Cluster bootstrap and event-study sweeps.

Resampling is at the unit level: a replicate draws units with replacement and
keeps each drawn unit's full time series, so within-unit dependence is
preserved.  Seeding uses spawned child streams per replicate, making parallel
and serial execution order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .balance import InfeasibleError, robust_contrast
from .panel import AssumptionSet, EstimandSpec, Panel, PanelError, ResolvedEstimand
from .twfe import TwfeSpec, fit_twfe, tau_name

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "EventStudyCurve",
    "resample_panel",
    "cluster_bootstrap",
    "event_study_sweep",
]


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 500
    seed: int | None = None
    ci: tuple[float, float] = (2.5, 97.5)
    max_failure_rate: float = 0.2

    def __post_init__(self):
        if self.replications < 2:
            raise PanelError("bootstrap needs at least 2 replications")


@dataclass
class BootstrapResult:
    estimates: np.ndarray          # (n_success,) or (n_success, d)
    n_failed: int
    se: np.ndarray | float
    ci_lo: np.ndarray | float
    ci_hi: np.ndarray | float
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def f(v):
            v = float(v)
            return None if np.isnan(v) else v

        scalar = np.ndim(self.se) == 0
        return {
            "replications": int(len(self.estimates) + self.n_failed),
            "failed": self.n_failed,
            "se": f(self.se) if scalar else [f(v) for v in self.se],
            "ci_lo": f(self.ci_lo) if scalar else [f(v) for v in self.ci_lo],
            "ci_hi": f(self.ci_hi) if scalar else [f(v) for v in self.ci_hi],
        }


def resample_panel(panel: Panel, rng: np.random.Generator) -> Panel:
    """Draw units with replacement, duplicating full time series.

    Re-drawn units get a draw-index suffix so unit identifiers stay unique.
    """
    n = panel.n_units
    idx = rng.integers(0, n, size=n)
    units = tuple(f"{panel.units[i]}#{k}" for k, i in enumerate(idx))
    return Panel(
        units=units,
        time_labels=panel.time_labels,
        init_time=panel.init_time[idx],
        outcome=panel.outcome[idx],
        covariates={name: col[idx] for name, col in panel.covariates.items()},
        missing=panel.missing[idx] if panel.missing is not None else None,
    )


def cluster_bootstrap(
    panel: Panel,
    pipeline: Callable[[Panel], float | np.ndarray],
    config: BootstrapConfig | None = None,
) -> BootstrapResult:
    """Unit-cluster bootstrap of any deterministic panel->estimate pipeline.

    Replicates where the pipeline raises (empty cohort, infeasible balance,
    rank collapse) are excluded and counted; more than ``max_failure_rate``
    failures aborts with a diagnosis.  Vector-valued pipelines are supported;
    NaN entries are ignored per coordinate.
    """
    config = config or BootstrapConfig()
    if panel.n_units < 2:
        raise PanelError("cluster bootstrap needs at least 2 units")
    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    rows: list[np.ndarray] = []
    failures: list[str] = []
    scalar = True
    for child in children:
        rng = np.random.default_rng(child)
        bp = resample_panel(panel, rng)
        try:
            est = pipeline(bp)
        except (PanelError, InfeasibleError, np.linalg.LinAlgError, ValueError, ZeroDivisionError) as exc:
            failures.append(f"{type(exc).__name__}: {exc}")
            continue
        arr = np.atleast_1d(np.asarray(est, dtype=float))
        scalar = scalar and np.ndim(est) == 0
        rows.append(arr)

    n_failed = len(failures)
    if n_failed > config.max_failure_rate * config.replications:
        raise PanelError(
            f"{n_failed}/{config.replications} bootstrap replicates failed; "
            f"last failure: {failures[-1]}"
        )
    if not rows:
        raise PanelError("all bootstrap replicates failed")
    mat = np.vstack(rows)
    with np.errstate(invalid="ignore"):
        se = np.nanstd(mat, axis=0, ddof=1)
        lo = np.nanpercentile(mat, config.ci[0], axis=0)
        hi = np.nanpercentile(mat, config.ci[1], axis=0)
    if scalar:
        return BootstrapResult(mat[:, 0], n_failed, float(se[0]), float(lo[0]),
                               float(hi[0]), failures)
    return BootstrapResult(mat, n_failed, se, lo, hi, failures)


@dataclass
class EventStudyCurve:
    """Per-relative-time estimates for one estimator family.

    The l = -1 reference period carries estimate 0 by convention for the
    regression family; relative times with no treated observations are kept
    as flagged gaps rather than silently dropped.
    """

    points: list[dict]
    estimator: str
    information_set: str = ""

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=["l", "estimate", "se", "lo", "hi", "flag"])


def _sweep_assumptions(assumptions: AssumptionSet, l: int) -> AssumptionSet:
    """Clamp phi/xi to the per-l admissible ranges so one toggle set drives
    the whole sweep."""
    phi = assumptions.delay_phi
    if phi is not None:
        phi = min(phi, l - 1)
        if phi < 0:
            phi = None
    xi = assumptions.dissipation_xi
    if xi is not None:
        xi = max(xi, l + 1)
    return AssumptionSet(
        invariance=assumptions.invariance,
        anticipation_kappa=assumptions.anticipation_kappa,
        delay_phi=phi,
        dissipation_xi=xi,
        adjustment_set=assumptions.adjustment_set,
    )


def event_study_sweep(
    panel: Panel,
    family: str,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    l_range: tuple[int, int] | None = None,
    bootstrap: BootstrapConfig | None = None,
    adjustment: Sequence[str] = (),
    **estimator_options,
) -> EventStudyCurve:
    """One estimate per relative time l.

    family "twfe": the fully dynamic regression's tau_l coefficients.
    family "robust": one balancing-weight estimate per l >= 0, re-targeting
    the estimand at outcome time t1 + l with the information set implied by
    the assumption toggles.
    """
    if family not in ("twfe", "robust"):
        raise PanelError(f"unknown estimator family {family!r}")
    base = estimand.validate(panel)
    rel = panel.relative_time()
    observed = sorted({int(r) for r in np.unique(rel) if r > -(10 ** 6)})
    if l_range is None:
        l_range = (min(observed), max(observed))
    ls = list(range(l_range[0], l_range[1] + 1))

    if family == "twfe":
        covs = tuple(a for a in assumptions.adjustment_set if a in panel.covariates)
        spec = TwfeSpec(dynamic=True, covariates=covs)
        fit = fit_twfe(panel, spec)

        def extract(f) -> np.ndarray:
            vals = np.full(len(ls), np.nan)
            for j, l in enumerate(ls):
                if l == -1:
                    vals[j] = 0.0
                else:
                    name = tau_name(l)
                    if name in f.column_names:
                        vals[j] = f.coefficient(name)
            return vals

        estimates = extract(fit)
        ses = los = his = np.full(len(ls), np.nan)
        if bootstrap is not None:
            res = cluster_bootstrap(panel, lambda bp: extract(fit_twfe(bp, spec)), bootstrap)
            ses, los, his = res.se, res.ci_lo, res.ci_hi
        points = []
        for j, l in enumerate(ls):
            flag = ""
            if np.isnan(estimates[j]):
                flag = "no observations at this relative time"
            if l == -1:
                flag = "reference period"
            points.append(_point(l, estimates[j], ses[j], los[j], his[j], flag))
        return EventStudyCurve(points=points, estimator="twfe",
                               information_set="regression sample")

    points = []
    info = ",".join(f"{k}={v}" for k, v in (
        ("invariance", assumptions.invariance),
        ("kappa", assumptions.anticipation_kappa),
        ("phi", assumptions.delay_phi),
        ("xi", assumptions.dissipation_xi)) if v is not None)
    for l in ls:
        if l < 0:
            points.append(_point(l, np.nan, np.nan, np.nan, np.nan,
                                 "pre-initiation: not estimated by this family"))
            continue
        ty = base.t1 + l
        if ty > panel.n_times:
            points.append(_point(l, np.nan, np.nan, np.nan, np.nan,
                                 "outcome time beyond the panel"))
            continue
        est_l = ResolvedEstimand(t1=base.t1, ty=ty, reference=base.reference,
                                 target_population=base.target_population)
        asm_l = _sweep_assumptions(assumptions, l)

        def run(p: Panel, est=est_l, asm=asm_l) -> float:
            c, _ = robust_contrast(p, est, asm, adjustment, **estimator_options)
            return c.estimate

        try:
            value = run(panel)
        except (PanelError, InfeasibleError) as exc:
            points.append(_point(l, np.nan, np.nan, np.nan, np.nan, f"gap: {exc}"))
            continue
        se = lo = hi = np.nan
        if bootstrap is not None:
            def run_resolved(bp: Panel, est=est_l, asm=asm_l) -> float:
                spec = EstimandSpec(
                    t1=panel.time_label(est.t1), ty=panel.time_label(est.ty),
                    reference={
                        ("never" if t == panel.never_code else panel.time_label(t)): p
                        for t, p in est.reference.items()
                    },
                    target_population=est.target_population,
                )
                c, _ = robust_contrast(bp, spec.validate(bp), asm, adjustment,
                                       **estimator_options)
                return c.estimate
            res = cluster_bootstrap(panel, run_resolved, bootstrap)
            se, lo, hi = res.se, res.ci_lo, res.ci_hi
        points.append(_point(l, value, se, lo, hi, ""))
    return EventStudyCurve(points=points, estimator="robust", information_set=info)


def _point(l, estimate, se, lo, hi, flag) -> dict:
    def f(v):
        return None if v is None or (isinstance(v, float) and np.isnan(v)) else float(v)
    return {"l": int(l), "estimate": f(estimate), "se": f(se),
            "lo": f(lo), "hi": f(hi), "flag": flag}

"""Minimum-dispersion approximately-balancing weights.

Builds and solves the quadratic programs that pick per-observation weights
minimizing the squared norm subject to basis-function balance constraints:
ideal contrasts at the outcome time, expanded contrasts spanning many
calendar times under invariance, mixed-reference-regime contrasts, and the
design-column problems whose solution reproduces two-way fixed-effects
estimates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .contrast import WeightedContrast
from .panel import (
    AssumptionSet,
    EstimandSpec,
    ObservationTag,
    Panel,
    PanelError,
    ResolvedEstimand,
    classify_arrays,
)
from .qp import IntervalQP, QpSolution, solve_interval_qp
from .twfe import TwfeFit, TwfeSpec, fit_twfe, implied_weights, tau_name

__all__ = [
    "BalanceProblem",
    "BalanceSolution",
    "InfeasibleError",
    "solve_balance",
    "build_ideal_problem",
    "build_expanded_problem",
    "build_general_reference_problem",
    "twfe_target_problems",
    "estimate_from_solutions",
    "robust_contrast",
]

#: Relative slack for continuous balance constraints when no tolerance is given.
_DEFAULT_DELTA_SD = 0.001


class InfeasibleError(RuntimeError):
    """No weights satisfy the balance constraints; carries the diagnosis."""

    def __init__(self, message: str, diagnosis: dict | None = None):
        super().__init__(message)
        self.diagnosis = diagnosis or {}


@dataclass(frozen=True)
class BalanceProblem:
    """One component's weighting program over a fixed observation sample."""

    cells: np.ndarray              # (M, 2) rows of (unit_idx, time 1..T)
    basis: np.ndarray              # (M, K)
    basis_names: tuple[str, ...]
    targets: np.ndarray            # (K,)
    tolerance: np.ndarray          # (K,) per-constraint slack, >= 0
    nonneg: bool = False
    normalize: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=int))
        object.__setattr__(self, "basis", np.asarray(self.basis, dtype=float))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "tolerance", np.asarray(self.tolerance, dtype=float))
        m, k = self.basis.shape
        if len(self.cells) != m:
            raise PanelError("basis rows must correspond 1:1 with the sample")
        if self.targets.shape != (k,) or self.tolerance.shape != (k,):
            raise PanelError("targets/tolerance must match the basis column count")
        if (self.tolerance < 0).any():
            raise PanelError("negative balance tolerance")

    @property
    def n_obs(self) -> int:
        return len(self.cells)


@dataclass
class BalanceSolution:
    problem: BalanceProblem
    weights: np.ndarray
    achieved_imbalance: np.ndarray
    kkt_residual: float
    status: str                     # optimal | infeasible | max-iterations
    duals: dict = field(default_factory=dict)
    infeasibility: dict = field(default_factory=dict)


def solve_balance(problem: BalanceProblem) -> BalanceSolution:
    """Solve one component's program; infeasibility is reported in the result,
    not raised, so callers can surface the minimal-slack diagnosis."""
    if problem.n_obs == 0:
        raise PanelError(f"empty sample for balance problem {problem.label!r}")
    A = problem.basis
    lo = problem.targets - problem.tolerance
    hi = problem.targets + problem.tolerance
    names = list(problem.basis_names)
    if problem.normalize:
        A = np.column_stack([A, np.ones(problem.n_obs)])
        lo = np.append(lo, 1.0)
        hi = np.append(hi, 1.0)
        names.append("(normalization)")
    qp = IntervalQP(A=A, lo=lo, hi=hi, nonneg=problem.nonneg)
    res = solve_interval_qp(qp)
    k = len(problem.basis_names)
    achieved = np.abs(problem.basis.T @ res.weights - problem.targets)
    infeas = dict(res.infeasibility)
    if res.status == "infeasible" and infeas.get("most_violated") is not None:
        infeas["most_violated_constraint"] = names[infeas["most_violated"]]
    return BalanceSolution(
        problem=problem,
        weights=res.weights,
        achieved_imbalance=achieved,
        kkt_residual=res.kkt_residual,
        status=res.status,
        duals={names[j]: float(res.duals[j]) for j in range(len(names))},
        infeasibility=infeas,
    )


# ---------------------------------------------------------------------------
# basis evaluation and targets

def _tags_as_arrays(panel: Panel, tags) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(tags, tuple) and len(tags) == 2:
        return tags
    group = np.full((panel.n_units, panel.n_times), "Excluded", dtype=object)
    role = np.full((panel.n_units, panel.n_times), "None", dtype=object)
    for tag in tags:
        group[tag.unit, tag.time - 1] = tag.group
        role[tag.unit, tag.time - 1] = tag.role
    return group, role


def _cells_where(mask: np.ndarray) -> np.ndarray:
    idx = np.argwhere(mask)
    return np.column_stack([idx[:, 0], idx[:, 1] + 1])


def _is_indicator(col: np.ndarray) -> bool:
    return bool(np.isin(col, (0.0, 1.0)).all())


def evaluate_basis(
    panel: Panel,
    cells: np.ndarray,
    adjustment: Sequence[str],
    degree: int = 1,
) -> tuple[np.ndarray, list[str]]:
    """Basis columns per observation: named covariates (with optional polynomial
    powers up to ``degree``) and the special items "unit-indicators" and
    "time-indicators"."""
    if degree < 1 or degree > 3:
        raise PanelError("polynomial degree must be between 1 and 3")
    cols: list[np.ndarray] = []
    names: list[str] = []
    ui = cells[:, 0]
    ti = cells[:, 1]
    for item in adjustment:
        if item == "unit-indicators":
            for i, u in enumerate(panel.units):
                cols.append((ui == i).astype(float))
                names.append(f"unit[{u}]")
        elif item == "time-indicators":
            for t in range(1, panel.n_times + 1):
                cols.append((ti == t).astype(float))
                names.append(f"time[{panel.time_label(t)}]")
        else:
            if item not in panel.covariates:
                raise PanelError(f"unknown adjustment column {item!r}")
            x = panel.covariates[item][ui]
            cols.append(x)
            names.append(item)
            if degree > 1 and len(np.unique(panel.covariates[item])) > 2:
                for p in range(2, degree + 1):
                    cols.append(x ** p)
                    names.append(f"{item}^{p}")
    if not cols:
        return np.empty((len(cells), 0)), []
    return np.column_stack(cols), names


def default_tolerance(basis: np.ndarray, delta: float | None = None) -> np.ndarray:
    """Indicator columns must balance exactly; continuous columns get a small
    SD-proportional slack unless an explicit delta overrides both."""
    k = basis.shape[1]
    tol = np.zeros(k)
    for j in range(k):
        col = basis[:, j]
        if delta is not None:
            tol[j] = delta
        elif not _is_indicator(col):
            tol[j] = _DEFAULT_DELTA_SD * float(col.std())
    return tol


def _target_unit_weights(panel: Panel, estimand: ResolvedEstimand, target: str) -> np.ndarray:
    n = panel.n_units
    if target == "study":
        return np.full(n, 1.0 / n)
    if target == "treated":
        mask = panel.init_time == estimand.t1
        if not mask.any():
            raise PanelError(f"no unit initiates at t1 for the treated-at-t target")
        return mask.astype(float) / mask.sum()
    raise PanelError(f"unknown target population {target!r}")


def profile_targets(
    panel: Panel,
    basis_names: Sequence[str],
    estimand: ResolvedEstimand,
    target: str | Mapping[str, float] = "study",
) -> np.ndarray:
    """Target means per basis column for the chosen population profile.

    A mapping gives explicit per-column targets (external target sample);
    "study" averages over all units, "treated" over the t1 cohort.  Unit
    indicators target each unit's population share; time indicators target a
    uniform 1/T allocation.
    """
    if isinstance(target, Mapping):
        missing = [n for n in basis_names if n not in target]
        if missing:
            raise PanelError(f"external targets missing columns {missing}")
        return np.array([float(target[n]) for n in basis_names])
    uw = _target_unit_weights(panel, estimand, target)
    out = np.empty(len(basis_names))
    for j, name in enumerate(basis_names):
        if name.startswith("unit["):
            u = name[5:-1]
            out[j] = uw[panel.units.index(u)]
        elif name.startswith("time["):
            out[j] = 1.0 / panel.n_times
        else:
            base, _, power = name.partition("^")
            p = int(power) if power else 1
            out[j] = float(uw @ panel.covariates[base] ** p)
    return out


# ---------------------------------------------------------------------------
# problem builders

def build_ideal_problem(
    panel: Panel,
    estimand: ResolvedEstimand,
    tags,
    adjustment: Sequence[str] = (),
    *,
    degree: int = 1,
    delta: float | None = None,
    nonneg: bool = False,
    target: str | Mapping[str, float] = "study",
) -> tuple[BalanceProblem, BalanceProblem]:
    """Treatment and control programs over the outcome-time observations only."""
    group, role = _tags_as_arrays(panel, tags)
    ideal = group == "IdealExperiment"
    out = []
    for component, mask in (("treatment", ideal & (role == "Treatment")),
                            ("control", ideal & (role == "Control"))):
        cells = _cells_where(mask)
        if len(cells) == 0:
            raise PanelError(f"empty {component} component at the outcome time")
        basis, names = evaluate_basis(panel, cells, adjustment, degree)
        targets = profile_targets(panel, names, estimand, target)
        tol = default_tolerance(basis, delta)
        out.append(BalanceProblem(
            cells=cells, basis=basis, basis_names=tuple(names),
            targets=targets, tolerance=tol, nonneg=nonneg,
            normalize=True, label=f"ideal-{component}",
        ))
    return out[0], out[1]


def build_expanded_problem(
    panel: Panel,
    estimand: ResolvedEstimand,
    tags,
    adjustment: Sequence[str] = (),
    invariance_mode: str = "strong",
    *,
    degree: int = 1,
    delta: float | None = None,
    nonneg: bool = False,
    target: str | Mapping[str, float] = "study",
    lambdas: Mapping[int, float] | None = None,
) -> tuple[BalanceProblem, BalanceProblem]:
    """Programs spanning all licensed calendar times under invariance.

    Per-cohort mode adds one exact sum constraint per initiation cohort:
    treatment weights within cohort r sum to lambda_r and control weights at
    calendar time r + l sum to lambda_r (lambda defaults to cohort shares).
    Strong mode pools everything into a single normalization, leaving the
    per-time allocation to the solver.
    """
    if invariance_mode not in ("per-cohort", "strong"):
        raise PanelError(f"invalid invariance mode {invariance_mode!r}")
    group, role = _tags_as_arrays(panel, tags)
    l = estimand.horizon
    t_cells = _cells_where(role == "Treatment")
    c_cells = _cells_where(role == "Control")
    if len(t_cells) == 0:
        raise PanelError("empty treatment component")
    if len(c_cells) == 0:
        raise PanelError("empty control component")

    lam = None
    if invariance_mode == "per-cohort":
        cohorts = sorted({int(panel.init_time[i]) for i, _ in t_cells})
        if lambdas is None:
            sizes = {r: int((panel.init_time == r).sum()) for r in cohorts}
            total = sum(sizes.values())
            lam = {r: sizes[r] / total for r in cohorts}
        else:
            lam = {panel.time_index(k) if k in panel.time_labels else int(k): float(v)
                   for k, v in lambdas.items()}
            if abs(sum(lam.values()) - 1.0) > 1e-12:
                raise PanelError("lambda values must sum to 1")
        block_times = {r: r + l for r in cohorts}
        keep = np.isin(c_cells[:, 1], list(block_times.values()))
        c_cells = c_cells[keep]
        if len(c_cells) == 0:
            raise PanelError("no control observations at any cohort outcome time")

    def make(component: str, cells: np.ndarray) -> BalanceProblem:
        basis, names = evaluate_basis(panel, cells, adjustment, degree)
        targets = profile_targets(panel, names, estimand, target)
        tol = default_tolerance(basis, delta)
        if lam is not None:
            extra_cols, extra_names = [], []
            for r, lr in lam.items():
                if component == "treatment":
                    ind = (panel.init_time[cells[:, 0]] == r).astype(float)
                else:
                    ind = (cells[:, 1] == r + l).astype(float)
                if ind.sum() == 0:
                    raise PanelError(
                        f"cohort {panel.time_label(r)} has no {component} observations"
                    )
                extra_cols.append(ind)
                extra_names.append(f"cohort[{panel.time_label(r)}]")
            basis = np.column_stack([basis] + extra_cols) if basis.size else np.column_stack(extra_cols)
            names = names + extra_names
            targets = np.concatenate([targets, [lam[r] for r in lam]])
            tol = np.concatenate([tol, np.zeros(len(lam))])
        return BalanceProblem(
            cells=cells, basis=basis, basis_names=tuple(names),
            targets=targets, tolerance=tol, nonneg=nonneg,
            normalize=True, label=f"expanded-{invariance_mode}-{component}",
        )

    return make("treatment", t_cells), make("control", c_cells)


def build_general_reference_problem(
    panel: Panel,
    estimand: ResolvedEstimand,
    tags,
    adjustment: Sequence[str] = (),
    *,
    degree: int = 1,
    delta: float | None = None,
    nonneg: bool = False,
    target: str | Mapping[str, float] = "study",
    pooled: bool = False,
) -> list[tuple[float, BalanceProblem]]:
    """Control programs for a mixed reference regime.

    One program per referenced initiation time t' (its control cells are the
    licensed observations of that cohort), each normalized to one and mixed
    with probability p_{t'}.  ``pooled=True`` condenses them into a single
    program whose per-cohort sums are pinned to p_{t'} directly.
    """
    group, role = _tags_as_arrays(panel, tags)
    ctrl = role == "Control"
    pieces: list[tuple[float, np.ndarray]] = []
    for t, p in estimand.reference.items():
        cohort = panel.init_time == t
        cells = _cells_where(ctrl & cohort[:, None])
        if len(cells) == 0:
            label = "never" if t == panel.never_code else panel.time_label(t)
            raise PanelError(f"referenced cohort {label!r} has no control observations")
        pieces.append((p, cells))

    def base(cells: np.ndarray, label: str) -> tuple[np.ndarray, list[str], np.ndarray, np.ndarray]:
        basis, names = evaluate_basis(panel, cells, adjustment, degree)
        targets = profile_targets(panel, names, estimand, target)
        tol = default_tolerance(basis, delta)
        return basis, names, targets, tol

    if not pooled:
        out = []
        for (t, p), (_, cells) in zip(estimand.reference.items(), pieces):
            basis, names, targets, tol = base(cells, str(t))
            out.append((p, BalanceProblem(
                cells=cells, basis=basis, basis_names=tuple(names),
                targets=targets, tolerance=tol, nonneg=nonneg,
                normalize=True, label=f"reference-control[{t}]",
            )))
        return out

    cells = np.vstack([c for _, c in pieces])
    basis, names, targets, tol = base(cells, "pooled")
    extra_cols, extra_names, extra_targets = [], [], []
    for (t, p), (_, piece_cells) in zip(estimand.reference.items(), pieces):
        cohort = panel.init_time == t
        extra_cols.append(cohort[cells[:, 0]].astype(float))
        label = "never" if t == panel.never_code else panel.time_label(t)
        extra_names.append(f"reference[{label}]")
        extra_targets.append(p)
    basis = np.column_stack([basis] + extra_cols) if basis.size else np.column_stack(extra_cols)
    problem = BalanceProblem(
        cells=cells, basis=basis, basis_names=tuple(names + extra_names),
        targets=np.concatenate([targets, extra_targets]),
        tolerance=np.concatenate([tol, np.zeros(len(extra_targets))]),
        nonneg=nonneg, normalize=True, label="reference-control[pooled]",
    )
    return [(1.0, problem)]


def twfe_target_problems(
    fit: TwfeFit,
    target: str,
    *,
    nonneg: bool = False,
    delta: float | None = None,
) -> tuple[BalanceProblem, BalanceProblem]:
    """Design-column programs whose minimum-norm solutions reproduce the fitted
    coefficient's implied weights exactly.

    Each component's basis is every retained design column restricted to the
    component's rows; targets are the component-weighted column means induced
    by the implied weights.  With exact balance and unrestricted weights the
    resulting contrast equals the regression coefficient.
    """
    contrast = implied_weights(fit, target)
    treat = contrast.treatment_mask
    out = []
    for component, mask in (("treatment", treat), ("control", ~treat)):
        cells = fit.obs_index[mask]
        basis = fit.design[mask]
        w = contrast.weights[mask]
        targets = basis.T @ w
        tol = np.zeros(basis.shape[1]) if delta is None else np.full(basis.shape[1], delta)
        out.append(BalanceProblem(
            cells=cells, basis=basis, basis_names=tuple(fit.column_names),
            targets=targets, tolerance=tol, nonneg=nonneg,
            normalize=True, label=f"twfe-target-{component}",
        ))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# assembly

def _require_optimal(sol: BalanceSolution) -> None:
    if sol.status == "optimal":
        return
    if sol.status == "infeasible":
        worst = sol.infeasibility.get("most_violated_constraint")
        inflate = sol.infeasibility.get("inflation")
        raise InfeasibleError(
            f"balance problem {sol.problem.label!r} is infeasible "
            f"(most violated: {worst}; minimal uniform slack to restore "
            f"feasibility: {inflate})",
            diagnosis=sol.infeasibility,
        )
    raise InfeasibleError(
        f"balance problem {sol.problem.label!r} did not converge "
        f"(status {sol.status}, KKT residual {sol.kkt_residual:.3e})"
    )


def estimate_from_solutions(
    panel: Panel,
    treatment: BalanceSolution,
    control: BalanceSolution | Sequence[tuple[float, BalanceSolution]],
    provenance: dict | None = None,
) -> WeightedContrast:
    """Package component solutions into a weighted contrast.

    The control side may be a mixture: weights of each referenced problem are
    scaled by its probability and summed per observation.
    """
    _require_optimal(treatment)
    if isinstance(control, BalanceSolution):
        control = [(1.0, control)]
    merged: dict[tuple[int, int], float] = {}
    for p, sol in control:
        _require_optimal(sol)
        for k in range(sol.problem.n_obs):
            key = (int(sol.problem.cells[k, 0]), int(sol.problem.cells[k, 1]))
            merged[key] = merged.get(key, 0.0) + p * float(sol.weights[k])

    t_cells = treatment.problem.cells
    c_keys = sorted(merged)
    obs_index = np.vstack([t_cells, np.array(c_keys, dtype=int).reshape(-1, 2)])
    weights = np.concatenate([treatment.weights, [merged[k] for k in c_keys]])
    tmask = np.concatenate([np.ones(len(t_cells), bool), np.zeros(len(c_keys), bool)])
    outcomes = panel.outcome[obs_index[:, 0], obs_index[:, 1] - 1]
    prov = {"solver": "balance"}
    prov.update(provenance or {})
    return WeightedContrast(
        obs_index=obs_index, weights=weights, treatment_mask=tmask,
        outcomes=outcomes, provenance=prov,
    )


def robust_contrast(
    panel: Panel,
    estimand: EstimandSpec | ResolvedEstimand,
    assumptions: AssumptionSet,
    adjustment: Sequence[str] = (),
    *,
    degree: int = 1,
    delta: float | None = None,
    nonneg: bool = False,
    target: str | Mapping[str, float] = "study",
    lambdas: Mapping[int, float] | None = None,
    pooled_reference: bool = False,
) -> tuple[WeightedContrast, dict]:
    """Classification + balancing pipeline for one estimand.

    ``target="twfe"`` balances every design column of the matching dynamic
    two-way fixed-effects fit toward its implied-weight profile, reproducing
    the regression coefficient; other targets balance the requested adjustment
    columns toward the chosen population profile over the licensed sample.
    Raises :class:`InfeasibleError` with the minimal-slack diagnosis when no
    weights satisfy the constraints.
    """
    if isinstance(estimand, EstimandSpec):
        estimand = estimand.validate(panel)
    info: dict = {}

    if target == "twfe":
        if not estimand.is_pure_control(panel):
            raise PanelError("the twfe-implied target requires a pure (never-treated) reference")
        covs = tuple(a for a in adjustment if a in panel.covariates)
        fit = fit_twfe(panel, TwfeSpec(dynamic=True, covariates=covs))
        name = tau_name(estimand.horizon)
        tp, cp = twfe_target_problems(fit, name, nonneg=nonneg, delta=delta)
        ts, cs = solve_balance(tp), solve_balance(cp)
        info.update({"treatment": ts, "control": [(1.0, cs)], "twfe_fit": fit})
        contrast = estimate_from_solutions(
            panel, ts, cs,
            provenance={"solver": "balance-twfe-target", "target": name},
        )
        return contrast, info

    tags = classify_arrays(panel, estimand, assumptions)
    kwargs = dict(degree=degree, delta=delta, nonneg=nonneg, target=target)
    if assumptions.invariance_on:
        tp, cp = build_expanded_problem(
            panel, estimand, tags, adjustment, assumptions.invariance,
            lambdas=lambdas, **kwargs,
        )
    else:
        tp, cp = build_ideal_problem(panel, estimand, tags, adjustment, **kwargs)

    ts = solve_balance(tp)
    if estimand.is_pure_control(panel):
        controls = [(1.0, solve_balance(cp))]
    else:
        controls = [
            (p, solve_balance(prob))
            for p, prob in build_general_reference_problem(
                panel, estimand, tags, adjustment, pooled=pooled_reference, **kwargs,
            )
        ]
    info.update({"treatment": ts, "control": controls, "tags": tags})
    contrast = estimate_from_solutions(
        panel, ts, controls,
        provenance={
            "solver": "balance",
            "invariance": assumptions.invariance,
            "nonneg": nonneg,
            "target": target if isinstance(target, str) else "external",
        },
    )
    return contrast, info

"""Panel data model, estimand/assumption specifications, and observation classification.

A panel is a balanced grid of (unit, time) observations under staggered
treatment adoption.  Each observation is classified into a validity group
according to which chain of identification assumptions licenses its use in a
weighted contrast for the chosen estimand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "NEVER",
    "Panel",
    "EstimandSpec",
    "AssumptionSet",
    "ObservationTag",
    "PanelError",
    "load_panel",
    "classify",
    "classify_arrays",
    "group_counts",
    "GROUPS",
    "GROUP_ORDER",
]

#: External sentinel for units that never initiate treatment.
NEVER = "never"

#: Validity groups, ordered from weakest to strongest licensing assumption chain.
GROUP_ORDER = [
    "IdealExperiment",
    "TimeInvariance",
    "LimitedAnticipation",
    "DelayedOnset",
    "EffectDissipation",
]
GROUPS = GROUP_ORDER + ["Excluded"]

ROLES = ["Treatment", "Control", "None"]


class PanelError(ValueError):
    """Raised for invalid panel data or specifications."""


@dataclass(frozen=True)
class Panel:
    """Balanced long-format panel in internal coordinates.

    Times are mapped to 1..T; treatment initiation is stored as an integer in
    1..T with T+1 standing in for "never" (guarded by :meth:`is_never`, never
    exposed in external formats).
    """

    units: tuple[str, ...]
    time_labels: tuple[int, ...]          # original calendar labels, sorted
    init_time: np.ndarray                 # (n_units,) int, T+1 == never
    outcome: np.ndarray                   # (n_units, n_times) float
    covariates: dict[str, np.ndarray] = field(default_factory=dict)  # name -> (n_units,)
    missing: np.ndarray | None = None     # (n_units, n_times) bool, True == absent

    def __post_init__(self):
        object.__setattr__(self, "init_time", np.asarray(self.init_time, dtype=int))
        object.__setattr__(self, "outcome", np.asarray(self.outcome, dtype=float))
        n_i, n_t = len(self.units), len(self.time_labels)
        if self.outcome.shape != (n_i, n_t):
            raise PanelError(
                f"outcome shape {self.outcome.shape} does not match "
                f"{n_i} units x {n_t} times"
            )
        if self.init_time.shape != (n_i,):
            raise PanelError("init_time must have one entry per unit")
        bad = (self.init_time < 1) | (self.init_time > n_t + 1)
        if bad.any():
            raise PanelError(
                f"init_time out of range for units {[self.units[j] for j in np.where(bad)[0]]}"
            )
        for name, col in self.covariates.items():
            arr = np.asarray(col, dtype=float)
            if arr.shape != (n_i,):
                raise PanelError(f"covariate {name!r} must have one value per unit")
            self.covariates[name] = arr
        if self.missing is not None:
            m = np.asarray(self.missing, dtype=bool)
            if m.shape != (n_i, n_t):
                raise PanelError("missing mask shape mismatch")
            object.__setattr__(self, "missing", m)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_times(self) -> int:
        return len(self.time_labels)

    @property
    def never_code(self) -> int:
        """Internal integer code for never-treated units (T+1)."""
        return self.n_times + 1

    def is_never(self, unit_index: int | np.ndarray) -> np.ndarray:
        return self.init_time[unit_index] == self.never_code

    @property
    def never_mask(self) -> np.ndarray:
        return self.init_time == self.never_code

    def time_index(self, label: int) -> int:
        """Map a calendar label to internal time 1..T."""
        try:
            return self.time_labels.index(int(label)) + 1
        except ValueError:
            raise PanelError(f"time label {label!r} not in panel") from None

    def time_label(self, t: int) -> int:
        return self.time_labels[t - 1]

    def init_label(self, unit_index: int) -> int | str:
        g = int(self.init_time[unit_index])
        return NEVER if g == self.never_code else self.time_labels[g - 1]

    def treatment_indicator(self) -> np.ndarray:
        """Z[i, t-1] = 1(t >= G_i), shape (n_units, n_times)."""
        t_grid = np.arange(1, self.n_times + 1)
        return (t_grid[None, :] >= self.init_time[:, None]).astype(int)

    def relative_time(self) -> np.ndarray:
        """t - G_i per cell; a large negative number for never-treated units."""
        t_grid = np.arange(1, self.n_times + 1)
        rel = t_grid[None, :] - self.init_time[:, None]
        rel[self.never_mask, :] = NEVER_REL
        return rel

    def covariate_matrix(self, names: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
        names = list(self.covariates) if names is None else list(names)
        for name in names:
            if name not in self.covariates:
                raise PanelError(f"unknown covariate {name!r}")
        if not names:
            return np.empty((self.n_units, 0)), []
        return np.column_stack([self.covariates[n] for n in names]), names

    def to_frame(self) -> pd.DataFrame:
        """Long-format view with calendar labels and the external never sentinel."""
        rows = []
        for i, u in enumerate(self.units):
            g = self.init_label(i)
            for t, label in enumerate(self.time_labels, start=1):
                if self.missing is not None and self.missing[i, t - 1]:
                    continue
                row = {"unit": u, "time": label, "outcome": self.outcome[i, t - 1], "g": g}
                for name, col in self.covariates.items():
                    row[name] = col[i]
                rows.append(row)
        return pd.DataFrame(rows)


#: Relative time assigned to never-treated cells; more negative than any real lag.
NEVER_REL = -(10**9)


@dataclass(frozen=True)
class EstimandSpec:
    """Target contrast: initiate at ``t1`` versus a reference initiation regime.

    ``reference`` maps initiation labels (calendar label or ``"never"``) to
    probabilities summing to one; the pure-control case puts mass one on
    ``"never"``.  ``target_population`` selects the profile the weights
    balance toward.
    """

    t1: int
    ty: int
    reference: Mapping[int | str, float] | None = None   # None -> {"never": 1.0}
    target_population: str = "study-sample"

    def resolved_reference(self) -> dict[int | str, float]:
        if self.reference is None:
            return {NEVER: 1.0}
        return {k: float(v) for k, v in self.reference.items()}

    def validate(self, panel: Panel) -> "ResolvedEstimand":
        """Check against a panel's time range and return internal coordinates."""
        t1 = panel.time_index(self.t1)
        ty = panel.time_index(self.ty)
        if ty < t1:
            raise PanelError(f"outcome time {self.ty} precedes initiation time {self.t1}")
        ref = self.resolved_reference()
        probs: dict[int, float] = {}
        for key, p in ref.items():
            if p < 0:
                raise PanelError(f"reference probability for {key!r} is negative")
            if p == 0:
                continue
            code = panel.never_code if key == NEVER else panel.time_index(key)
            if code != panel.never_code and code <= t1:
                raise PanelError(
                    f"reference initiation {key!r} must be after t1={self.t1}"
                )
            probs[code] = probs.get(code, 0.0) + p
        total = sum(probs.values())
        if abs(total - 1.0) > 1e-12:
            raise PanelError(f"reference probabilities sum to {total!r}, not 1")
        return ResolvedEstimand(t1=t1, ty=ty, reference=probs,
                                target_population=self.target_population)


@dataclass(frozen=True)
class ResolvedEstimand:
    """EstimandSpec in internal 1..T coordinates (never as panel.never_code)."""

    t1: int
    ty: int
    reference: Mapping[int, float]
    target_population: str = "study-sample"

    @property
    def horizon(self) -> int:
        """Relative time l = ty - t1 of the target effect."""
        return self.ty - self.t1

    def is_pure_control(self, panel: Panel) -> bool:
        ref = dict(self.reference)
        return set(ref) == {panel.never_code}


@dataclass(frozen=True)
class AssumptionSet:
    """Toggles gating which observations may enter a valid contrast.

    invariance: "off", "per-cohort" (effects depend only on relative time,
    cohort by cohort) or "strong" (level invariance, pooled constraint).
    kappa/phi/xi are the anticipation horizon, onset delay, and dissipation
    lag, in periods; absent (None) means the assumption is not invoked.
    """

    invariance: str = "off"
    anticipation_kappa: int | None = None
    delay_phi: int | None = None
    dissipation_xi: int | None = None
    adjustment_set: tuple[str, ...] = ()

    def __post_init__(self):
        if self.invariance not in ("off", "per-cohort", "strong"):
            raise PanelError(f"invalid invariance mode {self.invariance!r}")
        for name in ("anticipation_kappa", "delay_phi", "dissipation_xi"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 0):
                raise PanelError(f"{name} must be a non-negative integer, got {v!r}")
        object.__setattr__(self, "adjustment_set", tuple(self.adjustment_set))

    @property
    def invariance_on(self) -> bool:
        return self.invariance != "off"

    def validate_against(self, estimand: ResolvedEstimand) -> None:
        l = estimand.horizon
        if self.delay_phi is not None and self.delay_phi > l - 1:
            raise PanelError(
                f"delay_phi={self.delay_phi} exceeds l-1={l - 1} for this estimand"
            )
        if self.dissipation_xi is not None and self.dissipation_xi < l + 1:
            raise PanelError(
                f"dissipation_xi={self.dissipation_xi} is below l+1={l + 1} for this estimand"
            )


@dataclass(frozen=True)
class ObservationTag:
    unit: int      # index into panel.units
    time: int      # internal time 1..T
    group: str
    role: str


def load_panel(
    rows,
    schema: Mapping[str, object] | None = None,
    allow_missing: bool = False,
) -> Panel:
    """Build a validated :class:`Panel` from tabular records.

    ``rows`` is a DataFrame or an iterable of mappings.  ``schema`` maps the
    logical names ``unit``, ``time``, ``outcome`` and either ``g`` (initiation
    label, "never" allowed) or ``treat`` (0/1 indicator) to column names;
    ``covariates`` lists covariate columns (default: every ``x_*`` column).
    """
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    schema = dict(schema or {})
    unit_col = schema.get("unit", "unit")
    time_col = schema.get("time", "time")
    outcome_col = schema.get("outcome", "outcome")
    g_col = schema.get("g", "g" if "g" in df.columns else None)
    treat_col = schema.get("treat", "treat" if "treat" in df.columns else None)
    for col in (unit_col, time_col, outcome_col):
        if col not in df.columns:
            raise PanelError(f"missing required column {col!r}")
    if g_col is None and treat_col is None:
        raise PanelError("need either an initiation column or a treatment indicator column")

    cov_cols = schema.get("covariates")
    if cov_cols is None:
        cov_cols = [c for c in df.columns if str(c).startswith("x_")]
    cov_cols = list(cov_cols)

    if not pd.api.types.is_numeric_dtype(df[outcome_col]):
        coerced = pd.to_numeric(df[outcome_col], errors="coerce")
        bad = df.loc[coerced.isna() & df[outcome_col].notna(), [unit_col, time_col]]
        if len(bad):
            u, t = bad.iloc[0]
            raise PanelError(f"non-numeric outcome at unit {u}, time {t}")
        df = df.assign(**{outcome_col: coerced})

    dup = df.duplicated(subset=[unit_col, time_col])
    if dup.any():
        u, t = df.loc[dup.idxmax(), [unit_col, time_col]]
        raise PanelError(f"duplicate observation for unit {u}, time {t}")

    units = tuple(str(u) for u in pd.unique(df[unit_col]))
    labels = sorted(int(t) for t in pd.unique(df[time_col]))
    if len(labels) > 1:
        steps = np.diff(labels)
        if not (steps == steps[0]).all():
            raise PanelError(f"irregular time labels {labels}: gaps are not allowed")
    n_i, n_t = len(units), len(labels)
    uidx = {u: i for i, u in enumerate(units)}
    tidx = {lab: t for t, lab in enumerate(labels)}

    outcome = np.full((n_i, n_t), np.nan)
    covs = {c: np.full(n_i, np.nan) for c in cov_cols}
    treat = np.full((n_i, n_t), -1, dtype=int)
    g_raw: dict[int, object] = {}
    for _, row in df.iterrows():
        i, t = uidx[str(row[unit_col])], tidx[int(row[time_col])]
        outcome[i, t] = row[outcome_col]
        if treat_col is not None:
            treat[i, t] = int(row[treat_col])
        if g_col is not None:
            g_raw[i] = row[g_col]
        for c in cov_cols:
            covs[c][i] = row[c]

    missing = np.isnan(outcome)
    if missing.any() and not allow_missing:
        i, t = np.argwhere(missing)[0]
        raise PanelError(
            f"missing cell for unit {units[i]}, time {labels[t]} "
            "(pass allow_missing=True to tag missing cells as Excluded)"
        )

    never_code = n_t + 1
    init = np.empty(n_i, dtype=int)
    if g_col is not None:
        for i in range(n_i):
            g = g_raw.get(i)
            if g is None or (isinstance(g, float) and np.isnan(g)) or str(g).lower() == NEVER:
                init[i] = never_code
            else:
                g = int(g)
                if g not in tidx:
                    if g < labels[0]:
                        raise PanelError(
                            f"unit {units[i]} initiated before the observation window "
                            f"({g} < {labels[0]}); drop it or extend the window"
                        )
                    if g > labels[-1]:
                        init[i] = never_code
                        continue
                    raise PanelError(f"initiation label {g} not a panel time")
                else:
                    init[i] = tidx[g] + 1
    else:
        for i in range(n_i):
            z = treat[i]
            on = np.where(z == 1)[0]
            if on.size == 0:
                init[i] = never_code
                continue
            first = on[0]
            off_after = np.where(z[first:] == 0)[0]
            if off_after.size:
                t_bad = labels[first + off_after[0]]
                raise PanelError(f"non-staggered path at unit {units[i]}, time {t_bad}")
            init[i] = first + 1

    if g_col is not None and treat_col is not None:
        # both supplied: the indicator must agree with the initiation column
        t_grid = np.arange(1, n_t + 1)
        implied = (t_grid[None, :] >= init[:, None]).astype(int)
        obs = treat != -1
        if not (treat[obs] == implied[obs]).all():
            i, t = np.argwhere((treat != implied) & obs)[0]
            raise PanelError(f"treatment indicator conflicts with initiation at "
                             f"unit {units[i]}, time {labels[t]}")

    outcome = np.where(missing, 0.0, outcome)
    return Panel(
        units=units,
        time_labels=tuple(labels),
        init_time=init,
        outcome=outcome,
        covariates=covs,
        missing=missing if missing.any() else None,
    )


def _control_spans_all_times(t: int, ty: int, invariance_on: bool) -> bool:
    return t == ty or invariance_on


def classify_arrays(
    panel: Panel,
    estimand: ResolvedEstimand,
    assumptions: AssumptionSet,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized classification; returns (group, role) label arrays of shape (n_I, n_T).

    Each cell gets the weakest assumption chain that licenses it
    (Ideal < TimeInvariance < LimitedAnticipation < DelayedOnset < EffectDissipation);
    unlicensed cells are Excluded.
    """
    assumptions.validate_against(estimand)
    n_i, n_t = panel.n_units, panel.n_times
    ty, l = estimand.ty, estimand.horizon
    rel = panel.relative_time()
    never = panel.never_mask[:, None] & np.ones((1, n_t), bool)
    at_ty = np.zeros((n_i, n_t), bool)
    at_ty[:, ty - 1] = True
    inv = assumptions.invariance_on
    kappa = assumptions.anticipation_kappa
    phi = assumptions.delay_phi
    xi = assumptions.dissipation_xi

    group = np.full((n_i, n_t), "Excluded", dtype=object)
    role = np.full((n_i, n_t), "None", dtype=object)

    # treatment cells: t - G_i = l, at ty by the base chain, elsewhere via invariance
    treat_cells = (rel == l) & ~never
    treat_ok = treat_cells & (at_ty | inv)
    group[treat_cells & at_ty] = "IdealExperiment"
    group[treat_cells & ~at_ty & inv] = "TimeInvariance"
    role[treat_ok] = "Treatment"

    ref = dict(estimand.reference)
    pure = set(ref) == {panel.never_code}
    if pure:
        ctrl_never = never & (at_ty | inv)
        group[never & at_ty] = "IdealExperiment"
        group[never & ~at_ty & inv] = "TimeInvariance"
        role[ctrl_never] = "Control"

        if kappa is not None:
            antic = ~never & (rel < -kappa) & (at_ty | inv)
            group[antic] = "LimitedAnticipation"
            role[antic] = "Control"
        if phi is not None:
            onset = ~never & (rel >= 0) & (rel < l) & (rel <= phi) & (at_ty | inv)
            group[onset] = "DelayedOnset"
            role[onset] = "Control"
        if xi is not None:
            dissip = ~never & (rel > l) & (rel >= xi) & (at_ty | inv)
            group[dissip] = "EffectDissipation"
            role[dissip] = "Control"
    else:
        in_support = np.isin(panel.init_time, list(ref))[:, None] & np.ones((1, n_t), bool)
        ideal_c = in_support & at_ty & ~treat_cells
        group[ideal_c] = "IdealExperiment"
        role[ideal_c] = "Control"

        if inv:
            if panel.never_code in ref:
                c = never & ~at_ty
                group[c] = "TimeInvariance"
                role[c] = "Control"
            shift_rels = sorted({ty - tp for tp in ref if tp != panel.never_code})
            nonneg = [r for r in shift_rels if r >= 0]
            if nonneg:
                c = ~never & ~at_ty & np.isin(rel, nonneg) & (rel != l)
                group[c] = "TimeInvariance"
                role[c] = "Control"
            # anticipation-shifted cohorts (reference initiations after ty) need
            # the partially relaxed anticipation horizon T - ty
            neg = [r for r in shift_rels if r < 0]
            if neg and kappa is not None and kappa >= n_t - ty:
                c = ~never & ~at_ty & np.isin(rel, neg)
                group[c] = "LimitedAnticipation"
                role[c] = "Control"
        if xi is not None:
            dissip = ~never & (rel > l) & (rel >= xi) & (at_ty | inv)
            group[dissip] = "EffectDissipation"
            role[dissip] = "Control"

    if panel.missing is not None:
        group[panel.missing] = "Excluded"
        role[panel.missing] = "None"
    return group, role


def classify(
    panel: Panel,
    estimand: EstimandSpec | ResolvedEstimand,
    assumptions: AssumptionSet,
) -> list[ObservationTag]:
    """Classify every observation into (group, role) per the licensing chains."""
    if isinstance(estimand, EstimandSpec):
        estimand = estimand.validate(panel)
    group, role = classify_arrays(panel, estimand, assumptions)
    tags = []
    for i in range(panel.n_units):
        for t in range(1, panel.n_times + 1):
            tags.append(ObservationTag(unit=i, time=t,
                                       group=str(group[i, t - 1]),
                                       role=str(role[i, t - 1])))
    return tags


def group_counts(tags: Iterable[ObservationTag]) -> dict[str, tuple[int, int]]:
    """Per group: (treatment count, control count), Excluded omitted."""
    counts = {g: [0, 0] for g in GROUP_ORDER}
    for tag in tags:
        if tag.group == "Excluded":
            continue
        if tag.role == "Treatment":
            counts[tag.group][0] += 1
        elif tag.role == "Control":
            counts[tag.group][1] += 1
    return {g: (c[0], c[1]) for g, c in counts.items()}


def tags_to_frame(panel: Panel, tags: Iterable[ObservationTag]) -> pd.DataFrame:
    """Classification export table: unit, time (calendar), group, role."""
    return pd.DataFrame(
        {
            "unit": [panel.units[t.unit] for t in tags],
            "time": [panel.time_label(t.time) for t in tags],
            "group": [t.group for t in tags],
            "role": [t.role for t in tags],
        }
    )

"""Weighted treatment-minus-control contrasts and closed-form estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .panel import (
    ObservationTag,
    Panel,
    PanelError,
    ResolvedEstimand,
)

__all__ = [
    "WeightedContrast",
    "ideal_contrast",
    "hajek_contrast",
    "decompose_by_group",
]

_NORMALIZATION_TOL = 1e-10


@dataclass
class WeightedContrast:
    """Signed per-observation weights split into treatment and control components.

    Weights are stored positively per component; the contrast applies the
    minus sign to the control side.  Each component's weights sum to one.
    """

    obs_index: np.ndarray              # (N, 2) rows of (unit_idx, time 1..T)
    weights: np.ndarray                # (N,) component weight (treatment or control)
    treatment_mask: np.ndarray         # (N,) bool
    outcomes: np.ndarray               # (N,) observed outcomes
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.treatment_mask = np.asarray(self.treatment_mask, dtype=bool)
        used = self.weights != 0
        t_sum = self.weights[self.treatment_mask].sum()
        c_sum = self.weights[~self.treatment_mask].sum()
        if used[self.treatment_mask].any() and abs(t_sum - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"treatment weights sum to {t_sum!r}, not 1")
        if used[~self.treatment_mask].any() and abs(c_sum - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"control weights sum to {c_sum!r}, not 1")

    @property
    def estimate(self) -> float:
        w = np.where(self.treatment_mask, self.weights, -self.weights)
        return float(w @ self.outcomes)

    @property
    def signed_weights(self) -> np.ndarray:
        return np.where(self.treatment_mask, self.weights, -self.weights)

    def component(self, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(obs_index, weights, outcomes) of one component ("treatment"/"control")."""
        mask = self.treatment_mask if which == "treatment" else ~self.treatment_mask
        return self.obs_index[mask], self.weights[mask], self.outcomes[mask]

    def to_frame(self, panel: Panel, tags: Iterable[ObservationTag] | None = None) -> pd.DataFrame:
        """Weight export table: unit, time, component, weight, group."""
        group_of = {}
        if tags is not None:
            group_of = {(t.unit, t.time): t.group for t in tags}
        rows = []
        for k in range(len(self.weights)):
            if self.weights[k] == 0:
                continue
            i, t = int(self.obs_index[k, 0]), int(self.obs_index[k, 1])
            rows.append({
                "unit": panel.units[i],
                "time": panel.time_label(t),
                "component": "treatment" if self.treatment_mask[k] else "control",
                "weight": float(self.weights[k]),
                "group": group_of.get((i, t), ""),
            })
        return pd.DataFrame(rows, columns=["unit", "time", "component", "weight", "group"])


def _cells_at(panel: Panel, time: int, unit_mask: np.ndarray) -> np.ndarray:
    idx = np.where(unit_mask)[0]
    return np.column_stack([idx, np.full(len(idx), time)])


def ideal_contrast(panel: Panel, estimand: ResolvedEstimand) -> WeightedContrast:
    """Difference-in-means contrast using only observations at the outcome time.

    The treatment component puts weight 1/n on units initiating at t1; the
    control component spreads each reference probability p_t uniformly over
    its cohort.
    """
    ty = estimand.ty
    treat_units = panel.init_time == estimand.t1
    n_treat = int(treat_units.sum())
    if n_treat == 0:
        raise PanelError(f"no unit initiates treatment at t1={estimand.t1}")

    obs, wts, tmask = [], [], []
    obs.append(_cells_at(panel, ty, treat_units))
    wts.append(np.full(n_treat, 1.0 / n_treat))
    tmask.append(np.ones(n_treat, bool))

    for t, p in estimand.reference.items():
        cohort = panel.init_time == t
        n_c = int(cohort.sum())
        if n_c == 0:
            label = "never" if t == panel.never_code else panel.time_label(t)
            raise PanelError(f"reference cohort {label!r} is empty")
        obs.append(_cells_at(panel, ty, cohort))
        wts.append(np.full(n_c, p / n_c))
        tmask.append(np.zeros(n_c, bool))

    obs_index = np.vstack(obs)
    weights = np.concatenate(wts)
    outcomes = panel.outcome[obs_index[:, 0], obs_index[:, 1] - 1]
    return WeightedContrast(
        obs_index=obs_index,
        weights=weights,
        treatment_mask=np.concatenate(tmask),
        outcomes=outcomes,
        provenance={"solver": "ideal", "t1": estimand.t1, "ty": estimand.ty},
    )


def hajek_contrast(
    panel: Panel,
    estimand: ResolvedEstimand,
    propensities: Mapping[int, np.ndarray] | np.ndarray,
) -> WeightedContrast:
    """Normalized inverse-probability weighted contrast at the outcome time.

    ``propensities`` gives, per unit, Pr(G_i = t | X_i) for each referenced
    initiation time t (and t1): either a mapping from internal time code to a
    length-n array, or a single array interpreted as each unit's probability
    of its own cohort.
    """
    ty = estimand.ty

    def prob_of(t: int, unit_mask: np.ndarray) -> np.ndarray:
        if isinstance(propensities, Mapping):
            pr = np.asarray(propensities[t], dtype=float)[unit_mask]
        else:
            pr = np.asarray(propensities, dtype=float)[unit_mask]
        if (pr <= 0).any():
            raise PanelError("propensities must be strictly positive on referenced cohorts")
        return pr

    treat_units = panel.init_time == estimand.t1
    if not treat_units.any():
        raise PanelError(f"no unit initiates treatment at t1={estimand.t1}")
    inv = 1.0 / prob_of(estimand.t1, treat_units)
    w_treat = inv / inv.sum()

    obs = [_cells_at(panel, ty, treat_units)]
    wts = [w_treat]
    tmask = [np.ones(int(treat_units.sum()), bool)]
    for t, p in estimand.reference.items():
        cohort = panel.init_time == t
        if not cohort.any():
            raise PanelError("empty reference cohort")
        inv = 1.0 / prob_of(t, cohort)
        obs.append(_cells_at(panel, ty, cohort))
        wts.append(p * inv / inv.sum())
        tmask.append(np.zeros(int(cohort.sum()), bool))

    obs_index = np.vstack(obs)
    outcomes = panel.outcome[obs_index[:, 0], obs_index[:, 1] - 1]
    return WeightedContrast(
        obs_index=obs_index,
        weights=np.concatenate(wts),
        treatment_mask=np.concatenate(tmask),
        outcomes=outcomes,
        provenance={"solver": "hajek", "t1": estimand.t1, "ty": estimand.ty},
    )


_QUANTILES = [("min", 0.0), ("q25", 0.25), ("median", 0.5), ("q75", 0.75),
              ("q95", 0.95), ("max", 1.0)]


def decompose_by_group(
    contrast: WeightedContrast,
    tags: Iterable[ObservationTag],
) -> dict[str, dict[str, float]]:
    """Summary statistics of absolute weights per validity group.

    Quantiles use linear interpolation between order statistics so the tables
    are reproducible bit-for-bit.  An "AllObservations" row pools every
    weighted observation.
    """
    group_of = {(t.unit, t.time): t.group for t in tags}
    by_group: dict[str, list[float]] = {}
    for k in range(len(contrast.weights)):
        w = contrast.weights[k]
        if w == 0:
            continue
        key = (int(contrast.obs_index[k, 0]), int(contrast.obs_index[k, 1]))
        g = group_of.get(key, "Excluded")
        by_group.setdefault(g, []).append(abs(float(w)))
        by_group.setdefault("AllObservations", []).append(abs(float(w)))

    out = {}
    for g, vals in by_group.items():
        arr = np.asarray(vals)
        row = {name: float(np.quantile(arr, q)) for name, q in _QUANTILES}
        row["mean"] = float(arr.mean())
        row["sum"] = float(arr.sum())
        row["count"] = int(arr.size)
        out[g] = row
    return out

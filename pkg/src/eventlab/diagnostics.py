"""Weighting diagnostics: effective sample sizes, information shares,
leave-one-out influence, balance tables, dispersion, and sign reversals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .contrast import WeightedContrast, decompose_by_group
from .panel import ObservationTag, Panel, PanelError
from .twfe import TwfeFit, fit_twfe, implied_weights

__all__ = [
    "DiagnosticsReport",
    "ess",
    "influence",
    "influence_refit",
    "smd_table",
    "weight_dispersion",
    "sign_reversal_scan",
    "build_report",
]

#: Leverage this close to one makes the leave-one-out update singular.
_LEVERAGE_TOL = 1e-8

#: Mean-weight magnitude below which a CV would be meaningless.
_CV_MEAN_TOL = 1e-15

CV_OVERFLOW = "≈0 mean; CV overflow"


def _group_lookup(tags) -> dict[tuple[int, int], str]:
    if isinstance(tags, tuple) and len(tags) == 2:
        group = tags[0]
        return {(i, t + 1): str(group[i, t])
                for i in range(group.shape[0]) for t in range(group.shape[1])}
    return {(t.unit, t.time): t.group for t in tags}


def _cell_groups(contrast: WeightedContrast, tags) -> np.ndarray:
    lookup = _group_lookup(tags)
    return np.array([
        lookup.get((int(contrast.obs_index[k, 0]), int(contrast.obs_index[k, 1])), "Excluded")
        for k in range(len(contrast.weights))
    ], dtype=object)


def ess(contrast: WeightedContrast, tags) -> dict[str, dict[str, float]]:
    """Group-wise effective sample size (Σ|w|)²/Σw² and information shares.

    Shares are each group's ESS over the sum of group ESS values, so they sum
    to one across the groups carrying any weight.
    """
    groups = _cell_groups(contrast, tags)
    out: dict[str, dict[str, float]] = {}
    for g in sorted(set(groups)):
        mask = groups == g
        w = contrast.weights[mask]
        used = w != 0
        s1 = float(np.abs(w).sum())
        s2 = float((w ** 2).sum())
        out[g] = {
            "n": int(used.sum()),
            "ess": s1 * s1 / s2 if s2 > 0 else 0.0,
        }
    total = sum(v["ess"] for v in out.values())
    for v in out.values():
        v["p_info"] = v["ess"] / total if total > 0 else 0.0
    return out


def influence(fit: TwfeFit, target: str, mode: str = "fast") -> tuple[np.ndarray, list[dict]]:
    """Leave-one-out change in a fitted coefficient, per observation.

    Fast mode uses the rank-one update of the least-squares functional; refit
    mode re-estimates without the observation.  Observations whose removal
    leaves the target unidentified get NaN and a flag.
    Returns (PE array aligned with fit.obs_index, flags).
    """
    if mode not in ("fast", "refit"):
        raise PanelError(f"unknown influence mode {mode!r}")
    n = len(fit.y)
    pe = np.full(n, np.nan)
    flags: list[dict] = []
    if mode == "fast":
        h = fit.estimator_row(target)
        r = fit.residuals()
        lev = fit.leverage()
        for k in range(n):
            if lev[k] >= 1.0 - _LEVERAGE_TOL:
                flags.append(_breaks(fit, k))
                continue
            pe[k] = -h[k] * r[k] / (1.0 - lev[k])
        return pe, flags

    base = fit.coefficient(target)
    j = fit.column_names.index(target)
    for k in range(n):
        keep = np.ones(n, bool)
        keep[k] = False
        X = fit.design[keep]
        gram = X.T @ X
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            flags.append(_breaks(fit, k))
            continue
        z = np.linalg.solve(chol, X.T @ fit.y[keep])
        beta = np.linalg.solve(chol.T, z)
        pe[k] = float(beta[j]) - base
    return pe, flags


def _breaks(fit: TwfeFit, k: int) -> dict:
    i, t = int(fit.obs_index[k, 0]), int(fit.obs_index[k, 1])
    return {
        "unit": fit.panel.units[i],
        "time": fit.panel.time_label(t),
        "note": "breaks identification",
    }


def influence_refit(estimate_without: Callable[[int], float], base: float, n: int) -> tuple[np.ndarray, list[dict]]:
    """Generic refit influence: PE_k = estimate_without(k) - base.

    For pipelines that are not linear in the outcomes (e.g. nonnegativity-
    constrained balancing weights, whose active set can change on removal).
    """
    pe = np.full(n, np.nan)
    flags: list[dict] = []
    for k in range(n):
        try:
            pe[k] = estimate_without(k) - base
        except Exception as exc:
            flags.append({"index": k, "note": f"breaks identification: {exc}"})
    return pe, flags


def smd_table(
    panel: Panel,
    contrast: WeightedContrast,
    columns: Sequence[str] | None = None,
    design: tuple[np.ndarray, Sequence[str]] | None = None,
) -> pd.DataFrame:
    """Standardized mean differences per column, before and after weighting.

    SMD = (weighted treatment mean - weighted control mean) divided by the
    pooled unweighted standard deviation sqrt((s_T² + s_C²)/2); "before" uses
    uniform weights over each component's observations.  Columns may be named
    covariates (evaluated per observation's unit) or an explicit per-
    observation matrix such as retained design columns.
    """
    treat = contrast.treatment_mask
    if design is not None:
        values, names = np.asarray(design[0], dtype=float), list(design[1])
    else:
        names = list(columns if columns is not None else panel.covariates)
        cols = []
        for name in names:
            if name not in panel.covariates:
                raise PanelError(f"unknown covariate {name!r}")
            cols.append(panel.covariates[name][contrast.obs_index[:, 0]])
        values = np.column_stack(cols) if cols else np.empty((len(treat), 0))

    rows = []
    wt = contrast.weights[treat]
    wc = contrast.weights[~treat]
    nt, nc = int(treat.sum()), int((~treat).sum())
    for j, name in enumerate(names):
        xt, xc = values[treat, j], values[~treat, j]
        st2 = float(np.var(xt, ddof=1)) if nt > 1 else 0.0
        sc2 = float(np.var(xc, ddof=1)) if nc > 1 else 0.0
        denom = np.sqrt((st2 + sc2) / 2.0)
        if denom == 0:
            rows.append({"column": name, "smd_before": np.nan, "smd_after": np.nan,
                         "flag": "undefined: constant in both components"})
            continue
        before = (xt.mean() - xc.mean()) / denom
        after = (float(wt @ xt) - float(wc @ xc)) / denom
        rows.append({"column": name, "smd_before": float(before),
                     "smd_after": float(after), "flag": ""})
    return pd.DataFrame(rows, columns=["column", "smd_before", "smd_after", "flag"])


def weight_dispersion(contrast: WeightedContrast, tags) -> dict[str, dict]:
    """Per-group absolute-weight summaries plus the coefficient of variation.

    Quantiles interpolate linearly between order statistics.  CV is computed
    on the stored component weights; a near-zero mean is flagged instead of
    reporting an exploding ratio.
    """
    out = decompose_by_group(contrast, _tags_iter(contrast, tags))
    groups = _cell_groups(contrast, tags)
    for g in out:
        if g == "AllObservations":
            w = contrast.weights[contrast.weights != 0]
        else:
            mask = (groups == g) & (contrast.weights != 0)
            w = contrast.weights[mask]
        mean = float(w.mean()) if w.size else 0.0
        if abs(mean) < _CV_MEAN_TOL:
            out[g]["cv"] = CV_OVERFLOW
        else:
            sd = float(w.std(ddof=1)) if w.size > 1 else 0.0
            out[g]["cv"] = abs(sd / mean)
    return out


def _tags_iter(contrast: WeightedContrast, tags) -> Iterable[ObservationTag]:
    if isinstance(tags, tuple) and len(tags) == 2:
        group, role = tags
        return [
            ObservationTag(unit=i, time=t + 1, group=str(group[i, t]), role=str(role[i, t]))
            for i in range(group.shape[0]) for t in range(group.shape[1])
        ]
    return tags


def sign_reversal_scan(contrast: WeightedContrast, panel: Panel | None = None) -> list[dict]:
    """Observations whose stored component weight is negative, so a larger
    outcome lowers that component's weighted mean."""
    out = []
    for k in np.where(contrast.weights < 0)[0]:
        i, t = int(contrast.obs_index[k, 0]), int(contrast.obs_index[k, 1])
        out.append({
            "unit": panel.units[i] if panel is not None else i,
            "time": panel.time_label(t) if panel is not None else t,
            "component": "treatment" if contrast.treatment_mask[k] else "control",
            "weight": float(contrast.weights[k]),
        })
    return out


@dataclass
class DiagnosticsReport:
    ess_by_group: dict
    info_share: dict
    dispersion: dict
    balance: pd.DataFrame
    sign_reversal: list
    influence: list | None = None

    def to_dict(self) -> dict:
        balance = [
            {k: (None if isinstance(v, float) and np.isnan(v) else v)
             for k, v in row.items()}
            for row in self.balance.to_dict(orient="records")
        ]
        return {
            "ess_by_group": {g: v["ess"] for g, v in self.ess_by_group.items()},
            "group_sizes": {g: v["n"] for g, v in self.ess_by_group.items()},
            "info_share": dict(self.info_share),
            "dispersion": self.dispersion,
            "balance": balance,
            "sign_reversal": self.sign_reversal,
            "influence": self.influence,
        }


def build_report(
    panel: Panel,
    contrast: WeightedContrast,
    tags,
    columns: Sequence[str] | None = None,
    design: tuple[np.ndarray, Sequence[str]] | None = None,
    influence_entries: list | None = None,
) -> DiagnosticsReport:
    table = ess(contrast, tags)
    return DiagnosticsReport(
        ess_by_group=table,
        info_share={g: v["p_info"] for g, v in table.items()},
        dispersion=weight_dispersion(contrast, tags),
        balance=smd_table(panel, contrast, columns=columns, design=design),
        sign_reversal=sign_reversal_scan(contrast, panel),
        influence=influence_entries,
    )

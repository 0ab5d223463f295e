"""Shared analysis pipelines returning JSON-serializable payloads.

Both the command line and the HTTP service call these functions, so an
endpoint response and the corresponding CLI artifact are the same object by
construction.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .balance import InfeasibleError, robust_contrast
from .contrast import WeightedContrast, decompose_by_group, ideal_contrast
from .diagnostics import build_report, influence
from .inference import BootstrapConfig, cluster_bootstrap, event_study_sweep
from .panel import (
    AssumptionSet,
    EstimandSpec,
    Panel,
    PanelError,
    classify,
    group_counts,
    tags_to_frame,
)
from .twfe import TwfeFit, TwfeSpec, fit_twfe, implied_weights, tau_name

__all__ = [
    "run_validate",
    "run_classify",
    "run_estimate",
    "run_twfe",
    "run_decompose",
    "run_diagnose",
    "run_event_study",
    "run_bootstrap",
]


def run_validate(panel: Panel) -> dict:
    cohorts: dict[str, int] = {}
    for i in range(panel.n_units):
        cohorts[str(panel.init_label(i))] = cohorts.get(str(panel.init_label(i)), 0) + 1
    return {
        "units": panel.n_units,
        "times": panel.n_times,
        "time_range": [panel.time_labels[0], panel.time_labels[-1]],
        "cohorts": dict(sorted(cohorts.items())),
        "covariates": sorted(panel.covariates),
        "missing_cells": int(panel.missing.sum()) if panel.missing is not None else 0,
    }


def run_classify(panel: Panel, estimand: EstimandSpec, assumptions: AssumptionSet) -> dict:
    tags = classify(panel, estimand, assumptions)
    counts = group_counts(tags)
    frame = tags_to_frame(panel, tags)
    return {
        "counts": {g: {"treatment": c[0], "control": c[1]} for g, c in counts.items()},
        "non_excluded": int((frame["group"] != "Excluded").sum()),
        "tags": frame.to_dict(orient="records"),
    }


def _estimator_options(options: Mapping) -> dict:
    out = {}
    for key in ("degree", "delta", "nonneg", "target", "lambdas", "pooled_reference"):
        if key in options and options[key] is not None:
            out[key] = options[key]
    return out


def _estimate_contrast(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    options: Mapping,
) -> tuple[WeightedContrast, dict]:
    adjustment = tuple(options.get("adjust", ()))
    if not adjustment and not assumptions.invariance_on and options.get("target", "study") == "study":
        resolved = estimand.validate(panel)
        return ideal_contrast(panel, resolved), {}
    return robust_contrast(panel, estimand, assumptions, adjustment,
                           **_estimator_options(options))


def _weights_records(panel: Panel, contrast: WeightedContrast,
                     estimand: EstimandSpec, assumptions: AssumptionSet) -> list[dict]:
    tags = classify(panel, estimand, assumptions)
    return contrast.to_frame(panel, tags).to_dict(orient="records")


def run_estimate(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    options: Mapping | None = None,
) -> dict:
    """Weighting estimate with full solver provenance and exportable weights."""
    options = dict(options or {})
    contrast, info = _estimate_contrast(panel, estimand, assumptions, options)
    solver: dict = {}
    if "treatment" in info:
        ts = info["treatment"]
        solver["treatment"] = {
            "status": ts.status, "kkt_residual": ts.kkt_residual,
            "max_imbalance": float(ts.achieved_imbalance.max(initial=0.0)),
            "duals": ts.duals,
        }
        solver["control"] = [
            {"p": p, "status": cs.status, "kkt_residual": cs.kkt_residual,
             "max_imbalance": float(cs.achieved_imbalance.max(initial=0.0)),
             "duals": cs.duals}
            for p, cs in info["control"]
        ]
    return {
        "estimate": contrast.estimate,
        "provenance": {k: str(v) for k, v in contrast.provenance.items()},
        "solver": solver,
        "weights": _weights_records(panel, contrast, estimand, assumptions),
    }


def _twfe_spec(panel: Panel, options: Mapping) -> TwfeSpec:
    return TwfeSpec(
        dynamic=options.get("dynamic", True),
        horizon=tuple(options["horizon"]) if options.get("horizon") else None,
        covariates=tuple(options.get("covariates", ())),
        interaction_weighted=bool(options.get("interaction_weighted", False)),
        bin_endpoints=bool(options.get("bin_endpoints", False)),
    )


def _fit_payload(fit: TwfeFit) -> dict:
    return {
        "coefficients": {name: float(v) for name, v in
                         zip(fit.column_names, fit.coefficients)},
        "dropped_columns": list(fit.dropped_columns),
        "drop_witness": dict(fit.drop_witness),
        "condition_number": fit.condition_number,
        "n_observations": len(fit.y),
    }


def run_twfe(panel: Panel, options: Mapping | None = None) -> dict:
    options = dict(options or {})
    fit = fit_twfe(panel, _twfe_spec(panel, options))
    payload = _fit_payload(fit)
    target = options.get("decompose")
    if target:
        contrast = implied_weights(fit, target)
        payload["decomposition"] = {
            "target": target,
            "estimate": contrast.estimate,
            "weights": contrast.to_frame(fit.panel).to_dict(orient="records"),
        }
    return payload


def run_decompose(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    options: Mapping | None = None,
) -> dict:
    """Dynamic-regression implied weights for the estimand's horizon, broken
    down by validity group."""
    options = dict(options or {})
    resolved = estimand.validate(panel)
    fit = fit_twfe(panel, _twfe_spec(panel, options))
    target = options.get("decompose") or tau_name(resolved.horizon)
    contrast = implied_weights(fit, target)
    tags = classify(panel, estimand, assumptions)
    summary = decompose_by_group(contrast, tags)
    return {
        "target": target,
        "estimate": contrast.estimate,
        "by_group": summary,
        "weights": contrast.to_frame(panel, tags).to_dict(orient="records"),
        "fit": _fit_payload(fit),
    }


def contrast_from_records(panel: Panel, records: Sequence[Mapping]) -> WeightedContrast:
    """Rebuild a contrast from an exported weight table (round-trip path)."""
    obs, wts, mask = [], [], []
    uidx = {u: i for i, u in enumerate(panel.units)}
    for row in records:
        u = str(row["unit"])
        if u not in uidx:
            raise PanelError(f"weight row references unknown unit {u!r}")
        i = uidx[u]
        t = panel.time_index(int(row["time"]))
        obs.append((i, t))
        wts.append(float(row["weight"]))
        mask.append(str(row["component"]) == "treatment")
    obs_index = np.asarray(obs, dtype=int).reshape(-1, 2)
    outcomes = panel.outcome[obs_index[:, 0], obs_index[:, 1] - 1]
    return WeightedContrast(
        obs_index=obs_index, weights=np.asarray(wts),
        treatment_mask=np.asarray(mask, dtype=bool), outcomes=outcomes,
        provenance={"solver": "weight-file"},
    )


def run_diagnose(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    weights: Sequence[Mapping] | None = None,
    options: Mapping | None = None,
) -> dict:
    """Diagnostics for supplied weights, or for the estimand's implied-weight
    decomposition when no weight table is given."""
    options = dict(options or {})
    resolved = estimand.validate(panel)
    tags = classify(panel, estimand, assumptions)
    influence_entries = None
    if weights is not None:
        contrast = contrast_from_records(panel, weights)
        design = None
    else:
        fit = fit_twfe(panel, _twfe_spec(panel, options))
        target = options.get("decompose") or tau_name(resolved.horizon)
        contrast = implied_weights(fit, target)
        design = (fit.design, fit.column_names)
        pe, flags = influence(fit, target, mode="fast")
        order = np.argsort(-np.abs(np.nan_to_num(pe)))
        influence_entries = [
            {
                "unit": panel.units[int(fit.obs_index[k, 0])],
                "time": panel.time_label(int(fit.obs_index[k, 1])),
                "pe": float(pe[k]),
            }
            for k in order[: int(options.get("influence_top", 20))]
            if not np.isnan(pe[k])
        ] + flags
    report = build_report(
        panel, contrast, tags,
        columns=options.get("columns"),
        design=design,
        influence_entries=influence_entries,
    )
    return report.to_dict()


def run_event_study(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    options: Mapping | None = None,
) -> dict:
    options = dict(options or {})
    bootstrap = None
    if options.get("bootstrap"):
        b = options["bootstrap"]
        bootstrap = BootstrapConfig(
            replications=int(b.get("replications", 500)),
            seed=b.get("seed"),
        )
    l_range = tuple(options["l_range"]) if options.get("l_range") else None
    curve = event_study_sweep(
        panel,
        options.get("family", "twfe"),
        estimand,
        assumptions,
        l_range=l_range,
        bootstrap=bootstrap,
        adjustment=tuple(options.get("adjust", ())),
        **_estimator_options({k: v for k, v in options.items()
                              if k in ("degree", "delta", "nonneg", "target")}),
    )
    return {
        "estimator": curve.estimator,
        "information_set": curve.information_set,
        "curve": curve.points,
    }


def run_bootstrap(
    panel: Panel,
    estimand: EstimandSpec,
    assumptions: AssumptionSet,
    options: Mapping | None = None,
) -> dict:
    """Cluster-bootstrap SE and percentile CI for one scalar pipeline."""
    options = dict(options or {})
    b = options.get("bootstrap", {})
    config = BootstrapConfig(replications=int(b.get("replications", 500)),
                             seed=b.get("seed"))
    family = options.get("family", "estimate")
    if family == "twfe":
        resolved = estimand.validate(panel)
        spec = _twfe_spec(panel, options)
        target = options.get("decompose") or tau_name(resolved.horizon)

        def pipe(p: Panel) -> float:
            return fit_twfe(p, spec).coefficient(target)
    elif family == "estimate":
        def pipe(p: Panel) -> float:
            c, _ = _estimate_contrast(p, estimand, assumptions, options)
            return c.estimate
    else:
        raise PanelError(f"unknown bootstrap pipeline {family!r}")
    point = pipe(panel)
    res = cluster_bootstrap(panel, pipe, config)
    out = {"estimate": point}
    out.update(res.to_dict())
    return out

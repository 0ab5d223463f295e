import numpy as np
import pandas as pd
import pytest

from eventlab import AssumptionSet, EstimandSpec, Panel, load_panel


def toy_rows(effect=2.0):
    """Six units observed 2000-2005; units 1-5 initiate in 2002, unit 6 never.

    Outcomes are unit + time trends plus a constant post-initiation effect, so
    every estimator has a known target.
    """
    rows = []
    for u in range(1, 7):
        g = 2002 if u <= 5 else "never"
        for t in range(2000, 2006):
            y = 0.5 * u + 0.1 * (t - 2000)
            if g != "never" and t >= g:
                y += effect
            rows.append({"unit": f"u{u}", "time": t, "outcome": y, "g": g})
    return rows


@pytest.fixture
def toy_panel():
    return load_panel(toy_rows())


@pytest.fixture
def toy_estimand():
    return EstimandSpec(t1=2002, ty=2003)


def make_random_panel(rng, n_units=None, n_times=None, n_cov=0, p_never=0.3,
                      effect=0.0):
    """Random staggered panel with calendar labels starting at 2000."""
    n_i = int(n_units if n_units is not None else rng.integers(4, 21))
    n_t = int(n_times if n_times is not None else rng.integers(4, 13))
    labels = list(range(2000, 2000 + n_t))
    init = np.empty(n_i, dtype=object)
    for i in range(n_i):
        if rng.random() < p_never:
            init[i] = "never"
        else:
            init[i] = int(rng.choice(labels))
    # guarantee at least one treated cohort and one never-treated unit
    init[0] = int(rng.choice(labels[1:]))
    init[-1] = "never"
    covs = {f"x_{j}": rng.normal(size=n_i) for j in range(n_cov)}
    rows = []
    alpha = rng.normal(size=n_i)
    beta = rng.normal(size=n_t)
    for i in range(n_i):
        for t, lab in enumerate(labels):
            y = alpha[i] + beta[t] + rng.normal(scale=0.5)
            for name, col in covs.items():
                y += 0.3 * col[i]
            if init[i] != "never" and lab >= init[i]:
                y += effect
            row = {"unit": f"u{i}", "time": lab, "outcome": y, "g": init[i]}
            for name, col in covs.items():
                row[name] = col[i]
            rows.append(row)
    return load_panel(pd.DataFrame(rows))


def pick_estimand(rng, panel):
    """A valid (t1, ty) pair with a non-empty t1 cohort and pure control."""
    cohorts = sorted({int(g) for g in panel.init_time if g != panel.never_code})
    t1 = int(rng.choice(cohorts))
    ty = int(rng.integers(t1, panel.n_times + 1))
    return EstimandSpec(t1=panel.time_label(t1), ty=panel.time_label(ty))


def random_assumptions(rng, horizon):
    """Assumption toggles drawn within the ranges the estimand admits."""
    l = horizon
    inv = rng.choice(["off", "per-cohort", "strong"])
    kappa = None if rng.random() < 0.5 else int(rng.integers(0, 4))
    phi = None
    if l >= 1 and rng.random() < 0.5:
        phi = int(rng.integers(0, l))
    xi = None if rng.random() < 0.5 else int(rng.integers(l + 1, l + 4))
    return AssumptionSet(invariance=str(inv), anticipation_kappa=kappa,
                         delay_phi=phi, dissipation_xi=xi)


def oracle_classify(panel, estimand, assumptions):
    """Independent per-cell predicate evaluation of the licensing rules for a
    pure (never-treated) reference; used as the classification oracle."""
    resolved = estimand.validate(panel)
    t1, ty, l = resolved.t1, resolved.ty, resolved.horizon
    inv = assumptions.invariance != "off"
    kappa = assumptions.anticipation_kappa
    phi = assumptions.delay_phi
    xi = assumptions.dissipation_xi
    out = {}
    for i in range(panel.n_units):
        g = int(panel.init_time[i])
        never = g == panel.never_code
        for t in range(1, panel.n_times + 1):
            if panel.missing is not None and panel.missing[i, t - 1]:
                out[(i, t)] = ("Excluded", "None")
                continue
            at_ty = t == ty
            group, role = "Excluded", "None"
            if not never and t - g == l:
                if at_ty:
                    group, role = "IdealExperiment", "Treatment"
                elif inv:
                    group, role = "TimeInvariance", "Treatment"
            elif never:
                if at_ty:
                    group, role = "IdealExperiment", "Control"
                elif inv:
                    group, role = "TimeInvariance", "Control"
            else:
                rel = t - g
                time_ok = at_ty or inv
                if time_ok and kappa is not None and rel < -kappa:
                    group, role = "LimitedAnticipation", "Control"
                elif time_ok and phi is not None and 0 <= rel < l and rel <= phi:
                    group, role = "DelayedOnset", "Control"
                elif time_ok and xi is not None and rel > l and rel >= xi:
                    group, role = "EffectDissipation", "Control"
            out[(i, t)] = (group, role)
    return out

#!/usr/bin/env python3
"""Case study: no-fault divorce reform and female suicide rates.

Requires the raw state-year panel (not shipped): set EVENTLAB_DIVORCE_DATA to
the CSV path. Focuses on the effect five years after a 1975 reform, decomposes
the dynamic regression coefficient, and re-estimates with explicit weights.
"""

import os
import sys

from eventlab import (
    AssumptionSet,
    EstimandSpec,
    classify,
    decompose_by_group,
    ess,
    fit_twfe,
    implied_weights,
    influence,
    load_divorce_dataset,
    tau_name,
)
from eventlab.balance import robust_contrast

path = os.environ.get("EVENTLAB_DIVORCE_DATA")
if not path or not os.path.exists(path):
    sys.exit("set EVENTLAB_DIVORCE_DATA to the raw divorce-reform CSV")

panel = load_divorce_dataset(path)
print(f"panel: {panel.n_units} states x {panel.n_times} years")

estimand = EstimandSpec(t1=1975, ty=1980)
l = estimand.validate(panel).horizon
asm = AssumptionSet(invariance="strong", anticipation_kappa=0,
                    delay_phi=l - 1, dissipation_xi=l + 1)
tags = classify(panel, estimand, asm)

fit = fit_twfe(panel)
target = tau_name(l)
print(f"{target} = {fit.coefficient(target):+.3f}")

contrast = implied_weights(fit, target)
print("\nabsolute-weight sums by validity group:")
for g, row in decompose_by_group(contrast, tags).items():
    print(f"  {g:20s} sum|w|={row['sum']:.3f}")

print("\neffective sample size by group:")
for g, row in ess(contrast, tags).items():
    print(f"  {g:20s} n={row['n']:4d} ess={row['ess']:8.3f} "
          f"p_info={row['p_info']:.3f}")

pe, _ = influence(fit, target, mode="fast")
print("\nlargest leave-one-out changes:")
import numpy as np
for k in np.argsort(-np.abs(np.nan_to_num(pe)))[:5]:
    i, t = fit.obs_index[k]
    print(f"  {panel.units[int(i)]} {panel.time_label(int(t))}: {pe[k]:+.3f}")

print("\nweighting re-analysis (all observations):")
unrestricted, _ = robust_contrast(panel, estimand, asm,
                                  ("unit-indicators", "time-indicators"),
                                  target="twfe")
print(f"  unit+year balance, unrestricted: {unrestricted.estimate:+.3f}")
nonneg, _ = robust_contrast(panel, estimand, asm, ("unit-indicators",),
                            nonneg=True, target="twfe")
print(f"  unit balance, nonnegative:       {nonneg.estimate:+.3f}")

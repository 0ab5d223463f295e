#!/usr/bin/env python3
"""Opening up the two-way fixed-effects black box.

With several adoption cohorts, the dynamic regression's tau coefficient is an
exact weighted contrast of observations. Decomposing it shows negative
weights, already-treated units serving as controls, and which validity groups
carry the information.
"""

import numpy as np
import pandas as pd

from eventlab import (
    AssumptionSet,
    EstimandSpec,
    classify,
    decompose_by_group,
    ess,
    fit_twfe,
    implied_weights,
    influence,
    sign_reversal_scan,
    tau_name,
)
from eventlab import load_panel

rng = np.random.default_rng(0)
effects = {l: 0.5 * (l + 1) for l in range(0, 6)}
rows = []
for k, (u, g) in enumerate((("a", 2), ("b", 3), ("c", 4),
                            ("d", "never"), ("e", "never"))):
    for t in range(1, 8):
        y = 2.0 * k + 0.3 * t + rng.normal(scale=0.01)
        if g != "never":
            y += effects.get(t - g, 0.0)
        rows.append({"unit": u, "time": t, "outcome": y, "g": g})
panel = load_panel(pd.DataFrame(rows))

fit = fit_twfe(panel)
target = tau_name(1)
print(f"{target} = {fit.coefficient(target):+.3f}  "
      f"(true effect at that horizon: {effects[1]:+.3f})")

contrast = implied_weights(fit, target)
print(f"reconstruction check: contrast = {contrast.estimate:+.3f}")

# Already-treated observations sneak into the control component.
z = panel.treatment_indicator()
ctrl = contrast.obs_index[~contrast.treatment_mask & (contrast.weights != 0)]
forbidden = [(panel.units[i], panel.time_label(t))
             for i, t in ctrl if z[i, t - 1] == 1]
print(f"already-treated cells used as controls: {forbidden}")

# Negative stored weights mean a larger outcome lowers that component's mean.
for hit in sign_reversal_scan(contrast, panel)[:5]:
    print(f"  sign reversal: {hit}")

estimand = EstimandSpec(t1=2, ty=3)
asm = AssumptionSet(invariance="strong", anticipation_kappa=0,
                    delay_phi=0, dissipation_xi=2)
tags = classify(panel, estimand, asm)

print("\nabsolute-weight summary by validity group:")
for g, row in decompose_by_group(contrast, tags).items():
    print(f"  {g:20s} n={row['count']:2d} sum|w|={row['sum']:.3f} "
          f"max={row['max']:.3f}")

print("\neffective sample size by group:")
for g, row in ess(contrast, tags).items():
    print(f"  {g:20s} n={row['n']:2d} ess={row['ess']:6.2f} "
          f"p_info={row['p_info']:.3f}")

pe, flags = influence(fit, target, mode="fast")
top = np.argsort(-np.abs(np.nan_to_num(pe)))[:3]
print("\nmost influential observations (leave-one-out change):")
for k in top:
    i, t = fit.obs_index[k]
    print(f"  {panel.units[int(i)]} @ {panel.time_label(int(t))}: {pe[k]:+.4f}")

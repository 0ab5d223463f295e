#!/usr/bin/env python3
"""Which observations does an event-study comparison actually use?

A small panel: five units adopt in 2002, one never does. We ask for the
average effect in 2003 of having initiated in 2002 (versus never initiating)
and watch the licensed sample grow as assumptions are added.
"""

import pandas as pd

from eventlab import AssumptionSet, EstimandSpec, classify, group_counts, load_panel

rows = []
for k in range(1, 7):
    g = 2002 if k <= 5 else "never"
    for t in range(2000, 2006):
        y = 0.5 * k + 0.1 * (t - 2000) + (2.0 if g != "never" and t >= g else 0.0)
        rows.append({"unit": f"u{k}", "time": t, "outcome": y, "g": g})
panel = load_panel(pd.DataFrame(rows))

estimand = EstimandSpec(t1=2002, ty=2003)

toggles = [
    ("nothing beyond consistency", AssumptionSet()),
    ("+ time invariance (per cohort)", AssumptionSet(invariance="per-cohort")),
    ("+ no anticipation", AssumptionSet(invariance="per-cohort",
                                        anticipation_kappa=0)),
    ("+ delayed onset", AssumptionSet(invariance="per-cohort",
                                      anticipation_kappa=0, delay_phi=0)),
    ("+ effect dissipation", AssumptionSet(invariance="per-cohort",
                                           anticipation_kappa=0, delay_phi=0,
                                           dissipation_xi=2)),
]

for label, asm in toggles:
    tags = classify(panel, estimand, asm)
    counts = group_counts(tags)
    used = sum(t + c for g, (t, c) in counts.items() if g != "Excluded")
    print(f"{label:35s} licensed observations: {used:2d}")
    for g, (t, c) in counts.items():
        if g != "Excluded" and (t or c):
            print(f"    {g:20s} treatment={t:2d} control={c:2d}")

# With no extra assumptions only the outcome year itself is usable: the five
# adopters at 2003 versus the single never-treated unit at 2003.

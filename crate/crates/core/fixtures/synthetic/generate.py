"""Regenerate the synthetic panel: python3 generate.py (numpy required)."""
import sys

import numpy as np

rng = np.random.default_rng(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
dmus = ["A", "B", "C", "D", "E", "F"]
periods = list(range(1998, 2021))
base = np.array([0.35, 0.15, 0.05, -0.05, -0.2, -0.3])

rows_x, rows_y, rows_z = [], [], []
for n, d in enumerate(dmus):
    size = 1.0 + 0.5 * n
    stab = rng.normal(0.0, 1.0)
    shock = rng.normal(0.0, 0.2)
    for p in periods:
        labour = size * rng.uniform(80, 120)
        capital = size * rng.uniform(40, 60)
        stab = 0.6 * stab + rng.normal(0.0, 0.8)
        growth = rng.normal(2.0, 1.5)
        shock = 0.7 * shock + rng.normal(0.0, 0.15)
        eff = np.exp(base[n] + 0.1 * stab + shock + rng.normal(0.0, 0.05))
        papers = eff * np.sqrt(labour * capital) * 0.8
        patents = eff * capital * 0.05 * rng.uniform(0.8, 1.2)
        rows_x.append(f"{d},{p},{labour:.3f},{capital:.3f}")
        rows_y.append(f"{d},{p},{papers:.3f},{patents:.3f}")
        rows_z.append(f"{d},{p},{stab:.4f},{growth:.4f}")

for name, header, rows in [
    ("inputs.csv", "dmu,period,labour,capital", rows_x),
    ("outputs.csv", "dmu,period,papers,patents", rows_y),
    ("context.csv", "dmu,period,stability,gdp_growth", rows_z),
]:
    with open(name, "w") as f:
        f.write(header + "\n" + "\n".join(rows) + "\n")

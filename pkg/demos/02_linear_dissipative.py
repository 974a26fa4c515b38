"""Energy stability on the dissipative linear system.

Plain RK4 amplifies the energy for moderate steps even though the exact
flow dissipates it. Projecting onto the dissipative target repairs this,
but relaxation only has a positive root for small steps while the
quasi-orthogonal direction stays solvable across the whole range.
"""
import numpy as np

from rkproj.bench import run_solvability_sweep

rows = run_solvability_sweep(np.linspace(0.05, 1.3, 26), methods=("plain", "relaxation", "quasi-orthogonal"))

print(f"{'dt':>6s} {'plain dG':>11s} {'relaxation':>11s} {'quasi-orth':>11s}")
by_dt = {}
for r in rows:
    by_dt.setdefault(r.dt, {})[r.method] = r
for dt, cell in by_dt.items():
    relax = cell["relaxation"]
    qo = cell["quasi-orthogonal"]
    rtxt = f"{relax.ratio:.4f}" if relax.solvable else "no root"
    qtxt = f"{qo.dG:+.2e}" if qo.solvable else "no root"
    print(f"{dt:6.2f} {cell['plain'].dG:+11.2e} {rtxt:>11s} {qtxt:>11s}")

last = max(r.dt for r in rows if r.method == "relaxation" and r.solvable)
print(f"\nlargest solvable relaxation step on this grid: {last:.2f}")

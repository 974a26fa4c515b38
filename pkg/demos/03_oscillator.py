"""Energy drift and convergence on the nonlinear oscillator.

Plain RK4 lets the energy drift steadily. Every projection holds it to
rounding, and the quasi-orthogonal projection keeps the full order of the
base method. Pass --plot to save the drift curves.
"""
import sys

import numpy as np

from rkproj import ProjectionConfig, get_problem, get_tableau, integrate
from rkproj.bench import run_convergence

prob = get_problem("oscillator")
tab = get_tableau("rk44")
runs = {"plain": None, "orthogonal": "orthogonal", "relaxation": "relaxation",
        "quasi-orthogonal": "quasi-orthogonal"}
drift = {}
for label, method in runs.items():
    cfg = ProjectionConfig(method=method) if method else None
    tr = integrate(prob, tab, 0.1, 20.0, cfg)
    drift[label] = (tr.eff_times, tr.invariant_values[:, 0] - tr.invariant_values[0, 0])
    print(f"{label:17s} max |energy drift| = {np.abs(drift[label][1]).max():.2e}")

rep = run_convergence("oscillator", ["ssprk22", "rk44", "bsrk85"], ["plain", "quasi-orthogonal"],
                      0.1 * 0.5 ** np.arange(6), 10.0)
print("\nobserved order at t = 10")
for s in rep.series:
    print(f"  {s.tableau:8s} {s.method:17s} {s.slope:5.2f}  (design order {s.order})")

if "--plot" in sys.argv:
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    for label, (t, d) in drift.items():
        ax.semilogy(t[1:], np.abs(d[1:]) + 1e-18, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("|energy drift|")
    ax.legend()
    fig.savefig("oscillator_drift.png", dpi=120)
    print("saved oscillator_drift.png")

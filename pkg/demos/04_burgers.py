"""Where each projection points on the Burgers semidiscretization.

The angle between the correction direction and the energy gradient tells
how much of the correction is spent on the invariant. Relaxation moves
almost orthogonally to the gradient, which is why it needs large steps in
time to fix small energy errors. The line angle folds out the sign of the
direction.
"""
import numpy as np

from rkproj import get_problem
from rkproj.bench import run_comparison

prob = get_problem("burgers", n=50)
dt = 0.3 * prob.params["dx"]
methods = ["relaxation", "directional", "quasi-orthogonal"]

for tab in ("ssprk22", "rk44", "bsrk85"):
    res = run_comparison(prob, tab, methods, dt, 2.0, channel="line_angle_deg")
    means = "  ".join(f"{m} {np.nanmean(res.series(m)):6.2f}" for m in methods)
    print(f"{tab:8s} mean line angle: {means}")

res = run_comparison(prob, "rk44", methods, dt, 2.0, channel="projection_length")
print("\nmean projection length |q_hat - q_next| with rk44:")
for m in methods:
    print(f"  {m:17s} {np.mean(res.series(m)):.3e}")

"""Tour of the built-in Butcher tableaux.

Each method is checked against the rooted-tree order conditions up to
its design order, then integrated on y' = y cos t to show the observed global
order on a short step ladder.
"""
import math

import numpy as np

from rkproj import OdeProblem, get_tableau, integrate, tableau_names, verify_order_conditions

prob = OdeProblem("cos", lambda t, y: y * math.cos(t), np.array([1.0]))
t_final = 2.0
exact = math.exp(math.sin(t_final))

print(f"{'name':8s} {'stages':>6s} {'order':>5s} {'conditions':>10s} {'observed':>8s}")
for name in tableau_names():
    tab = get_tableau(name)
    report = verify_order_conditions(tab, tab.order)
    # higher order methods reach rounding sooner, so start them coarser
    dts = {2: 0.05, 3: 0.05, 4: 0.1, 5: 0.4}[tab.order] * 0.5 ** np.arange(4)
    errs = [abs(integrate(prob, tab, dt, t_final).final[0] - exact) for dt in dts]
    slope = np.polyfit(np.log2(dts), np.log2(errs), 1)[0]
    print(f"{name:8s} {tab.stages:6d} {tab.order:5d} {'ok' if report.ok else 'FAIL':>10s} {slope:8.2f}")

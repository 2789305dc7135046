"""
Tracking the needed severity with one projected gradient step
=============================================================

The controller keeps a single number theta in [0, 1], charges itself
D_t |theta_t - theta*_t| each round, and moves by eta * D_t toward the
revealed target.  With the step tuned to the path variation P of the
target sequence, the cumulative charge stays under
sqrt((1 + 2P) sum D_t^2) no matter how the regimes shift.
"""

from __future__ import annotations

import numpy as np

from adl_lab.metrics import instance_bound, instance_bound_prefix, path_variation
from adl_lab.severity import SeverityController, optimal_step_size, theta_ogd_step

rng = np.random.default_rng(7)

# Three regimes: calm, stressed, recovering.  Deficits scale with stress.
theta_star = np.concatenate(
    [np.full(12, 0.10), np.full(10, 0.85), np.full(10, 0.30)]
)
deficits = np.concatenate(
    [rng.uniform(0.5, 1.5, 12), rng.uniform(4.0, 8.0, 10), rng.uniform(1.0, 2.0, 10)]
)

p = path_variation(theta_star)
eta = optimal_step_size(p, deficits)
bound = instance_bound(p, deficits)
prefix = instance_bound_prefix(theta_star, deficits)
print(f"path variation P = {p:.3f}   tuned step eta = {eta:.4f}")
print(f"instance envelope sqrt((1 + 2P) sum D^2) = {bound:.3f}")
print()

controller = SeverityController(theta=0.0, step=eta)
regret = 0.0
print("round   deficit   theta*   theta   cumulative regret   envelope")
for t, (d, target) in enumerate(zip(deficits, theta_star)):
    regret += float(d) * abs(controller.theta - float(target))
    if t % 4 == 0 or t == len(deficits) - 1:
        print(
            f"{t:5d}   {d:7.3f}   {target:6.2f}   {controller.theta:5.3f}"
            f"   {regret:17.3f}   {prefix[t]:8.3f}"
        )
    controller = theta_ogd_step(controller, float(d), float(target))

print()
print(f"final regret {regret:.3f} <= envelope {bound:.3f}: {regret <= bound}")

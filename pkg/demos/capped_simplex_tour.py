"""
A tour of the haircut polytope
==============================

Allocations live on X(B, u): the box [0, u] sliced by the plane
sum x_i = B.  Its vertices have at most one fractional coordinate,
which is exactly the shape a priority queue produces; pro-rata sits in
the interior instead.  That geometric split is what makes the queue
discontinuous under score perturbations.
"""

from __future__ import annotations

import numpy as np

from adl_lab.instability import perturbation_probe
from adl_lab.model import (
    RoundState,
    WinnerAccount,
    is_extreme_point,
    project_capped_simplex,
)
from adl_lab.policies import ScoredWinners, pro_rata_allocate, queue_allocate

state = RoundState(
    round_id=0,
    deficit=6.0,
    winners=(
        WinnerAccount(id="w1", capacity=4.0),
        WinnerAccount(id="w2", capacity=3.0),
        WinnerAccount(id="w3", capacity=5.0),
    ),
)
u = state.capacity_vector()
budget = 6.0

# Projection: drop an arbitrary point onto the polytope.
v = np.array([5.0, -1.0, 2.5])
x = project_capped_simplex(v, budget, u)
print(f"project {v} onto X({budget}, {u}):")
print(f"  -> {np.round(x, 6)}  (sum = {x.sum():.6f})")

# The queue lands on a vertex: whole capacities, then one partial fill.
scored = ScoredWinners.from_scores(state, {"w1": 3.0, "w2": 2.0, "w3": 1.0})
x_queue = queue_allocate(state, budget, scored).vector(state)
print(f"queue allocation    {x_queue}  vertex: {is_extreme_point(x_queue, budget, u)}")

# Pro-rata scales every capacity by B/U and stays interior.
x_pro = pro_rata_allocate(state, budget).vector(state)
print(f"pro-rata allocation {np.round(x_pro, 6)}  vertex: {is_extreme_point(x_pro, budget, u)}")

# Vertex-hopping has a price.  Nudge the top two scores by 1e-9 and the
# queue teleports the whole budget; pro-rata ignores scores entirely.
small_budget = 2.5
jump_queue = perturbation_probe(state, small_budget, [3.0, 2.0, 1.0], 1e-9)
jump_pro = perturbation_probe(
    state,
    small_budget,
    [3.0, 2.0, 1.0],
    1e-9,
    allocator=lambda s, b, scores: pro_rata_allocate(s, b),
)
print()
print(f"L1 jump after a 1e-9 score swap at B={small_budget}:")
print(f"  queue    {jump_queue}   (= 2B)")
print(f"  pro-rata {jump_pro}")

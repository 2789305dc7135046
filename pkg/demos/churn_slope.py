"""
Queue churn and the effective execution slope
=============================================

Unit-capacity winners alternate between a cheap book (slope a_min) and
an expensive one (slope a_max); fully haircut accounts leave the pool.
A queue burns through one account per round, so the mix it executes
against flips every round and the effective slope accumulates variation
(T-1)(a_max - a_min).  Pro-rata keeps executing the same blend and
accumulates none.
"""

from __future__ import annotations

from adl_lab.instability import churn_experiment

ALPHA_MIN, ALPHA_MAX = 0.0, 1.0

print("horizon   queue variation   pro-rata variation   (T-1)(a_max - a_min)")
for horizon in (2, 4, 8, 16, 32, 64):
    queue = churn_experiment(horizon, ALPHA_MIN, ALPHA_MAX, "queue")
    pro_rata = churn_experiment(horizon, ALPHA_MIN, ALPHA_MAX, "pro_rata")
    closed_form = (horizon - 1) * (ALPHA_MAX - ALPHA_MIN)
    print(
        f"{horizon:7d}   {queue.variation:15.6f}   {pro_rata.variation:18.6f}"
        f"   {closed_form:20.6f}"
    )

# The per-round slopes tell the story directly: the queue sees a
# square wave, pro-rata a flat line.
queue = churn_experiment(8, ALPHA_MIN, ALPHA_MAX, "queue")
pro_rata = churn_experiment(8, ALPHA_MIN, ALPHA_MAX, "pro_rata")
print()
print("effective slope per round at T=8:")
print(f"  queue    {[round(s, 3) for s in queue.effective_slopes]}")
print(f"  pro-rata {[round(s, 3) for s in pro_rata.effective_slopes]}")

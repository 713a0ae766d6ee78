"""Finite-horizon schedules on the bundled two-state plant.

Solves the scheduling problem for ten stages with the eavesdropper's
covariance known and unknown, prints the first-stage decision grids and
runs the threshold scans over every stage.

    python demos/01_threshold_tables.py
"""

import numpy as np

from covert_sched.belief_dp import solve_finite_partial
from covert_sched.model import Problem, load_model
from covert_sched.sched_dp import ObjectiveConfig, solve_finite_full
from covert_sched.structcheck import verify_full_solution, verify_partial_solution

model = load_model("paper.json")
problem = Problem.build(model, 40)
K = 10

for kind in ("covariance", "information"):
    obj = ObjectiveConfig(0.7, kind)
    full = solve_finite_full(model, problem.ladder, K, obj)
    # rows: estimator holding count n, columns: eavesdropper holding count n_e
    print(f"\n{kind} objective, beta=0.7, stage 1 decisions (rows n, cols n_e)")
    print(np.array2string(full.policy.stage(1), separator=""))
    print("known-eavesdropper scans:", "%d/%d pass" % verify_full_solution(full).summary)

    part = solve_finite_partial(model, problem.ladder, K, obj)
    print("unknown-eavesdropper scans:", "%d/%d pass" % verify_partial_solution(part).summary)
    print("expected cost from (Pbar, Pbar): known %.4f, unknown %.4f"
          % (full.values.at(1, 0, 0), part.value(1, 0)))

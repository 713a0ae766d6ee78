"""Why threshold policies need a scalar plant when raw measurements are sent.

With measurement transmission the last-stage decision compares
``tr g(P)`` against ``tr f(P)``. For scalar plants that gap is monotone in P,
so the optimal rule is a threshold. For the two-state plant below, a larger
covariance P2 >= P1 flips the decision from send to hold.

    python demos/04_measurement_counterexample.py
"""

import numpy as np

from covert_sched.meas_tx import final_stage_scan, scalar_threshold_check, solve_finite_full_meas
from covert_sched.model import SystemModel, load_model, riccati_predict, steady_state_filter

model = load_model("paper_meas.json")
P1 = steady_state_filter(model).P_bar_plus
P2 = np.array([[6.4, 4.5], [4.5, 6.3]])
print("P2 - P1 eigenvalues:", np.linalg.eigvalsh(P2 - P1).round(4))

report, costs = final_stage_scan(model, [P1, P2], riccati_predict(P1, model), beta=0.73)
for name, (hold, send) in zip(("P1", "P2"), costs):
    print(f"{name}: hold {hold:.4f}  send {send:.4f}  -> {'send' if send < hold else 'hold'}")
print(report.to_csv())

scalar = SystemModel([[1.2]], [[1.0]], [[1.0]], [[1.0]], 0.6, 0.6)
sol = solve_finite_full_meas(scalar, 8, 0.7)
ok = all(scalar_threshold_check(sol, k, axis).ok for k in range(1, 9) for axis in ("P", "Pe"))
print("scalar plant, 8 stages: all threshold scans pass:", ok)

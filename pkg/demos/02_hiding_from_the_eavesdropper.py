"""Keeping the estimator bounded while the eavesdropper's error blows up.

A threshold policy transmits only after t consecutive misses at the remote
estimator. For t at or above ``min_t_for_unbounded`` the eavesdropper's mean
error covariance diverges, while the estimator's stays finite. The run
lengths here are short, and the eavesdropper column is heavy-tailed enough that
neighbouring rows can even come out of order; ``covert-sched reproduce table1``
does 10^6 steps.

    python demos/02_hiding_from_the_eavesdropper.py
"""

from covert_sched.horizon_inf import leakage_bounds, min_t_for_unbounded
from covert_sched.model import Problem, load_model, stability_threshold
from covert_sched.simkit import SimConfig, Threshold, simulate

base = load_model("paper.json")
print(f"estimator bounded under always-transmit iff lambda > {stability_threshold(base):.4f}")

for lam_e in (0.6, 0.8):
    model = base.with_channels(lam_e=lam_e)
    problem = Problem.build(model, 60)
    t_min = min_t_for_unbounded(model)
    print(f"\nlambda_e={lam_e}: eavesdropper mean error unbounded for t >= {t_min}")
    print("  t   mean trP    mean trPe")
    for t in range(1, 7):
        rec = simulate(model, problem.ladder, SimConfig(100_000, 0, Threshold(t)))
        print(f"  {t}  {rec.mean_trP:9.3f}  {rec.mean_trPe:11.4g}")

# information leaks at a nonzero rate no matter what: every interception
# reveals at least a fixed amount on average
model = base
lb = leakage_bounds(model, Problem.build(model, 10).steady)
print(f"\nper-step log-det growth lies in [{lb.delta_L:.4f}, {lb.delta_U:.4f}]")
print(f"any bounded-estimator policy leaks more than {0.5 * model.lam_e * lb.delta_L:.4f} nats per step")

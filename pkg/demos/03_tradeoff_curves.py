"""Estimation quality against secrecy as the weight beta varies.

Exact expectations for the ten-stage problem (no sampling noise), with the
eavesdropper's state known and unknown. The known curve is never worse.

    python demos/03_tradeoff_curves.py
"""

from covert_sched.model import Problem, load_model
from covert_sched.simkit import sweep_beta

model = load_model("paper.json")
problem = Problem.build(model, 40)
betas = [0.1, 0.3, 0.5, 0.7, 0.9]

for kind, stat in (("covariance", "mean_trPe"), ("information", "mean_Ie")):
    print(f"\n{kind} objective, K=10")
    print(" beta   known: trP   %-9s   unknown: trP   %s" % (stat, stat))
    known = sweep_beta(model, 10, kind, "full", betas, 0, problem=problem, exact=True)
    blind = sweep_beta(model, 10, kind, "partial", betas, 0, problem=problem, exact=True)
    for a, b in zip(known, blind):
        print(f" {a.beta:.1f}   {a.mean_trP:11.4f}  {getattr(a, stat):9.4f}"
              f"   {b.mean_trP:13.4f}  {getattr(b, stat):9.4f}")

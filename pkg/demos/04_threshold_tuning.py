"""
Choosing the Picky radius from a pilot run
==========================================

Instead of the theory value eps/(2 beta), log the distances |x - x'| seen
by plain SGD on a pilot run and take a high percentile.
"""
import numpy as np

from delaylab.metrics import pilot_distances, recommend_threshold, sweep
from delaylab.objectives import LogSquareObjective, NoisyGradientOracle
from delaylab.optim import PickyConfig, Policy, threshold_nonconvex
from delaylab.schedule import preset

obj = LogSquareObjective(10)
oracle = NoisyGradientOracle(obj, 0.1)
sched = preset("D", 3000, seed=2)
x1 = np.full(10, 0.8)
eta = 0.1

dists = pilot_distances(sched, Policy.sgd(eta), obj, oracle, x1)
for q in (0.5, 0.9, 0.99):
    print(f"p{q * 100:g} distance: {recommend_threshold(dists, q).recommended_threshold:.4f}")

# Plain SGD wanders far once ancient gradients land, so its high
# percentiles are large; a pilot with a tighter policy gives a tighter radius.
tuned = recommend_threshold(dists, 0.99).recommended_threshold
theory = threshold_nonconvex(obj.beta, 0.2)
for label, thr in (("theory", theory), ("tuned", tuned)):
    res = sweep(range(1, 6), sched, Policy.picky(PickyConfig(eta, thr)), obj, oracle, x1, 0.2,
                drain_tail=True)
    print(f"{label:6s} threshold={thr:.4f} success={res.success_rate} "
          f"median steps={res.median_first_hit}")

picky_dists = pilot_distances(sched, Policy.picky(PickyConfig(eta, theory)), obj, oracle, x1)
print("p99 under a Picky pilot:", round(recommend_threshold(picky_dists, 0.99).recommended_threshold, 4))

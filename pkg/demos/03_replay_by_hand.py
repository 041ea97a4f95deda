"""
The replay engine, by hand
==========================

Three pairs, identity quadratic, no noise.  The engine applies stage S only
once it has caught up to the next compute-stage, so the last gradient is
left pending unless the tail is drained.
"""
import numpy as np

from delaylab.objectives import NoisyGradientOracle, QuadraticObjective
from delaylab.optim import PickyConfig, Policy, run_single_worker
from delaylab.replay import replay
from delaylab.schedule import from_pairs, zero_delay_schedule

obj = QuadraticObjective(np.eye(2))
oracle = NoisyGradientOracle(obj)
x1 = np.array([1.0, -2.0])
sched = from_pairs([(0, 0), (0, 1), (1, 2)])

def show(step, X, xs, g, dec):
    print(f"  stage {step - 1}: x={X} gradient taken at {xs} -> {dec.new_iterate}")

print("default (tail left pending):")
rec = replay(sched, Policy.sgd(0.25), obj, oracle, x1, trace=show)
print("  final", rec.final_iterate)

print("drained:")
rec = replay(sched, Policy.sgd(0.25), obj, oracle, x1, drain_tail=True, trace=show)
print("  final", rec.final_iterate, "expected", 0.3125 * x1)

# A single worker talking to a parameter server never sees a stale
# iterate, so its trajectory is the zero-delay replay, bit for bit.
noisy = NoisyGradientOracle(obj, 0.3, seed=4)
cfg = PickyConfig(0.1, 0.05)
history, server = run_single_worker(cfg, noisy, x1, 50)
visited = []
rec = replay(zero_delay_schedule(50), Policy.picky(cfg), obj, noisy, x1, drain_tail=True,
             trace=lambda s, X, *_: visited.append(X))
visited.append(rec.final_iterate)
print("worker protocol == replay:", np.array(visited).tobytes() == history.tobytes())

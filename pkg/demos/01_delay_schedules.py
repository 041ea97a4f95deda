"""
Delay schedules
===============

A schedule lists, for every applied gradient, the stage at which it was
computed (r) and the stage at which it was applied (w).  The generator
simulates n workers in virtual time, so a schedule is a pure function of
(n, T, wait distribution, seed).
"""
import numpy as np

from delaylab.schedule import PRESETS, preset, schedule_stats, validate_schedule

# The first pairs of a ten-worker run: early gradients are computed at
# stage 0 and trickle in as workers finish.
s = preset("A", 20, seed=1)
print("first pairs:", s.pairs()[:8])
print("delays:     ", s.delays[:8].tolist())

# Presets B, C and D share roughly the same average delay, but a shrinking
# fraction of slow workers waits longer and longer.
for name in "ABCD":
    s = preset(name, 50_000, seed=1)
    st = schedule_stats(s)
    assert validate_schedule(s) is None
    print(f"{name}: n={PRESETS[name][0]:3d} tau_avg={st.tau_avg:6.2f} tau_max={st.tau_max:5d} "
          f"p99.9={st.percentiles['p999']:5d} var={st.variance:9.1f}")

# The far tail is what separates them.  Moderate delays are actually a
# little rarer in D; delays beyond a thousand steps are far more common.
for name in "BCD":
    d = preset(name, 50_000, seed=1).delays
    print(name, " ".join(f"P[d>{k}]={np.mean(d > k):.4f}" for k in (500, 1000, 2000)))

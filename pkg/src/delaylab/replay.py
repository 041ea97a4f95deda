"""Deterministic sequential replay of a delay schedule.

The engine walks the sorted pairs ``(r, w)``.  Before handling a pair it
catches up: every stage ``S < r`` is applied through the policy using the
gradient that was computed at stage ``F[S]``.  It then samples a gradient
at the current iterate (noise keyed on ``r``) and files it for stage ``w``.

Row ``t`` (1-based) of a :class:`RunRecord` describes the visited iterate
``x_t`` and the step that maps it to ``x_{t+1}``.
"""
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .schedule import _atomic_write, validate_schedule


class InvalidSchedule(ValueError):
    pass


class ReplayFault(RuntimeError):
    """Engine bookkeeping is inconsistent with the schedule."""


@dataclass(eq=False)
class ReplayState:
    stage: int
    iterate: np.ndarray
    pending: dict = field(default_factory=dict)
    apply_map: dict = field(default_factory=dict)


@dataclass(eq=False)
class RunRecord:
    t: np.ndarray
    delay: np.ndarray
    accepted: np.ndarray
    grad_norm: np.ndarray
    f: np.ndarray
    eta: np.ndarray
    distance: np.ndarray
    final_iterate: np.ndarray
    initial_value: float
    schedule_steps: int
    wall_time: float = 0.0

    @property
    def num_steps(self):
        return len(self.t)

    @property
    def updates(self):
        return int(self.accepted.sum())

    def summary(self):
        T = self.num_steps
        has_norms = T > 0 and not np.all(np.isnan(self.grad_norm))
        if has_norms:
            i = int(np.nanargmin(self.grad_norm))
            min_norm, argmin = float(self.grad_norm[i]), int(self.t[i])
        else:
            min_norm, argmin = None, None
        return {
            "T": T,
            "schedule_T": self.schedule_steps,
            "tau_avg": float(self.delay.mean()) if T else 0.0,
            "tau_max": int(self.delay.max()) if T else 0,
            "updates": self.updates,
            "min_grad_norm": min_norm,
            "argmin_step": argmin,
            "F": self.initial_value,
            "wall_time": self.wall_time,
        }

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,d,accepted,grad_norm,f,eta\n")
        for row in zip(
            self.t.tolist(),
            self.delay.tolist(),
            self.accepted.tolist(),
            self.grad_norm.tolist(),
            self.f.tolist(),
            self.eta.tolist(),
        ):
            t, d, a, g, fv, e = row
            buf.write(f"{t},{d},{int(a)},{g!r},{fv!r},{e!r}\n")
        return buf.getvalue()

    def content_hash(self):
        """SHA-256 over the trajectory; excludes wall time."""
        h = hashlib.sha256()
        for arr in (self.t, self.delay, self.accepted, self.grad_norm, self.f, self.eta, self.distance):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.ascontiguousarray(self.final_iterate).tobytes())
        h.update(repr(self.initial_value).encode())
        return h.hexdigest()

    def write(self, directory, prefix="run", extra=None):
        os.makedirs(directory, exist_ok=True)
        summary = self.summary()
        summary["hash"] = self.content_hash()
        if extra:
            summary.update(extra)
        _atomic_write(os.path.join(directory, f"{prefix}_trajectory.csv"), self.to_csv())
        _atomic_write(
            os.path.join(directory, f"{prefix}_summary.json"),
            json.dumps(summary, indent=2, sort_keys=True) + "\n",
        )
        _atomic_write(os.path.join(directory, f"{prefix}_hash.txt"), summary["hash"] + "\n")
        return summary


def replay(
    schedule,
    policy,
    objective,
    oracle,
    x1,
    record_exact=True,
    drain_tail=False,
    trace=None,
):
    """Run ``policy`` over ``schedule`` and return a :class:`RunRecord`.

    By default gradients whose apply-stage lies beyond the last catch-up
    point are left unapplied; ``drain_tail=True`` applies them in stage order
    so the run has exactly ``T`` steps.  ``trace(step, x_t, x_stale, g,
    decision)`` is called for every applied step.
    """
    violation = validate_schedule(schedule)
    if violation is not None:
        raise InvalidSchedule(str(violation))
    x1 = np.array(x1, dtype=np.float64)
    if x1.shape != (objective.dim,) or not np.all(np.isfinite(x1)):
        raise ValueError("x1 must be a finite point of the objective's dimension")

    T = schedule.num_steps
    r_list = schedule.r.tolist()
    w_list = schedule.w.tolist()
    noise = oracle.noise_block(schedule.r) if oracle.sigma > 0 else None
    grad_fn = objective._gradient
    value_fn = objective._value

    delay = np.zeros(T, dtype=np.int64)
    accepted = np.zeros(T, dtype=bool)
    grad_norm = np.full(T, np.nan)
    fvals = np.full(T, np.nan)
    etas = np.zeros(T)
    dists = np.zeros(T)

    state = ReplayState(0, x1)
    G, F = state.pending, state.apply_map
    X = x1
    S = 0
    started = time.perf_counter()

    def apply_stage(S, X):
        key = (F.get(S), S)
        entry = G.pop(key, None)
        if entry is None:
            raise ReplayFault(f"no pending gradient for stage {S} (key {key})")
        g, xs = entry
        if record_exact:
            gx = grad_fn(X)
            grad_norm[S] = math.sqrt(float(gx @ gx))
            fvals[S] = value_fn(X)
        dec = policy.apply(S, X, xs, g)
        if trace is not None:
            trace(S + 1, X, xs, g, dec)
        delay[S] = S - key[0]
        accepted[S] = dec.accepted
        etas[S] = policy.rate(S)
        dists[S] = dec.distance
        return dec.new_iterate

    # a diverging baseline produces inf/nan iterates; that is data, not an error
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(T):
            r, w = r_list[i], w_list[i]
            F[w] = r
            while S < r:
                X = apply_stage(S, X)
                S += 1
            g = grad_fn(X)
            if noise is not None:
                g = g + noise[i]
            G[(S, w)] = (g, X)
        if drain_tail:
            while S < T:
                X = apply_stage(S, X)
                S += 1
    state.stage, state.iterate = S, X

    n = S
    return RunRecord(
        t=np.arange(1, n + 1, dtype=np.int64),
        delay=delay[:n],
        accepted=accepted[:n],
        grad_norm=grad_norm[:n],
        f=fvals[:n],
        eta=etas[:n],
        distance=dists[:n],
        final_iterate=X,
        initial_value=float(value_fn(x1)),
        schedule_steps=T,
        wall_time=time.perf_counter() - started,
    )


def applied_delays(schedule, drain_tail=False):
    """Delays of the steps a replay applies, in stage order.

    Without tail draining the engine stops at the last compute-stage.
    """
    d = schedule.delays[np.argsort(schedule.w, kind="stable")]
    return d if drain_tail else d[: int(schedule.r[-1])]


@dataclass(eq=False)
class TargetResult:
    success: bool
    first_hit_step: int
    record: RunRecord


def hits(record, eps, variant, objective):
    """Boolean mask of visited iterates meeting the accuracy target."""
    if variant == "convex":
        f_star = objective.optimum_value()
        if f_star is None:
            raise ValueError("convex target needs an objective with a known optimum")
        return record.f - f_star <= eps
    if variant != "nonconvex":
        raise ValueError(f"unknown variant {variant!r}")
    return record.grad_norm <= eps


def run_to_target(schedule, policy, objective, oracle, x1, eps, variant="nonconvex", drain_tail=False):
    """Replay to the end and report the first visited iterate within ``eps``.

    Nonconvex: exact gradient norm at most ``eps``.  Convex: optimality gap
    at most ``eps``.  Detection is observational and never stops the run.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if variant == "convex" and objective.optimum_value() is None:
        raise ValueError("convex target needs an objective with a known optimum")
    record = replay(schedule, policy, objective, oracle, x1, record_exact=True, drain_tail=drain_tail)
    mask = hits(record, eps, variant, objective)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return TargetResult(False, None, record)
    return TargetResult(True, int(record.t[idx[0]]), record)


def restart_runner(k_restarts, base_seed, schedule, policy, objective, oracle, x1, eps,
                   variant="nonconvex", drain_tail=False):
    """True iff any of ``k_restarts`` independent runs hits the target.

    Restart ``i`` starts again from ``x1`` with noise seed ``base_seed + i``.
    Stops at the first success since the outcome is a disjunction.
    """
    if k_restarts < 1:
        raise ValueError("k_restarts must be at least 1")
    for i in range(k_restarts):
        res = run_to_target(
            schedule, policy, objective, oracle.with_seed(base_seed + i), x1, eps, variant, drain_tail
        )
        if res.success:
            return True
    return False


def update_count_bound(record):
    """``(k, bound)`` with ``bound = T / (4 (tau_avg + 1))`` over the applied steps."""
    T = record.num_steps
    tau = float(record.delay.mean()) if T else 0.0
    return record.updates, T / (4.0 * (tau + 1.0))


def check_update_count(record):
    """Whether the accepted-update count satisfies the lower bound.

    For a run with no delays at all every step must be accepted.
    """
    k, bound = update_count_bound(record)
    if record.num_steps and not np.any(record.delay):
        return k == record.num_steps
    return k >= bound

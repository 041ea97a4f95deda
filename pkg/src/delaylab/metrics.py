"""Seed sweeps, policy comparisons, threshold tuning and property oracles."""
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .objectives import NoisyGradientOracle
from .replay import applied_delays, replay, run_to_target
from .schedule import nearest_rank


@dataclass(frozen=True)
class SeedRow:
    seed: int
    success: bool
    first_hit_step: int = None
    updates: int = None
    min_grad_norm: float = None
    error: str = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    tau_avg: float
    tau_max: int

    @property
    def success_rate(self):
        return sum(r.success for r in self.rows) / len(self.rows)

    @property
    def median_first_hit(self):
        hits = [r.first_hit_step for r in self.rows if r.success]
        return statistics.median(hits) if hits else None

    def aggregate(self):
        return {
            "seeds": len(self.rows),
            "successes": sum(r.success for r in self.rows),
            "success_rate": self.success_rate,
            "median_first_hit_step": self.median_first_hit,
            "tau_avg": self.tau_avg,
            "tau_max": self.tau_max,
            "errors": sum(r.error is not None for r in self.rows),
        }

    def to_json(self):
        return json.dumps(
            {"aggregate": self.aggregate(), "rows": [asdict(r) for r in self.rows]},
            indent=2,
            sort_keys=True,
        ) + "\n"

    def rows_csv(self):
        buf = io.StringIO()
        buf.write("seed,success,first_hit_step,updates,min_grad_norm,error\n")
        for r in self.rows:
            fields = [r.seed, int(r.success), r.first_hit_step, r.updates, r.min_grad_norm, r.error]
            buf.write(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in fields))
            buf.write("\n")
        return buf.getvalue()


def _run_seed(seed, schedule, policy, objective, oracle, x1, eps, variant, drain_tail):
    try:
        res = run_to_target(schedule, policy, objective, oracle.with_seed(seed), x1, eps, variant, drain_tail)
    except Exception as exc:  # per-seed faults are reported, not raised
        return SeedRow(seed, False, error=f"{type(exc).__name__}: {exc}")
    summ = res.record.summary()
    return SeedRow(seed, res.success, res.first_hit_step, summ["updates"], summ["min_grad_norm"])


def sweep(seeds, schedule, policy, objective, oracle, x1, eps, variant="nonconvex",
          drain_tail=False, max_workers=None):
    """Run :func:`run_to_target` once per noise seed; rows come back in seed order."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    args = (schedule, policy, objective, oracle, x1, eps, variant, drain_tail)
    if max_workers and max_workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(_run_seed, seeds, *[[a] * len(seeds) for a in args]))
    else:
        rows = [_run_seed(s, *args) for s in seeds]
    d = applied_delays(schedule, drain_tail)
    if len(d) == 0:
        return SweepResult(tuple(rows), 0.0, 0)
    return SweepResult(tuple(rows), float(np.mean(d)), int(np.max(d)))


@dataclass(frozen=True)
class ThresholdRecommendation:
    percentile: float
    recommended_threshold: float
    sample_count: int


def recommend_threshold(distances, percentile=0.99):
    """Nearest-rank order statistic of logged distances ``|x - x'|``."""
    values = sorted(float(v) for v in distances)
    if not values:
        raise ValueError("no distances to choose a threshold from")
    if not 0 < percentile <= 1:
        raise ValueError("percentile must lie in (0, 1]")
    return ThresholdRecommendation(percentile, nearest_rank(values, percentile), len(values))


def pilot_distances(schedule, policy, objective, oracle, x1):
    """Distances between current and stale iterates over a seed-0 pilot run."""
    rec = replay(schedule, policy, objective, oracle.with_seed(0), x1, record_exact=False)
    return rec.distance


@dataclass(frozen=True)
class ComparisonRow:
    schedule: str
    policy: str
    success_rate: float
    median_first_hit_step: float
    tau_avg: float
    tau_max: int


def compare_policies(schedules, policies, objective, oracle, seeds, x1, eps,
                     variant="nonconvex", drain_tail=False, max_workers=None):
    """Sweep every (schedule, policy) pair.

    ``schedules`` and ``policies`` are mappings from a label to the object
    (plain lists are labelled by position).
    """
    if not isinstance(schedules, dict):
        schedules = {str(i): s for i, s in enumerate(schedules)}
    if not isinstance(policies, dict):
        policies = {f"{i}:{p.name}": p for i, p in enumerate(policies)}
    if not schedules or not policies:
        raise ValueError("need at least one schedule and one policy")
    rows = []
    sweeps = {}
    for sname, sched in schedules.items():
        for pname, pol in policies.items():
            res = sweep(seeds, sched, pol, objective, oracle, x1, eps, variant, drain_tail, max_workers)
            sweeps[(sname, pname)] = res
            rows.append(ComparisonRow(sname, pname, res.success_rate, res.median_first_hit,
                                      res.tau_avg, res.tau_max))
    return rows, sweeps


def comparison_csv(rows):
    buf = io.StringIO()
    buf.write("schedule,policy,success_rate,median_first_hit_step,tau_avg,tau_max\n")
    for r in rows:
        med = "" if r.median_first_hit_step is None else repr(float(r.median_first_hit_step))
        buf.write(f"{r.schedule},{r.policy},{r.success_rate!r},{med},{r.tau_avg!r},{r.tau_max}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class DescentCheck:
    mean_decrease: float
    std_error: float
    bound: float
    ok: bool


def descent_check(objective, x, x_prime, eta, sigma, n_draws=10_000, seed=0):
    """Monte-Carlo check that a step with a nearby gradient decreases ``f``.

    Estimates ``E[f(x) - f(x - eta (grad f(x') + N))]`` with
    ``E|N|^2 = sigma^2`` and compares it against ``(eta/4) |grad f(x')|^2``
    with a slack of three standard errors.
    """
    x = np.asarray(x, dtype=np.float64)
    g = objective.gradient(x_prime)
    noise = NoisyGradientOracle(objective, sigma, seed).noise_block(np.arange(n_draws))
    points = x - eta * (g + noise)
    fx = objective.value(x)
    dec = fx - objective.value_batch(points)
    mean = float(dec.mean())
    se = float(dec.std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else 0.0
    bound = 0.25 * eta * float(g @ g)
    return DescentCheck(mean, se, bound, mean >= bound - 3.0 * se)


def sample_descent_pair(objective, eps, generator, box=5.0, max_tries=10_000):
    """Random ``(x, x')`` with ``|x - x'| <= eps/(2 beta)`` and ``|grad f(x')| > eps``."""
    radius = eps / (2.0 * objective.beta)
    for _ in range(max_tries):
        xp = generator.uniform(-box, box, objective.dim)
        if np.linalg.norm(objective.gradient(xp)) <= eps:
            continue
        u = generator.normal(size=objective.dim)
        u *= radius * generator.uniform() / np.linalg.norm(u)
        return xp + u, xp
    raise RuntimeError("could not find a point with a large enough gradient")

"""Delay schedules: generation by discrete-event simulation, validation, stats.

A schedule is the sorted list of pairs ``(r, w)``: the gradient applied at
stage ``w`` was computed when the shared stage counter read ``r``.  The
generator replaces the threaded workers of a real parameter server with a
virtual-time event queue so the result is a pure function of its inputs.

Event semantics, per worker::

    take a task; r <- S
    wait t1 ~ wait distribution                  (gradient computation)
    w <- S; S <- S + 1                            (atomic, zero duration)
    wait t2 = second_wait_scale * fresh draw      (gradient update)
    emit (r, w); repeat while tasks remain

Events at the same virtual time run in worker-index order; a worker's
zero-duration chain completes before the next worker acts.
"""
import heapq
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import rng


@dataclass(frozen=True)
class WaitDistribution:
    """Mixture ``scale_k * Poisson(lam)`` chosen with probability ``weight_k``.

    With ``base="constant"`` every base draw equals ``lam`` exactly, which
    gives deterministic waits for hand-checkable schedules.
    """

    components: tuple = ((1.0, 1.0),)
    lam: float = 4.06
    second_wait_scale: float = 0.2
    base: str = "poisson"

    def __post_init__(self):
        comps = tuple((float(p), float(s)) for p, s in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(p < 0 for p, _ in comps) or abs(sum(p for p, _ in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if any(s <= 0 for _, s in comps):
            raise ValueError("mixture scales must be positive")
        if self.lam < 0 or self.second_wait_scale < 0:
            raise ValueError("lam and second_wait_scale must be nonnegative")
        if self.base not in ("poisson", "constant"):
            raise ValueError(f"unknown base distribution {self.base!r}")

    @classmethod
    def constant(cls, value=1.0, second_wait_scale=1.0):
        return cls(((1.0, 1.0),), value, second_wait_scale, "constant")

    def mean(self):
        return self.lam * sum(p * s for p, s in self.components)

    def to_json(self):
        d = {
            "mixture": [list(c) for c in self.components],
            "lambda": self.lam,
            "second_wait_scale": self.second_wait_scale,
        }
        if self.base != "poisson":
            d["base"] = self.base
        return d

    @classmethod
    def from_json(cls, d):
        return cls(
            tuple(tuple(c) for c in d["mixture"]),
            float(d["lambda"]),
            float(d["second_wait_scale"]),
            d.get("base", "poisson"),
        )


class _WaitSampler:
    """Draws waits for one worker; draw ``(iteration, phase)`` is keyed, not sequential."""

    def __init__(self, wait, seed, worker):
        self.stream = rng.KeyedStream(seed, rng.STREAM_WAIT, worker)
        self.scales = [s for _, s in wait.components]
        self.cum = list(np.cumsum([p for p, _ in wait.components]))
        self.cum[-1] = 1.0
        self.base = wait.base
        self.lam = wait.lam
        self.table = rng.poisson_cdf_table(wait.lam) if wait.base == "poisson" else None
        self.second = wait.second_wait_scale

    def draw(self, iteration, phase):
        if len(self.scales) == 1:
            scale = self.scales[0]
        else:
            u = self.stream.uniform(iteration, phase, 0)
            k = 0
            while u >= self.cum[k] and k < len(self.cum) - 1:
                k += 1
            scale = self.scales[k]
        if self.base == "constant":
            base = self.lam
        else:
            base = rng.poisson_inverse(self.stream.uniform(iteration, phase, 1), self.table)
        t = scale * base
        return t * self.second if phase == 1 else t


@dataclass(frozen=True, eq=False)
class DelaySchedule:
    r: np.ndarray
    w: np.ndarray
    n_workers: int = 1
    wait: WaitDistribution = None
    seed: int = 0
    workers: np.ndarray = field(default=None, repr=False)

    @property
    def num_steps(self):
        return len(self.w)

    @property
    def delays(self):
        return self.w - self.r

    def pairs(self):
        return list(zip(self.r.tolist(), self.w.tolist()))

    def metadata(self):
        d = {"n_workers": self.n_workers, "seed": self.seed, "T": self.num_steps}
        if self.wait is not None:
            d.update(self.wait.to_json())
        return d

    def __eq__(self, other):
        if not isinstance(other, DelaySchedule):
            return NotImplemented
        return (
            np.array_equal(self.r, other.r)
            and np.array_equal(self.w, other.w)
            and self.metadata() == other.metadata()
        )


def from_pairs(pairs, n_workers=1, wait=None, seed=0, sort=True):
    """Schedule from explicit pairs; sorted lexicographically unless ``sort=False``."""
    pairs = [(int(r), int(w)) for r, w in pairs]
    if sort:
        pairs.sort()
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return DelaySchedule(arr[:, 0].copy(), arr[:, 1].copy(), n_workers, wait, seed)


def zero_delay_schedule(num_steps):
    w = np.arange(num_steps, dtype=np.int64)
    return DelaySchedule(w.copy(), w, 1, None, 0)


_START, _COMMIT, _FINISH = 0, 1, 2


def generate_schedule(n_workers, num_steps, wait, seed):
    if n_workers < 1:
        raise ValueError("n_workers must be at least 1")
    if num_steps < 1:
        raise ValueError("num_steps must be at least 1")
    samplers = [_WaitSampler(wait, seed, i) for i in range(n_workers)]
    remaining = num_steps
    stage = 0
    r_of = [0] * n_workers
    w_of = [0] * n_workers
    iteration = [0] * n_workers
    phase = [_START] * n_workers
    out_r, out_w, out_worker = [], [], []
    # one pending event per worker, so (time, worker) is a total order
    heap = [(0.0, i) for i in range(n_workers)]
    while heap:
        now, i = heapq.heappop(heap)
        if phase[i] == _COMMIT:
            w_of[i] = stage
            stage += 1
            phase[i] = _FINISH
            heapq.heappush(heap, (now + samplers[i].draw(iteration[i], 1), i))
            continue
        if phase[i] == _FINISH:
            out_r.append(r_of[i])
            out_w.append(w_of[i])
            out_worker.append(i)
            iteration[i] += 1
        if remaining == 0:
            continue
        remaining -= 1
        r_of[i] = stage
        phase[i] = _COMMIT
        heapq.heappush(heap, (now + samplers[i].draw(iteration[i], 0), i))

    r = np.array(out_r, dtype=np.int64)
    w = np.array(out_w, dtype=np.int64)
    order = np.lexsort((w, r))
    return DelaySchedule(
        r[order], w[order], n_workers, wait, seed, np.array(out_worker, dtype=np.int64)[order]
    )


PRESETS = {
    "A": (10, ((1.0, 1.0),)),
    "B": (75, ((0.92, 1.0), (0.08, 150.0))),
    "C": (75, ((0.935, 1.0), (0.065, 240.0))),
    "D": (75, ((0.95, 1.0), (0.05, 330.0))),
}
POISSON_RATE = 4.06
SECOND_WAIT_SCALE = 0.2


def preset_wait(name):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    _, comps = PRESETS[name]
    return WaitDistribution(comps, POISSON_RATE, SECOND_WAIT_SCALE)


def preset(name, num_steps, seed):
    wait = preset_wait(name)
    return generate_schedule(PRESETS[name][0], num_steps, wait, seed)


@dataclass(frozen=True)
class ScheduleViolation:
    kind: str
    index: int
    message: str

    def __str__(self):
        return f"{self.kind} at pair {self.index}: {self.message}"


def validate_schedule(s):
    """``None`` if valid, else the first :class:`ScheduleViolation`."""
    r, w = np.asarray(s.r), np.asarray(s.w)
    T = len(w)
    if len(r) != T:
        return ScheduleViolation("shape", 0, "r and w lengths differ")
    if T == 0:
        return ScheduleViolation("empty", 0, "schedule has no pairs")
    seen = np.zeros(T, dtype=bool)
    prev = None
    for i, (ri, wi) in enumerate(zip(r.tolist(), w.tolist())):
        if ri < 0:
            return ScheduleViolation("negative compute-stage", i, f"r={ri}")
        if ri > wi:
            return ScheduleViolation("r > w", i, f"r={ri} exceeds w={wi}")
        if wi >= T:
            return ScheduleViolation("apply-stage out of range", i, f"w={wi} >= T={T}")
        if seen[wi]:
            return ScheduleViolation("duplicate apply-stage", i, f"w={wi} appears twice")
        seen[wi] = True
        if prev is not None and (ri, wi) < prev:
            return ScheduleViolation("unsorted", i, f"({ri},{wi}) follows {prev}")
        prev = (ri, wi)
    # T distinct values in [0, T) cover every stage
    return None


@dataclass(frozen=True)
class ScheduleStats:
    tau_avg: float
    tau_max: int
    variance: float
    histogram: dict
    percentiles: dict
    num_steps: int


def nearest_rank(sorted_values, q):
    n = len(sorted_values)
    k = max(1, math.ceil(q * n - 1e-12))
    return sorted_values[min(k, n) - 1]


def delay_stats(delays):
    d = np.asarray(delays, dtype=np.int64)
    values, counts = np.unique(d, return_counts=True)
    srt = np.sort(d)
    return ScheduleStats(
        tau_avg=float(d.mean()),
        tau_max=int(d.max()),
        variance=float(d.var()),
        histogram=dict(zip(values.tolist(), counts.tolist())),
        percentiles={
            name: int(nearest_rank(srt, q))
            for name, q in (("p50", 0.5), ("p90", 0.9), ("p99", 0.99), ("p999", 0.999))
        },
        num_steps=len(d),
    )


def schedule_stats(s):
    return delay_stats(s.delays)


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_schedule(s):
    lines = [json.dumps(s.metadata(), sort_keys=True)]
    lines.extend(f"{r},{w}" for r, w in zip(s.r.tolist(), s.w.tolist()))
    return "\n".join(lines) + "\n"


def write_schedule(path, s):
    _atomic_write(path, dumps_schedule(s))


def read_schedule(path):
    """Load a JSONL schedule file.  Pairs are kept in file order, unvalidated."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        pairs = []
        for line in fh:
            line = line.strip()
            if line:
                a, b = line.split(",")
                pairs.append((int(a), int(b)))
    wait = WaitDistribution.from_json(header) if "mixture" in header else None
    s = from_pairs(pairs, header.get("n_workers", 1), wait, header.get("seed", 0), sort=False)
    if "T" in header and header["T"] != s.num_steps:
        raise ValueError(f"header declares T={header['T']} but file has {s.num_steps} pairs")
    return s


def histogram_csv(stats):
    rows = ["delay,count"]
    rows.extend(f"{k},{v}" for k, v in sorted(stats.histogram.items()))
    return "\n".join(rows) + "\n"


def write_histogram(path, stats):
    _atomic_write(path, histogram_csv(stats))

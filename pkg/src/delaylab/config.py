"""JSON experiment configs.

A config names an objective (with its noise level and seed), a start point,
one or more schedule sources and one or more policies.  Canonical
serialization is sorted-key JSON, so ``dumps(loads(text))`` is stable.
"""
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import schedule as sched
from .objectives import objective_from_descriptor
from .optim import Policy

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def load_schedule(source, base_dir="."):
    """Resolve a schedule source dict into a :class:`DelaySchedule`."""
    if "path" in source:
        path = source["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return sched.read_schedule(path)
    steps = int(source["steps"])
    seed = int(source.get("seed", 0))
    if source.get("zero_delay"):
        return sched.zero_delay_schedule(steps)
    if "preset" in source:
        return sched.preset(source["preset"], steps, seed)
    if "workers" in source:
        wait = sched.WaitDistribution(
            tuple(tuple(c) for c in source.get("mixture", [[1.0, 1.0]])),
            float(source.get("lambda", sched.POISSON_RATE)),
            float(source.get("second_wait_scale", sched.SECOND_WAIT_SCALE)),
            source.get("base", "poisson"),
        )
        return sched.generate_schedule(int(source["workers"]), steps, wait, seed)
    raise ConfigError(f"cannot resolve schedule source {source!r}")


def schedule_label(source):
    if "label" in source:
        return source["label"]
    if "preset" in source:
        return source["preset"]
    if "path" in source:
        return source["path"]
    if source.get("zero_delay"):
        return "zero"
    return f"n{source.get('workers')}"


@dataclass
class ExperimentConfig:
    objective: dict
    x1: list
    schedules: list
    policies: list
    eps: float = None
    variant: str = "nonconvex"
    seeds: list = field(default_factory=lambda: [0])
    drain_tail: bool = False
    out: str = "out"
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        try:
            schedules = d["schedules"] if "schedules" in d else [d["schedule"]]
            policies = d["policies"] if "policies" in d else [d["policy"]]
            cfg = cls(
                objective=dict(d["objective"]),
                x1=[float(v) for v in d["x1"]],
                schedules=[dict(s) for s in schedules],
                policies=[dict(p) for p in policies],
                eps=None if d.get("eps") is None else float(d["eps"]),
                variant=d.get("variant", "nonconvex"),
                seeds=[int(s) for s in d.get("seeds", [0])],
                drain_tail=bool(d.get("drain_tail", False)),
                out=d.get("out", "out"),
                schema_version=version,
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.check()
        return cfg

    def check(self):
        if self.variant not in ("nonconvex", "convex"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.schedules or not self.policies:
            raise ConfigError("need at least one schedule and one policy")
        try:
            obj, _ = self.build_objective()
            for p in self.policies:
                Policy.from_json(p)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if len(self.x1) != obj.dim:
            raise ConfigError(f"x1 has {len(self.x1)} coordinates, objective has {obj.dim}")

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "objective": self.objective,
            "x1": self.x1,
            "schedules": self.schedules,
            "policies": self.policies,
            "eps": self.eps,
            "variant": self.variant,
            "seeds": self.seeds,
            "drain_tail": self.drain_tail,
            "out": self.out,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def build_objective(self):
        return objective_from_descriptor(self.objective)

    def build_policies(self):
        return [Policy.from_json(p) for p in self.policies]

    def start_point(self):
        return np.array(self.x1, dtype=np.float64)


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load(path):
    with open(path) as fh:
        return loads(fh.read())

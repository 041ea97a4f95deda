"""Delayed-gradient optimizer policies, step-size calculators and LR schedules.

A policy sees only ``(x_current, x_stale, g)`` where ``g`` is a stochastic
gradient computed at ``x_stale``.  Picky SGD applies ``g`` only when the
stale base point lies within a fixed radius of the current iterate;
plain delayed SGD always applies it.
"""
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

COSINE_FLOOR = 1e-8


@dataclass(frozen=True)
class StepDecision:
    accepted: bool
    new_iterate: np.ndarray
    distance: float = 0.0


def _require_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to optimizer step")


def picky_step(cfg, x_t, x_stale, g, eta=None):
    """One Picky SGD step; inclusive distance test against ``cfg.threshold``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    x_stale = np.asarray(x_stale, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _require_finite(x_t, x_stale, g)
    return _picky(cfg.threshold, cfg.eta if eta is None else eta, x_t, x_stale, g)


def _picky(threshold, eta, x_t, x_stale, g):
    dist = float(np.linalg.norm(x_t - x_stale))
    if dist <= threshold:
        return StepDecision(True, x_t - eta * g, dist)
    return StepDecision(False, x_t, dist)


def sgd_step(eta, x_t, g):
    """Unconditional step ``x_t - eta * g``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    return StepDecision(True, x_t - eta * np.asarray(g, dtype=np.float64))


def step_size_nonconvex(beta, eps, sigma):
    if beta <= 0 or eps <= 0:
        raise ValueError("beta and eps must be positive")
    ratio = 1.0 if sigma == 0 else min(1.0, eps**2 / sigma**2)
    return ratio / (4.0 * beta)


def step_size_convex(beta, eps, sigma):
    if beta <= 0 or eps <= 0:
        raise ValueError("beta and eps must be positive")
    if sigma == 0:
        return 1.0 / (16.0 * beta)
    return min(1.0 / (16.0 * beta), eps / (8.0 * sigma**2))


def threshold_nonconvex(beta, eps):
    return eps / (2.0 * beta)


def threshold_convex(beta, eps):
    return math.sqrt(eps / (8.0 * beta))


def _ceil(x):
    # guard against 1000.0000000000001 style rounding of exact products
    r = round(x)
    return int(r) if abs(x - r) <= 1e-9 * max(1.0, abs(x)) else math.ceil(x)


def min_steps_nonconvex(beta, F, eps, sigma, tau):
    """Horizon ``500 beta F (sigma^2/eps^4 + (tau+1)/eps^2)``, rounded up."""
    return max(1, _ceil(500.0 * beta * F * (sigma**2 / eps**4 + (tau + 1) / eps**2)))


def min_steps_convex(F, beta, eps, sigma, tau):
    """Horizon ``1600 F^2 (sigma^2/eps^2 + beta (tau+1)/eps)``, rounded up."""
    return max(1, _ceil(1600.0 * F**2 * (sigma**2 / eps**2 + beta * (tau + 1) / eps)))


@dataclass(frozen=True)
class LrSchedule:
    """Step-indexed learning rate.

    ``kind`` is ``"constant"``, ``"piecewise"`` (``breakpoints`` maps the
    first step of a segment to its multiplier of ``base_eta``) or
    ``"cosine"`` (decay over ``decay_steps``, floored at 1e-8).
    """

    kind: str = "constant"
    base_eta: float = 0.05
    breakpoints: tuple = ()
    decay_steps: int = 0

    def __post_init__(self):
        if self.base_eta <= 0:
            raise ValueError("base_eta must be positive")
        bps = tuple(sorted((int(k), float(v)) for k, v in dict(self.breakpoints).items()))
        object.__setattr__(self, "breakpoints", bps)
        if self.kind == "piecewise" and any(m <= 0 for _, m in bps):
            raise ValueError("piecewise multipliers must be positive")
        if self.kind == "cosine" and self.decay_steps <= 0:
            raise ValueError("cosine schedule needs decay_steps > 0")
        if self.kind not in ("constant", "piecewise", "cosine"):
            raise ValueError(f"unknown lr schedule kind {self.kind!r}")

    def to_json(self):
        d = {"kind": self.kind, "base_eta": self.base_eta}
        if self.kind == "piecewise":
            d["breakpoints"] = {str(k): v for k, v in self.breakpoints}
        if self.kind == "cosine":
            d["decay_steps"] = self.decay_steps
        return d

    @classmethod
    def from_json(cls, d):
        return cls(
            d.get("kind", "constant"),
            float(d["base_eta"]),
            tuple((int(k), float(v)) for k, v in d.get("breakpoints", {}).items()),
            int(d.get("decay_steps", 0)),
        )


def lr_at(schedule, step):
    if step < 0:
        raise ValueError("step must be nonnegative")
    if schedule.kind == "constant":
        return schedule.base_eta
    if schedule.kind == "piecewise":
        mult = 1.0
        for start, m in schedule.breakpoints:
            if step >= start:
                mult = m
            else:
                break
        return schedule.base_eta * mult
    D = schedule.decay_steps
    rate = schedule.base_eta * 0.5 * (1.0 + math.cos(math.pi * min(step, D) / D))
    return max(rate, COSINE_FLOOR)


@dataclass(frozen=True)
class PickyConfig:
    eta: float
    threshold: float
    variant: str = "nonconvex"

    def __post_init__(self):
        if not self.eta > 0 or not self.threshold > 0:
            raise ValueError("eta and threshold must be positive")
        if self.variant not in ("nonconvex", "convex"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def from_theory(cls, beta, eps, sigma, variant="nonconvex"):
        """Step size and radius exactly as the convergence theorems prescribe."""
        if variant == "convex":
            return cls(step_size_convex(beta, eps, sigma), threshold_convex(beta, eps), variant)
        return cls(step_size_nonconvex(beta, eps, sigma), threshold_nonconvex(beta, eps), variant)


@dataclass(frozen=True)
class Policy:
    """Serializable optimizer descriptor used by the replay engine.

    ``name`` is ``"picky"`` or ``"sgd"``; ``lr`` overrides the constant
    ``eta`` with a step-indexed schedule.
    """

    name: str
    eta: float
    threshold: float = None
    variant: str = "nonconvex"
    lr: LrSchedule = None

    def __post_init__(self):
        if self.name not in ("picky", "sgd"):
            raise ValueError(f"unknown policy {self.name!r}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.name == "picky" and not (self.threshold is not None and self.threshold > 0):
            raise ValueError("picky policy needs a positive threshold")

    @classmethod
    def picky(cls, cfg, lr=None):
        return cls("picky", cfg.eta, cfg.threshold, cfg.variant, lr)

    @classmethod
    def sgd(cls, eta, lr=None):
        return cls("sgd", eta, None, "nonconvex", lr)

    def rate(self, step):
        return self.eta if self.lr is None else lr_at(self.lr, step)

    def apply(self, step, x_t, x_stale, g):
        eta = self.rate(step)
        if self.name == "sgd":
            dist = float(np.linalg.norm(x_t - x_stale))
            return StepDecision(True, x_t - eta * g, dist)
        return _picky(self.threshold, eta, x_t, x_stale, g)

    def to_json(self):
        d = {"policy": self.name, "variant": self.variant, "eta": self.eta}
        if self.threshold is not None:
            d["threshold"] = self.threshold
        if self.lr is not None:
            d["lr"] = self.lr.to_json()
        return d

    @classmethod
    def from_json(cls, d):
        lr = LrSchedule.from_json(d["lr"]) if d.get("lr") else None
        threshold = d.get("threshold")
        return cls(
            d["policy"],
            float(d["eta"]),
            None if threshold is None else float(threshold),
            d.get("variant", "nonconvex"),
            lr,
        )


class Phase(Enum):
    AWAITING_GRADIENT = "awaiting-gradient"
    AWAITING_SERVER = "awaiting-server"


@dataclass(frozen=True)
class WorkerState:
    """Worker side of the parameter-server protocol.

    ``AWAITING_GRADIENT``: no local iterate yet, the worker must read the
    server once.  ``AWAITING_SERVER``: holds ``x`` and is ready to compute
    a gradient there and compare against a fresh server read.
    """

    x: np.ndarray = field(default=None)
    phase: Phase = Phase.AWAITING_GRADIENT

    def connect(self, server_iterate):
        if self.phase is not Phase.AWAITING_GRADIENT:
            raise ValueError("worker already holds an iterate")
        return WorkerState(np.array(server_iterate, dtype=np.float64), Phase.AWAITING_SERVER)


def worker_tick(state, cfg, server_iterate, oracle, draw_index):
    """One loop iteration: gradient at the local iterate, one server read, test.

    Returns ``(update, next_state)`` where ``update`` is the gradient to send
    or ``None``.  After sending, the next local iterate is computed here so
    the worker never needs a second read per iteration.
    """
    if state.phase is not Phase.AWAITING_SERVER:
        raise ValueError("worker_tick requires a connected worker")
    g = oracle.sample(state.x, draw_index)
    x_server = np.asarray(server_iterate, dtype=np.float64)
    if float(np.linalg.norm(state.x - x_server)) <= cfg.threshold:
        return g, WorkerState(x_server - cfg.eta * g, Phase.AWAITING_SERVER)
    return None, WorkerState(x_server.copy(), Phase.AWAITING_SERVER)


class ParameterServer:
    """In-process server: holds the iterate and applies received updates."""

    def __init__(self, x1, eta):
        self.x = np.array(x1, dtype=np.float64)
        self.eta = eta
        self.updates = 0

    def read(self):
        return self.x.copy()

    def receive(self, g):
        self.x = self.x - self.eta * g
        self.updates += 1


def run_single_worker(cfg, oracle, x1, num_ticks):
    """Drive one worker against an in-process server; returns the server iterates.

    Row ``t`` is the server state before the ``t``-th tick's update, so the
    layout matches the replay engine's visited iterates.
    """
    server = ParameterServer(x1, cfg.eta)
    state = WorkerState().connect(server.read())
    history = [server.read()]
    for tick in range(num_ticks):
        update, state = worker_tick(state, cfg, server.read(), oracle, tick)
        if update is not None:
            server.receive(update)
        history.append(server.read())
    return np.array(history), server

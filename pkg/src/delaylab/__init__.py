"""Reproducible replay of delayed-gradient optimizers over synthetic objectives."""
from .objectives import (
    LogSquareObjective,
    NoisyGradientOracle,
    Objective,
    QuadraticObjective,
    evaluate,
    grad,
    objective_from_descriptor,
    sample_gradient,
)
from .optim import (
    LrSchedule,
    PickyConfig,
    Policy,
    StepDecision,
    WorkerState,
    lr_at,
    min_steps_convex,
    min_steps_nonconvex,
    picky_step,
    sgd_step,
    step_size_convex,
    step_size_nonconvex,
    worker_tick,
)
from .replay import RunRecord, restart_runner, run_to_target
from .schedule import (
    DelaySchedule,
    WaitDistribution,
    generate_schedule,
    preset,
    schedule_stats,
    validate_schedule,
)

__version__ = "0.1.0"

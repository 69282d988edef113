"""Random search for linear policies (BRS and the ARS family), with an LQR benchmark."""

from arsearch.rng import NoiseTable, SeedHierarchy, build_table, draw_direction_index, slice_perturbation
from arsearch.policy import PolicyParams, RunningStat, Version, act, freeze_stats, push_state
from arsearch.envs import (
    EnvSpec,
    LqrEnv,
    LqrInstance,
    PointMassEnv,
    QuadraticEnv,
    RolloutResult,
    make_env,
    make_lqr_paper_instance,
    make_point_mass_env,
    make_quadratic_env,
    rollout,
    subtract_bonus_wrapper,
)
from arsearch.lqr import (
    GainEvaluation,
    RiccatiSolution,
    average_cost,
    evaluate_gain,
    nominal_synthesis,
    solve_riccati,
    spectral_radius,
)
from arsearch.core import ArsConfig, IterationRecord, StopCondition, ars_step, brs_step, train
from arsearch.executor import WorkerPool, WorkItem, evaluate_batch

__version__ = "0.1.0"

"""Serial cooperative coevolution over a fixed partition.

One cycle visits the groups in ascending order (Gauss-Seidel). Each group is
optimized by CMA-ES against the current context and its result is spliced in
only when it strictly lowers the context fitness, so the sequence of distinct
contexts has strictly decreasing fitness and cannot cycle.
"""
import math
import logging
from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dcc_framework.exceptions import RejectedInputError
from dcc_framework.memory import RunRecorder
from dcc_framework.optimizer_base import Optimizer
from optimizers.subspace_cma import CmaState, default_popsize, fold_scale, optimize_subspace
from problems.partitioning import Partition, default_decompose, require_valid
from storage.models import CcConfig, RunRecord, Termination

logger = logging.getLogger(__name__)


class CcState(BaseModel):
    """Context vector, its cached fitness and the per-group CMA-ES states."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    obj: Any = Field(exclude=True)
    partition: Partition
    context: np.ndarray
    context_fitness: float
    sub_states: List[Optional[CmaState]]
    cycle: int = 0
    fixed_point_flag: bool = False
    stale_cycles: int = 0
    evaluations: int = 0


def new_cc_state(obj, partition: Partition, x0: np.ndarray) -> CcState:
    """
    Start CC from x0 (one evaluation).

    Args:
        obj: Objective instance
        partition: Decomposition with at least two groups
        x0: Initial context

    Returns:
        CcState
    """
    if partition.n != obj.dimension:
        raise RejectedInputError(
            f"partition is over {partition.n} indices but the objective has {obj.dimension}")
    require_valid(partition)
    context = np.array(x0, dtype=float)
    return CcState(
        obj=obj,
        partition=partition,
        context=context,
        context_fitness=obj.evaluate(context),
        sub_states=[None] * partition.m,
        evaluations=1,
    )


def group_budget(config: CcConfig, group_size: int) -> int:
    """Per-cycle evaluations of one group; `generations_per_group` generations by default."""
    return config.per_group_budget or config.generations_per_group * default_popsize(group_size)


def cc_cycle(state: CcState, config: CcConfig, rng: np.random.Generator) -> CcState:
    """
    Optimize every group once against the current context.

    Args:
        state: Current CC state
        config: CC settings (budgets, tol_fix, warm-start inflation)
        rng: Random generator

    Returns:
        Updated copy of the state
    """
    obj, partition = state.obj, state.partition
    context = state.context.copy()
    context_fitness = state.context_fitness
    sub_states = list(state.sub_states)
    evaluations = state.evaluations
    improved = False

    for g in range(partition.m):
        indices = partition.indices(g)
        warm = sub_states[g]
        if warm is not None:
            # after folding, sigma is the largest coordinate step
            warm = fold_scale(warm.model_copy(deep=True))
            warm.mean = context[indices].copy()
            warm.sigma = min(warm.sigma * config.sigma_inflation, config.sigma0)
            warm.B, warm.D = None, None
            warm.best_x, warm.best_f = None, math.inf

        result = optimize_subspace(
            obj, context, indices, group_budget(config, len(indices)), rng,
            state=warm, context_fitness=context_fitness, sigma0=config.sigma0,
        )
        evaluations += result.evaluations
        sub_states[g] = result.state

        if result.best_fitness < context_fitness:
            if context_fitness - result.best_fitness > config.tol_fix:
                improved = True
            context[indices] = result.best_subvector
            context_fitness = result.best_fitness

    fixed = not improved
    logger.debug(f"cc cycle {state.cycle + 1}: f={context_fitness:.6e} fixed_point={fixed}")
    return state.model_copy(update={
        "context": context,
        "context_fitness": float(context_fitness),
        "sub_states": sub_states,
        "cycle": state.cycle + 1,
        "fixed_point_flag": fixed,
        "stale_cycles": state.stale_cycles + 1 if fixed else 0,
        "evaluations": evaluations,
    })


class CcOptimizer(Optimizer):
    """Serial CC driven by the common termination protocol."""

    def __init__(self, partition: Optional[Partition] = None, config: Optional[CcConfig] = None):
        super().__init__("cc")
        self.partition = partition
        self.config = config or CcConfig()

    def initial_state(self, obj, x0: np.ndarray, rng: np.random.Generator) -> CcState:
        if self.partition is None:
            self.partition = default_decompose(obj.dimension, min(self.config.k, obj.dimension),
                                               rng=rng)
        return new_cc_state(obj, self.partition, x0)

    def step(self, state: CcState, obj, rng: np.random.Generator) -> CcState:
        return cc_cycle(state, self.config, rng)

    def budget_per_step(self, state: CcState) -> int:
        return sum(group_budget(self.config, len(g)) for g in state.partition.groups)

    def best_of(self, state: CcState):
        return state.context, state.context_fitness

    def converged(self, state: CcState) -> bool:
        return state.stale_cycles >= self.config.patience


def run_cc(obj, partition: Optional[Partition], config: Optional[CcConfig],
           termination: Termination, rng: np.random.Generator,
           x0: Optional[np.ndarray] = None,
           recorder: Optional[RunRecorder] = None) -> RunRecord:
    """
    Repeat CC cycles until the target, a budget or a persistent fixed point.

    Args:
        obj: Objective instance
        partition: Decomposition; a random k-block one when None
        config: CC settings
        termination: Termination protocol
        rng: Random generator
        x0: Initial context; uniform in (-10, 10)^n when omitted
        recorder: Optional recorder carrying record metadata

    Returns:
        RunRecord whose best_x is the final context
    """
    return CcOptimizer(partition, config).run(obj, termination, rng, x0=x0, recorder=recorder)

"""Limited-memory CMA for the full search space.

Offspring directions are produced by the nonrecursive product

    d = A(p_oldest) ... A(p_newest) z,   A(p) = (1 - c1/2) I + (c1/2) p p^T

applied right to left with dot products only, so no n x n matrix is ever
formed. The step-size follows cumulative step-size adaptation on the
recombined z vectors.
"""
import math
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import ConfigDict

from dcc_framework.exceptions import NumericalFailure, RejectedInputError
from dcc_framework.memory import DirectionMemory, RunRecorder
from dcc_framework.optimizer_base import (
    Optimizer, SearchState, log_rank_weights, rank_fitnesses,
)
from optimizers.subspace_cma import default_popsize, strategy_parameters
from storage.models import LmcmaConfig, RunRecord, Termination

logger = logging.getLogger(__name__)


def default_memory_size(n: int) -> int:
    return 4 + int(math.floor(3 * math.log(n)))


def default_c1(n: int) -> float:
    return 1.0 / (10.0 * math.log(n + 1))


def stored_path_norm(c1: float) -> float:
    """Norm given to every stored path; each factor then stretches its own direction by about 1.5."""
    return 1.0 / math.sqrt(c1)


def sample_direction(memory: Union[DirectionMemory, Sequence[np.ndarray]], c1: float,
                     z: np.ndarray, dot: Callable = np.dot) -> np.ndarray:
    """
    Apply the stored rank-one factors to z, newest first.

    Each path costs two dot products (projection and a finiteness check on
    p.p) and one scaled vector addition.

    Args:
        memory: Stored paths, oldest first
        c1: Rank-one learning rate in (0, 1)
        z: Standard normal vector
        dot: Dot-product implementation (replaceable for counting)

    Returns:
        Direction vector d
    """
    paths = memory.paths if isinstance(memory, DirectionMemory) else list(memory)
    d = np.array(z, dtype=float)
    half = c1 / 2.0
    for p in reversed(paths):
        if p.shape != d.shape:
            raise RejectedInputError(f"path of shape {p.shape} does not match z of shape {d.shape}")
        if not math.isfinite(dot(p, p)):
            raise NumericalFailure("stored path is not finite")
        d = (1.0 - half) * d + (half * dot(p, d)) * p
    return d


def dense_sampling_matrix(paths: Sequence[np.ndarray], c1: float) -> np.ndarray:
    """Explicit product of the factors, oldest on the left. Small n only."""
    n = paths[0].shape[0] if paths else 0
    matrix = np.eye(n)
    for p in paths:
        matrix = matrix @ ((1 - c1 / 2) * np.eye(n) + (c1 / 2) * np.outer(p, p))
    return matrix


class LmcmaState(SearchState):
    """LM-CMA instance; `memory` holds the time-stamped direction vectors."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    memory: DirectionMemory
    c1: float
    p_c: np.ndarray


def new_lmcma_state(mean: np.ndarray, sigma: float, popsize: Optional[int] = None,
                    memory_size: Optional[int] = None, c1: Optional[float] = None) -> LmcmaState:
    """
    Create a fresh state with empty memory.

    Args:
        mean: Initial mean
        sigma: Initial step-size
        popsize: 4 + floor(3 ln n) when omitted
        memory_size: 4 + floor(3 ln n) when omitted
        c1: 1 / (10 ln(n + 1)) when omitted

    Returns:
        LmcmaState
    """
    mean = np.array(mean, dtype=float)
    n = mean.shape[0]
    lam = popsize or default_popsize(n)
    mu = lam // 2
    c1 = c1 if c1 is not None else default_c1(n)
    if not 0 < c1 < 1:
        raise RejectedInputError(f"c1 must lie in (0, 1), got {c1}")
    return LmcmaState(
        mean=mean,
        sigma=float(sigma),
        lam=lam,
        mu=mu,
        weights=log_rank_weights(mu),
        p_sigma=np.zeros(n),
        p_c=np.zeros(n),
        memory=DirectionMemory(memory_size or default_memory_size(n)),
        c1=c1,
    )


def update_memory(state: LmcmaState, new_path: np.ndarray) -> LmcmaState:
    """Append a path stamped with the current generation (evicting if full)."""
    state.memory.remember(state.generation, new_path)
    return state


def lmcma_step(state: LmcmaState, obj, rng: np.random.Generator) -> LmcmaState:
    """
    One generation: lam evaluations, recombination, CSA and a memory update.

    Args:
        state: Current state
        obj: Objective instance
        rng: Random generator

    Returns:
        Updated copy of the state
    """
    n = state.dim
    par = strategy_parameters(n, state.lam)
    mueff = state.mueff
    cc = min(1.0, 0.5 / math.sqrt(n))

    z = rng.standard_normal((state.lam, n))
    directions = np.array([sample_direction(state.memory, state.c1, zi) for zi in z])
    population = state.mean + state.sigma * directions
    fitnesses = np.array([obj.evaluate(x) for x in population])

    new = state.model_copy(deep=True)
    new.evaluations += state.lam
    new.generation += 1
    order = rank_fitnesses(fitnesses)
    if np.isfinite(fitnesses[order[0]]):
        new.record_best(population[order[0]], fitnesses[order[0]])

    selected = order[:state.mu]
    d_w = state.weights @ directions[selected]
    z_w = state.weights @ z[selected]
    new.mean = state.mean + state.sigma * d_w

    new.p_sigma = (1 - par.cs) * state.p_sigma + math.sqrt(par.cs * (2 - par.cs) * mueff) * z_w
    ps_norm = float(np.linalg.norm(new.p_sigma))
    new.sigma = state.sigma * math.exp(min(1.0, (par.cs / par.damps) * (ps_norm / par.chi_n - 1)))

    new.p_c = (1 - cc) * state.p_c + math.sqrt(cc * (2 - cc) * mueff) * d_w
    path_norm = float(np.linalg.norm(new.p_c))
    if path_norm > 0 and math.isfinite(path_norm):
        update_memory(new, new.p_c * (stored_path_norm(new.c1) / path_norm))
    return new


class LmcmaOptimizer(Optimizer):
    """Full-space LM-CMA under the common termination protocol."""

    def __init__(self, config: Optional[LmcmaConfig] = None):
        super().__init__("lmcma")
        self.config = config or LmcmaConfig()

    def initial_state(self, obj, x0: np.ndarray, rng: np.random.Generator) -> LmcmaState:
        state = new_lmcma_state(x0, self.config.sigma0, self.config.popsize,
                                self.config.memory_size, self.config.c1)
        state.record_best(x0, obj.evaluate(x0))
        state.evaluations = 1
        return state

    def step(self, state: LmcmaState, obj, rng: np.random.Generator) -> LmcmaState:
        return lmcma_step(state, obj, rng)


def run_lmcma(obj, config: Optional[LmcmaConfig], termination: Termination,
              rng: np.random.Generator, x0: Optional[np.ndarray] = None,
              recorder: Optional[RunRecorder] = None) -> RunRecord:
    """Run LM-CMA from x0 (uniform in (-10, 10)^n by default)."""
    return LmcmaOptimizer(config).run(obj, termination, rng, x0=x0, recorder=recorder)

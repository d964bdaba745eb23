"""Full CMA-ES: rank-one plus rank-mu covariance update with CSA step-size control.

Used as the cooperative-coevolution suboptimizer on low-dimensional subspaces
(`optimize_subspace`) and as a plain full-space optimizer (`run_cma`).
"""
import math
import logging
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from pydantic import ConfigDict

from dcc_framework.exceptions import NumericalFailure, RejectedInputError
from dcc_framework.memory import RunRecorder
from dcc_framework.optimizer_base import (
    Optimizer, SearchState, log_rank_weights, rank_fitnesses,
)
from storage.models import CmaConfig, RunRecord, Termination

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-20
# C is renormalized once its largest variance leaves [1/SCALE_DRIFT, SCALE_DRIFT]
SCALE_DRIFT = 1e6


def default_popsize(dim: int) -> int:
    return 4 + int(math.floor(3 * math.log(dim)))


class StrategyParameters(NamedTuple):
    cs: float
    cc: float
    c1: float
    cmu: float
    damps: float
    chi_n: float


@lru_cache(maxsize=None)
def strategy_parameters(dim: int, lam: int) -> StrategyParameters:
    """Standard CMA-ES learning rates for a dimension and population size."""
    weights = log_rank_weights(lam // 2)
    mueff = float(1.0 / np.sum(weights ** 2))
    cs = (mueff + 2) / (dim + mueff + 5)
    cc = (4 + mueff / dim) / (dim + 4 + 2 * mueff / dim)
    c1 = 2 / ((dim + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((dim + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (dim + 1)) - 1) + cs
    chi_n = math.sqrt(dim) * (1 - 1 / (4 * dim) + 1 / (21 * dim ** 2))
    return StrategyParameters(cs, cc, c1, cmu, damps, chi_n)


class CmaState(SearchState):
    """One CMA-ES instance; B and D cache the eigendecomposition of C."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    C: np.ndarray
    p_c: np.ndarray
    B: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None


def new_cma_state(mean: np.ndarray, sigma: float, popsize: Optional[int] = None) -> CmaState:
    """
    Create a fresh state with C = I.

    Args:
        mean: Initial mean
        sigma: Initial step-size
        popsize: Population size; 4 + floor(3 ln dim) when omitted

    Returns:
        CmaState
    """
    mean = np.array(mean, dtype=float)
    dim = mean.shape[0]
    lam = popsize or default_popsize(dim)
    mu = lam // 2
    return CmaState(
        mean=mean,
        sigma=float(sigma),
        lam=lam,
        mu=mu,
        weights=log_rank_weights(mu),
        p_sigma=np.zeros(dim),
        p_c=np.zeros(dim),
        C=np.eye(dim),
    )


def step_scale(state: CmaState) -> float:
    """Largest per-coordinate standard deviation, sigma * sqrt(max diag C)."""
    return state.sigma * math.sqrt(max(float(np.max(np.diag(state.C))), 0.0))


def fold_scale(state: CmaState) -> CmaState:
    """
    Move the overall scale of C into sigma so that max diag C == 1.

    (sigma, C, p_c) -> (sigma * sqrt(s), C / s, p_c / sqrt(s)) leaves the
    sampling distribution and every later update unchanged. The state is
    modified in place and returned.
    """
    scale = float(np.max(np.diag(state.C)))
    if not math.isfinite(scale) or scale <= 0 or scale == 1.0:
        return state
    root = math.sqrt(scale)
    state.C = state.C / scale
    state.p_c = state.p_c / root
    state.sigma = state.sigma * root
    if state.D is not None:
        state.D = state.D / root
    return state


def _checked_eigh(C: np.ndarray):
    if not np.all(np.isfinite(C)):
        raise np.linalg.LinAlgError("covariance has non-finite entries")
    eigenvalues, B = np.linalg.eigh(C)
    if eigenvalues.min() <= 0:
        raise np.linalg.LinAlgError("covariance is not positive definite")
    return eigenvalues, B


def _repair(C: np.ndarray) -> np.ndarray:
    dim = C.shape[0]
    eigenvalues, B = np.linalg.eigh(C)
    floor = EIGEN_FLOOR * max(float(np.trace(C)), 0.0) / dim
    clipped = np.maximum(eigenvalues, floor)
    return (B * clipped) @ B.T


def update_eigensystem(state: CmaState):
    """Recompute B and D from C, repairing C once if it is not SPD."""
    C = (state.C + state.C.T) / 2
    try:
        eigenvalues, B = _checked_eigh(C)
    except np.linalg.LinAlgError as first:
        logger.warning(f"covariance repair at generation {state.generation}: {first}")
        try:
            C = _repair(C)
            eigenvalues, B = np.linalg.eigh(C)
        except np.linalg.LinAlgError as second:
            raise NumericalFailure(f"covariance eigendecomposition failed twice: {second}") from second
        if not np.all(np.isfinite(eigenvalues)) or eigenvalues.max() <= 0:
            raise NumericalFailure("covariance could not be repaired")
        eigenvalues = np.maximum(eigenvalues, EIGEN_FLOOR * eigenvalues.sum() / len(eigenvalues))
    state.C = C
    state.B = B
    state.D = np.sqrt(eigenvalues)


def ask(state: CmaState, rng: np.random.Generator) -> np.ndarray:
    """
    Sample a population.

    Args:
        state: Current state
        rng: Random generator

    Returns:
        Array of shape (lam, dim): mean + sigma * B D z
    """
    update_eigensystem(state)
    z = rng.standard_normal((state.lam, state.dim))
    return state.mean + state.sigma * (z * state.D) @ state.B.T


def tell(state: CmaState, population: np.ndarray, fitnesses) -> CmaState:
    """
    Update the distribution from an evaluated population.

    Args:
        state: State the population was sampled from
        population: Array of shape (lam, dim)
        fitnesses: Fitness per sample; non-finite values rank worst

    Returns:
        Updated copy of the state
    """
    population = np.asarray(population, dtype=float)
    fitnesses = np.asarray(fitnesses, dtype=float)
    if population.shape != (state.lam, state.dim):
        raise RejectedInputError(
            f"population shape {population.shape} does not match ({state.lam}, {state.dim})")
    if state.B is None:
        update_eigensystem(state)

    new = state.model_copy(deep=True)
    dim, sigma = state.dim, state.sigma
    par = strategy_parameters(dim, state.lam)
    mueff = state.mueff

    order = rank_fitnesses(fitnesses)
    new.evaluations += len(fitnesses)
    new.generation += 1
    if np.isfinite(fitnesses[order[0]]):
        new.record_best(population[order[0]], fitnesses[order[0]])

    selected = population[order[:state.mu]]
    new.mean = state.weights @ selected

    y = (new.mean - state.mean) / sigma
    inv_sqrt_y = state.B @ ((state.B.T @ y) / state.D)
    new.p_sigma = ((1 - par.cs) * state.p_sigma
                   + math.sqrt(par.cs * (2 - par.cs) * mueff) * inv_sqrt_y)
    ps_norm_sq = float(np.dot(new.p_sigma, new.p_sigma))
    hsig = (ps_norm_sq / dim / (1 - (1 - par.cs) ** (2 * new.generation))
            < 2 + 4.0 / (dim + 1))
    new.p_c = (1 - par.cc) * state.p_c + hsig * math.sqrt(par.cc * (2 - par.cc) * mueff) * y

    c1a = par.c1 * (1 - (1 - hsig ** 2) * par.cc * (2 - par.cc))
    steps = (selected - state.mean) / sigma
    rank_mu = (steps * state.weights[:, None]).T @ steps
    C = ((1 - c1a - par.cmu) * state.C
         + par.c1 * np.outer(new.p_c, new.p_c)
         + par.cmu * rank_mu)
    new.C = (C + C.T) / 2
    new.B = None
    new.D = None

    new.sigma = sigma * math.exp(min(1.0, (par.cs / par.damps)
                                     * (math.sqrt(ps_norm_sq) / par.chi_n - 1)))
    if not 1 / SCALE_DRIFT <= float(np.max(np.diag(new.C))) <= SCALE_DRIFT:
        fold_scale(new)
    return new


class SubspaceResult(NamedTuple):
    best_subvector: np.ndarray
    best_fitness: float
    state: CmaState
    evaluations: int


def assemble(context: np.ndarray, indices: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Splice a subvector into a copy of the context."""
    x = np.array(context, dtype=float)
    x[indices] = candidate
    return x


def optimize_subspace(obj, context: np.ndarray, indices: np.ndarray, budget_evals: int,
                      rng: np.random.Generator, state: Optional[CmaState] = None,
                      context_fitness: Optional[float] = None, sigma0: float = 3.0,
                      tolx: float = 1e-12) -> SubspaceResult:
    """
    Run CMA-ES on one subspace with every other coordinate frozen at the context.

    The result is elitist: when no sample beats the context, the context's
    own subvector and fitness are returned.

    Args:
        obj: Objective instance
        context: Full-space best-so-far solution
        indices: 0-based coordinates of the group
        budget_evals: Evaluation budget (at least one generation)
        rng: Random generator
        state: Warm-start state; a fresh one centred on the context otherwise
        context_fitness: Cached f(context); evaluated (one evaluation) when omitted
        sigma0: Step-size of a fresh state
        tolx: Stop once the largest coordinate step (`step_scale`) falls below this

    Returns:
        SubspaceResult
    """
    context = np.asarray(context, dtype=float)
    indices = np.asarray(indices, dtype=int)
    if indices.size == 0 or indices.min() < 0 or indices.max() >= context.shape[0]:
        raise RejectedInputError("group indices must be a nonempty subset of the coordinates")
    if state is None:
        state = new_cma_state(context[indices], sigma0)
    if budget_evals < state.lam:
        raise RejectedInputError(
            f"budget {budget_evals} is smaller than one generation ({state.lam})")

    used = 0
    if context_fitness is None:
        context_fitness = obj.evaluate(context)
        used += 1

    best_sub = context[indices].copy()
    best_f = float(context_fitness)
    while used + state.lam <= budget_evals:
        population = ask(state, rng)
        fitnesses = [obj.evaluate(assemble(context, indices, candidate))
                     for candidate in population]
        used += state.lam
        state = tell(state, population, fitnesses)
        if state.best_f < best_f:
            best_f = state.best_f
            best_sub = state.best_x.copy()
        if step_scale(state) < tolx:
            break

    return SubspaceResult(best_sub, best_f, state, used)


class CmaOptimizer(Optimizer):
    """Full-space CMA-ES under the common termination protocol."""

    def __init__(self, config: Optional[CmaConfig] = None):
        super().__init__("cma")
        self.config = config or CmaConfig()

    def initial_state(self, obj, x0: np.ndarray, rng: np.random.Generator) -> CmaState:
        state = new_cma_state(x0, self.config.sigma0, self.config.popsize)
        state.record_best(x0, obj.evaluate(x0))
        state.evaluations = 1
        return state

    def step(self, state: CmaState, obj, rng: np.random.Generator) -> CmaState:
        population = ask(state, rng)
        fitnesses = [obj.evaluate(x) for x in population]
        return tell(state, population, fitnesses)


def run_cma(obj, config: Optional[CmaConfig], termination: Termination,
            rng: np.random.Generator, x0: Optional[np.ndarray] = None,
            recorder: Optional[RunRecorder] = None) -> RunRecord:
    """Run full-space CMA-ES from x0 (uniform in (-10, 10)^n by default)."""
    return CmaOptimizer(config).run(obj, termination, rng, x0=x0, recorder=recorder)

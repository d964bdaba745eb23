"""Base classes for all optimizers in the system."""
import math
import logging
from abc import ABC, abstractmethod
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from dcc_framework.memory import RunRecorder
from storage.models import RunRecord, Termination

logger = logging.getLogger(__name__)


def log_rank_weights(mu: int) -> np.ndarray:
    """Positive, nonincreasing recombination weights summing to one."""
    weights = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return weights / weights.sum()


def rank_fitnesses(fitnesses: Any) -> np.ndarray:
    """Indices sorted best-first; non-finite values rank worst."""
    values = np.asarray(fitnesses, dtype=float)
    values = np.where(np.isfinite(values), values, np.inf)
    return np.argsort(values, kind="stable")


class SearchState(BaseModel):
    """State shared by every evolution-strategy instance."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean: np.ndarray
    sigma: float
    lam: int
    mu: int
    weights: np.ndarray
    p_sigma: np.ndarray
    generation: int = 0
    evaluations: int = 0
    best_x: Optional[np.ndarray] = None
    best_f: float = math.inf

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def mueff(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def record_best(self, x: np.ndarray, f: float):
        """Keep x if it strictly improves the best-so-far."""
        if f < self.best_f:
            self.best_f = float(f)
            self.best_x = np.array(x, dtype=float)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mean)) and np.isfinite(self.sigma)
                    and self.sigma > 0)


class Optimizer(ABC):
    """Base class for all optimizers driven by the common termination protocol."""

    # when False, `initial_state` receives x0=None unless a start point is given
    draws_start_point = True

    def __init__(self, name: str):
        """
        Initialize the optimizer.

        Args:
            name: Algorithm identifier used in run records
        """
        self.name = name
        self.logger = logging.getLogger(f"{__name__}.{name}")
        self.last_state: Any = None

    @abstractmethod
    def initial_state(self, obj, x0: np.ndarray, rng: np.random.Generator) -> Any:
        """Create the starting state for a run from x0."""

    @abstractmethod
    def step(self, state: Any, obj, rng: np.random.Generator) -> Any:
        """Advance the state by one generation or cycle and return it."""

    def budget_per_step(self, state: Any) -> int:
        """Upper bound on the evaluations one `step` consumes."""
        return int(state.lam)

    def best_of(self, state: Any):
        """(best_x, best_f) of a state."""
        return state.best_x, state.best_f

    def evaluations_of(self, state: Any) -> int:
        return int(state.evaluations)

    def converged(self, state: Any) -> bool:
        """Optimizer-specific stop condition (e.g. a fixed point)."""
        return False

    def run(self, obj, termination: Termination, rng: np.random.Generator,
            x0: Optional[np.ndarray] = None, recorder: Optional[RunRecorder] = None,
            state: Any = None) -> RunRecord:
        """
        Run until the termination protocol fires.

        The starting point is evaluated first and recorded, so every record
        holds at least one row.

        Args:
            obj: Objective instance
            termination: Termination protocol
            rng: Random generator owned by this run
            x0: Starting point; uniform in (-10, 10)^n when omitted
            recorder: Optional recorder carrying record metadata
            state: Optional ready-made initial state (x0 is then ignored)

        Returns:
            RunRecord
        """
        recorder = recorder or RunRecorder(function_id=obj.base_id, algorithm=self.name)
        if state is None:
            if x0 is None and self.draws_start_point:
                x0 = rng.uniform(-10.0, 10.0, obj.dimension)
            state = self.initial_state(obj, None if x0 is None else np.asarray(x0, dtype=float), rng)

        best_x, best_f = self.best_of(state)
        cycle = 0
        recorder.add_point(cycle, self.evaluations_of(state), best_f)
        self.logger.info(f"starting {self.name} on {obj.base_id} (n={obj.dimension})")

        status = "budget_exhausted"
        while True:
            best_x, best_f = self.best_of(state)
            if termination.target_reached(best_f, obj.known_optimum_value):
                status = "target_reached"
                break
            if self.converged(state):
                status = "fixed_point"
                break
            used = self.evaluations_of(state)
            if termination.exhausted(used, recorder.elapsed_seconds, cycle):
                break
            if termination.remaining_evaluations(used) < self.budget_per_step(state):
                break

            state = self.step(state, obj, rng)
            cycle += 1
            best_x, best_f = self.best_of(state)
            recorder.add_point(cycle, self.evaluations_of(state), best_f)
            self.logger.debug(f"cycle {cycle}: evals={self.evaluations_of(state)} best_f={best_f:.3e}")

        self.last_state = state
        return recorder.finish(status, best_x)

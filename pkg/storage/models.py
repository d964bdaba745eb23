"""Data models for configurations, run records and certificates."""
import math
from typing import Dict, Any, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

RunStatus = Literal["target_reached", "budget_exhausted", "fixed_point"]

ALGORITHM_IDS = ("cc", "cma", "dcc", "lmcma")


class Termination(BaseModel):
    """Termination protocol shared by every runner."""
    fitness_target: float = 1e-10
    max_evaluations: Optional[int] = Field(default=None, ge=0)
    max_wall_seconds: Optional[float] = Field(default=None, ge=0)
    max_cycles: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_bounds(self):
        if not self.fitness_target > 0:
            raise ValueError("fitness_target must be positive")
        if (self.max_evaluations is None and self.max_wall_seconds is None
                and self.max_cycles is None):
            raise ValueError("at least one budget bound must be set")
        return self

    def exhausted(self, evaluations: int, elapsed_seconds: float, cycles: int = 0) -> bool:
        """True once any budget bound is reached."""
        if self.max_evaluations is not None and evaluations >= self.max_evaluations:
            return True
        if self.max_wall_seconds is not None and elapsed_seconds >= self.max_wall_seconds:
            return True
        return self.max_cycles is not None and cycles >= self.max_cycles

    def target_reached(self, best_f: float, optimum: Optional[float] = 0.0) -> bool:
        """True once best_f is within fitness_target of a known optimum value."""
        if optimum is None:
            return False
        return best_f - optimum <= self.fitness_target

    def remaining_evaluations(self, evaluations: int) -> float:
        if self.max_evaluations is None:
            return math.inf
        return max(0, self.max_evaluations - evaluations)


class CmaConfig(BaseModel):
    """Full-space CMA-ES settings."""
    sigma0: float = Field(default=3.0, gt=0)
    popsize: Optional[int] = Field(default=None, ge=2)


class LmcmaConfig(BaseModel):
    """LM-CMA settings; unset values follow the dimension-dependent defaults."""
    sigma0: float = Field(default=3.0, gt=0)
    popsize: Optional[int] = Field(default=None, ge=2)
    memory_size: Optional[int] = Field(default=None, ge=1)
    c1: Optional[float] = Field(default=None, gt=0, lt=1)


class CcConfig(BaseModel):
    """Serial cooperative coevolution settings."""
    k: int = Field(default=4, ge=1)
    per_group_budget: Optional[int] = Field(default=None, ge=1)
    generations_per_group: int = Field(default=50, ge=1)
    tol_fix: float = Field(default=1e-12, ge=0)
    patience: int = Field(default=3, ge=1)
    sigma0: float = Field(default=3.0, gt=0)
    sigma_inflation: float = Field(default=10.0, ge=1)


class DccConfig(BaseModel):
    """Distributed multilevel CC settings; `p` counts workers, not the master."""
    p: int = Field(default=8, ge=1)
    p_es: Optional[int] = Field(default=None, ge=0)
    p_cc: Optional[int] = Field(default=None, ge=0)
    k: int = Field(default=4, ge=1)
    cycle_evals: Optional[int] = Field(default=None, ge=1)
    generations_per_cycle: int = Field(default=100, ge=1)
    better_fraction: float = 0.2
    elitist_fraction: float = 0.05
    meta_sigma_factors: Tuple[float, float] = (2.0, 0.5)
    injected_workers: int = Field(default=1, ge=0)
    mean_strategy: Literal["weighted", "elitist"] = "weighted"
    sigma0: float = Field(default=3.0, gt=0)
    max_workers: Optional[int] = Field(default=None, ge=1)
    cc: CcConfig = Field(default_factory=CcConfig)

    @model_validator(mode="after")
    def _split_workers(self):
        if self.p_es is None and self.p_cc is None:
            self.p_es = math.ceil(3 * self.p / 4)
            self.p_cc = self.p - self.p_es
        elif self.p_es is None:
            self.p_es = self.p - self.p_cc
        elif self.p_cc is None:
            self.p_cc = self.p - self.p_es
        if self.p_es < 0 or self.p_cc < 0 or self.p_es + self.p_cc != self.p:
            raise ValueError("p_es + p_cc must equal p")
        if not 0 < self.elitist_fraction <= self.better_fraction < 1:
            raise ValueError("need 0 < elitist_fraction <= better_fraction < 1")
        if any(f <= 0 for f in self.meta_sigma_factors):
            raise ValueError("meta_sigma_factors must be positive")
        return self


class ExperimentConfig(BaseModel):
    """One benchmark experiment: a function, an algorithm and a seed list."""
    function_id: str
    dimension: int = Field(default=128, ge=2)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    algorithm: str
    algorithm_config: Dict[str, Any] = Field(default_factory=dict)
    rotate_shift: bool = True
    fitness_target: float = 1e-10
    max_evaluations: Optional[int] = Field(default=None, ge=0)
    max_wall_seconds: Optional[float] = Field(default=600.0, ge=0)
    output_path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if not self.fitness_target > 0:
            raise ValueError("fitness_target must be positive")
        if self.max_evaluations is None and self.max_wall_seconds is None:
            raise ValueError("at least one budget bound must be set")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        return self

    def termination(self) -> Termination:
        return Termination(
            fitness_target=self.fitness_target,
            max_evaluations=self.max_evaluations,
            max_wall_seconds=self.max_wall_seconds,
        )


class RunPoint(BaseModel):
    """One row of a convergence series."""
    cycle: int
    evaluations: int
    best_f: float
    wall_ms: float


class RunRecord(BaseModel):
    """Convergence history of one run."""
    fingerprint: str = ""
    function_id: str = ""
    algorithm: str = ""
    seed: int = 0
    status: RunStatus = "budget_exhausted"
    series: List[RunPoint] = Field(default_factory=list)
    best_x: Optional[List[float]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check_series(self):
        for prev, cur in zip(self.series, self.series[1:]):
            if cur.evaluations <= prev.evaluations:
                raise ValueError("evaluations must be strictly increasing")
            if cur.best_f > prev.best_f:
                raise ValueError("best_f series must be nonincreasing")
        return self

    @property
    def final_best_f(self) -> float:
        return self.series[-1].best_f if self.series else math.inf

    @property
    def total_evaluations(self) -> int:
        return self.series[-1].evaluations if self.series else 0

    def evaluations_to_target(self, target: float) -> float:
        """First recorded evaluation count with best_f <= target, else inf."""
        for point in self.series:
            if point.best_f <= target:
                return float(point.evaluations)
        return math.inf


class PneCertificate(BaseModel):
    """Outcome of checking a point against the PNE definition for a partition."""
    point: List[float]
    partition: List[List[int]]
    tolerance: float
    is_pne: bool
    is_strict: bool
    per_group_gap: List[float]
    unbounded: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.is_strict and not self.is_pne:
            raise ValueError("a strict PNE must be a PNE")
        return self


class SummaryRow(BaseModel):
    """Aggregate of the runs of one (function, algorithm) pair."""
    function_id: str
    algorithm: str
    runs: int
    median_final_f: float
    median_evaluations_to_target: float
    success_count: int

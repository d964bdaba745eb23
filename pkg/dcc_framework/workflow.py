"""Distributed multilevel cooperative coevolution (DCC).

p workers run in parallel for one cycle each: p_es LM-CMA workers in the
full space and p_cc CC workers on their own k-group partitions. At the
barrier the master runs three serial meta-steps in this order:

1. mean update: weighted averaging over the better half, elitists kept,
   Meta-ES step-size spawning for the non-elitist LM-CMA workers;
2. collective covariance learning: pooling and resampling of LM-CMA
   direction memories plus injection of CC subspace directions;
3. best-so-far update.

Workers own their state during a cycle and draw from their own pre-split
random stream; results are consumed in worker-index order, so a run is
reproducible regardless of thread scheduling.
"""
import math
import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from typing import Any, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dcc_framework.exceptions import OptimizationError
from dcc_framework.memory import DirectionMemory, RunRecorder
from dcc_framework.optimizer_base import Optimizer, log_rank_weights, rank_fitnesses
from dcc_framework.utils import spawn_worker_rngs
from optimizers.cc_engine import CcState, cc_cycle, group_budget, new_cc_state
from optimizers.lmcma import LmcmaState, lmcma_step, new_lmcma_state, stored_path_norm
from problems.partitioning import default_decompose
from storage.models import CcConfig, DccConfig, RunRecord, Termination

logger = logging.getLogger(__name__)

WorkerKind = Literal["es", "cc"]


class WorkerSlot(BaseModel):
    """One worker as seen by the master between cycles."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: WorkerKind
    state: Any
    cycle_best_x: Optional[np.ndarray] = None
    cycle_best_f: float = math.inf
    progress: float = 0.0
    failed: bool = False

    @property
    def point(self) -> np.ndarray:
        """Mean of an LM-CMA worker, context of a CC worker."""
        return self.state.mean if self.kind == "es" else self.state.context


class MetaState(BaseModel):
    """Master-level state: b_x, b_f and the workers."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    best_x: np.ndarray
    best_f: float
    workers: List[WorkerSlot]
    cycle: int = 0
    evaluations: int = 0
    shared_mean: Optional[np.ndarray] = None
    shared_mean_f: float = math.inf
    elitists: List[int] = Field(default_factory=list)
    worker_rngs: List[Any] = Field(default_factory=list, exclude=True)


def _fraction_count(fraction: float, total: int) -> int:
    if total == 0:
        return 0
    return min(total, max(1, math.ceil(round(fraction * total, 9))))


def es_generations_per_cycle(config: DccConfig, lam: int) -> int:
    """LM-CMA generations per cycle; `generations_per_cycle` (100) by default."""
    if config.cycle_evals is None:
        return config.generations_per_cycle
    return max(1, config.cycle_evals // lam)


def cc_worker_config(config: DccConfig) -> CcConfig:
    """
    CC settings of a worker.

    By default every group runs `generations_per_cycle` generations of its
    CMA-ES per cycle, the same count as an LM-CMA worker; an explicit
    `cycle_evals` is shared evenly by the groups instead.
    """
    cc = config.cc.model_copy(update={"k": config.k,
                                      "generations_per_group": config.generations_per_cycle})
    if cc.per_group_budget is None and config.cycle_evals is not None:
        cc = cc.model_copy(update={"per_group_budget": max(1, config.cycle_evals // config.k)})
    return cc


def initialize_workers(obj, config: DccConfig, rngs: Sequence[np.random.Generator],
                       x0: Optional[np.ndarray] = None) -> Tuple[List[WorkerSlot], int]:
    """
    Create p_es LM-CMA workers followed by p_cc CC workers.

    Each worker draws its start point (unless x0 is given) and, for CC
    workers, its partition from its own stream, exactly as a serial run
    on that stream would.

    Returns:
        (worker slots, evaluations used)
    """
    slots, evaluations = [], 0
    n = obj.dimension
    for i, rng in enumerate(rngs):
        start = np.array(x0, dtype=float) if x0 is not None else rng.uniform(-10.0, 10.0, n)
        if i < config.p_es:
            state = new_lmcma_state(start, config.sigma0)
            f = obj.evaluate(start)
            state.record_best(start, f)
            state.evaluations = 1
            slots.append(WorkerSlot(kind="es", state=state, cycle_best_x=start, cycle_best_f=f))
        else:
            partition = default_decompose(n, min(config.k, n), rng=rng)
            state = new_cc_state(obj, partition, start)
            slots.append(WorkerSlot(kind="cc", state=state, cycle_best_x=state.context,
                                    cycle_best_f=state.context_fitness))
        evaluations += 1
    return slots, evaluations


def _run_worker(slot: WorkerSlot, obj, config: DccConfig,
                rng: np.random.Generator) -> WorkerSlot:
    """One cycle of one worker; runs on a pool thread."""
    previous_best = slot.cycle_best_f
    try:
        if slot.kind == "es":
            state = slot.state.model_copy(deep=True, update={"best_f": math.inf, "best_x": None})
            for _ in range(es_generations_per_cycle(config, state.lam)):
                state = lmcma_step(state, obj, rng)
            best_x, best_f = state.best_x, state.best_f
            failed = not state.is_finite()
        else:
            state = cc_cycle(slot.state, cc_worker_config(config), rng)
            best_x, best_f = state.context, state.context_fitness
            failed = not (np.all(np.isfinite(state.context)) and math.isfinite(best_f))
    except (OptimizationError, FloatingPointError) as e:
        logger.warning(f"{slot.kind} worker failed: {e}")
        return slot.model_copy(update={"failed": True, "cycle_best_f": math.inf, "progress": 0.0})

    if best_x is None or not math.isfinite(best_f):
        failed = True
    progress = previous_best - best_f if math.isfinite(previous_best) and not failed else 0.0
    return WorkerSlot(kind=slot.kind, state=state, cycle_best_x=best_x,
                      cycle_best_f=best_f if not failed else math.inf,
                      progress=progress, failed=failed)


def meta_mean_update(worker_means: Sequence[np.ndarray], worker_fitnesses: Sequence[float],
                     elitist_fraction: float) -> Tuple[np.ndarray, List[int]]:
    """
    Weighted averaging of worker means and elitist selection.

    Args:
        worker_means: Mean (or context) of every worker
        worker_fitnesses: Fitness of every worker this cycle
        elitist_fraction: Fraction of workers retained untouched

    Returns:
        (shared mean, elitist indices best first)
    """
    p = len(worker_means)
    order = rank_fitnesses(worker_fitnesses)
    mu = max(1, p // 2)
    weights = log_rank_weights(mu)
    means = np.array([worker_means[i] for i in order[:mu]])
    shared = weights @ means
    elitists = [int(i) for i in order[:_fraction_count(elitist_fraction, p)]]
    return shared, elitists


def meta_es_sigma(worker_sigmas: Sequence[float], worker_fitness_deltas: Sequence[float],
                  meta_sigma_factors: Tuple[float, float] = (2.0, 0.5)) -> List[float]:
    """
    Spawn next-cycle sigmas around the sigma of the best-progress worker.

    Args:
        worker_sigmas: Current step-sizes
        worker_fitness_deltas: Fitness decrease of each worker over the cycle
        meta_sigma_factors: Multipliers applied alternately in worker order

    Returns:
        Next sigmas (unchanged for a single worker)
    """
    if len(worker_sigmas) < 2:
        return [float(s) for s in worker_sigmas]
    deltas = np.where(np.isfinite(worker_fitness_deltas), worker_fitness_deltas, -np.inf)
    best_sigma = float(worker_sigmas[int(np.argmax(deltas))])
    return [best_sigma * meta_sigma_factors[i % 2] for i in range(len(worker_sigmas))]


def leading_direction(covariance: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue, sign fixed by its largest entry."""
    _, vectors = np.linalg.eigh((covariance + covariance.T) / 2)
    v = vectors[:, -1]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v / np.linalg.norm(v)


def embed_subspace_directions(cc_states: Sequence[CcState], n: int) -> List[np.ndarray]:
    """
    Leading direction of every group covariance, zero outside its group.

    Args:
        cc_states: CC worker states, best first
        n: Full dimension

    Returns:
        Unit-norm n-vectors
    """
    directions = []
    for cc_state in cc_states:
        for g, sub_state in enumerate(cc_state.sub_states):
            if sub_state is None or not np.all(np.isfinite(sub_state.C)):
                continue
            embedded = np.zeros(n)
            embedded[cc_state.partition.indices(g)] = leading_direction(sub_state.C)
            directions.append(embedded)
    return directions


def collective_covariance_learning(lmcma_states: Sequence[LmcmaState],
                                   lmcma_fitnesses: Sequence[float],
                                   cc_states: Sequence[CcState],
                                   better_fraction: float,
                                   rng: np.random.Generator,
                                   keep: Sequence[int] = (),
                                   injected_workers: int = 1) -> List[LmcmaState]:
    """
    Rebuild the direction memories of the non-retained LM-CMA workers.

    The memories of the best ceil(better_fraction * p_es) workers are pooled;
    every worker not in `keep` receives a uniform resample (without
    replacement, in stamp order) of the pool as its new memory. The worst
    `injected_workers` of them additionally receive the leading subspace
    directions of the CC workers.

    Args:
        lmcma_states: LM-CMA worker states
        lmcma_fitnesses: Their fitness this cycle
        cc_states: CC worker states
        better_fraction: Fraction of LM-CMA workers forming the pool
        rng: Master random generator
        keep: Positions (in lmcma_states) left untouched
        injected_workers: Number of workers receiving CC directions

    Returns:
        Updated states (untouched ones are returned as given)
    """
    states = list(lmcma_states)
    if not states:
        return states
    order = [int(i) for i in rank_fitnesses(lmcma_fitnesses)]
    donors = order[:_fraction_count(better_fraction, len(states))]
    pool = [entry for i in donors for entry in states[i].memory.entries()]
    keep = set(keep)
    targets = [i for i in range(len(states)) if i not in keep]

    if pool:
        for i in targets:
            capacity = states[i].memory.capacity
            draw = min(capacity, len(pool))
            chosen = sorted(rng.choice(len(pool), size=draw, replace=False),
                            key=lambda j: (pool[j][0], j))
            memory = DirectionMemory(capacity, [(pool[j][0], pool[j][1].copy()) for j in chosen])
            states[i] = states[i].model_copy(update={"memory": memory})

    if cc_states and injected_workers > 0:
        n = states[0].dim
        ranked_cc = sorted(cc_states, key=lambda s: s.context_fitness)
        directions = embed_subspace_directions(ranked_cc, n)
        receivers = [i for i in reversed(order) if i in targets][:injected_workers]
        for i in receivers:
            state = states[i]
            capacity = state.memory.capacity
            injected = directions[:max(1, capacity // 2)]
            entries = state.memory.entries()
            # injected paths displace the oldest entries, never each other
            kept = entries[len(entries) - max(0, capacity - len(injected)):] if entries else []
            scale = stored_path_norm(state.c1)
            memory = DirectionMemory(capacity, [(s, p.copy()) for s, p in kept]
                                     + [(state.generation, d * scale) for d in injected])
            states[i] = state.model_copy(update={"memory": memory})
    return states


def _reinitialize(slot: WorkerSlot, obj, config: DccConfig, start: np.ndarray,
                  start_f: float) -> WorkerSlot:
    logger.warning(f"reinitializing failed {slot.kind} worker")
    if slot.kind == "es":
        state = new_lmcma_state(start, config.sigma0)
        state.evaluations = slot.state.evaluations
    else:
        state = CcState(obj=obj, partition=slot.state.partition, context=start.copy(),
                        context_fitness=start_f, sub_states=[None] * slot.state.partition.m,
                        evaluations=slot.state.evaluations)
    return WorkerSlot(kind=slot.kind, state=state, cycle_best_x=start.copy(), cycle_best_f=start_f)


def _mean_update_step(meta: MetaState, obj, config: DccConfig) -> MetaState:
    workers = list(meta.workers)
    fitnesses = [w.cycle_best_f for w in workers]
    points = [w.point if not w.failed else meta.best_x for w in workers]
    shared, elitists = meta_mean_update(points, fitnesses, config.elitist_fraction)

    best_worker = elitists[0]
    lead_x = workers[best_worker].cycle_best_x
    lead_f = workers[best_worker].cycle_best_f
    if not math.isfinite(lead_f):
        lead_x, lead_f = meta.best_x, meta.best_f

    es_positions = [i for i, w in enumerate(workers) if w.kind == "es"]
    sigmas = meta_es_sigma([workers[i].state.sigma for i in es_positions],
                           [workers[i].progress for i in es_positions],
                           config.meta_sigma_factors)
    es_mean = shared if config.mean_strategy == "weighted" else lead_x

    for position, i in enumerate(es_positions):
        if workers[i].failed:
            workers[i] = _reinitialize(workers[i], obj, config, es_mean, math.inf)
        elif i not in elitists:
            workers[i] = workers[i].model_copy(update={"state": workers[i].state.model_copy(
                update={"mean": np.array(es_mean, dtype=float), "sigma": sigmas[position]})})

    # non-elitist CC workers restart from the shared mean, evaluated once
    restarted = [i for i, w in enumerate(workers)
                 if w.kind == "cc" and (w.failed or i not in elitists)]
    evaluations = meta.evaluations
    shared_f = math.inf
    cc_start, cc_start_f = lead_x, lead_f
    if restarted and config.mean_strategy == "weighted":
        shared_f = float(obj.evaluate(shared))
        evaluations += 1
        if math.isfinite(shared_f):
            cc_start, cc_start_f = shared, shared_f

    for i in restarted:
        w = workers[i]
        if w.failed:
            workers[i] = _reinitialize(w, obj, config, np.array(cc_start, dtype=float), cc_start_f)
        else:
            workers[i] = w.model_copy(update={"state": w.state.model_copy(update={
                "context": np.array(cc_start, dtype=float), "context_fitness": cc_start_f})})

    return meta.model_copy(update={"workers": workers, "shared_mean": shared,
                                   "shared_mean_f": shared_f, "elitists": elitists,
                                   "evaluations": evaluations})


def _covariance_step(meta: MetaState, config: DccConfig, rng: np.random.Generator) -> MetaState:
    workers = list(meta.workers)
    es_positions = [i for i, w in enumerate(workers) if w.kind == "es"]
    cc_states = [w.state for w in workers if w.kind == "cc" and not w.failed]
    keep = [position for position, i in enumerate(es_positions) if i in meta.elitists]
    updated = collective_covariance_learning(
        [workers[i].state for i in es_positions],
        [workers[i].cycle_best_f for i in es_positions],
        cc_states, config.better_fraction, rng,
        keep=keep, injected_workers=config.injected_workers,
    )
    for i, state in zip(es_positions, updated):
        workers[i] = workers[i].model_copy(update={"state": state})
    return meta.model_copy(update={"workers": workers})


def _best_update_step(meta: MetaState) -> MetaState:
    best_x, best_f = meta.best_x, meta.best_f
    candidates = [(w.cycle_best_x, w.cycle_best_f) for w in meta.workers]
    candidates.append((meta.shared_mean, meta.shared_mean_f))
    for x, f in candidates:
        if x is not None and f < best_f:
            best_x, best_f = np.array(x, dtype=float), float(f)
    return meta.model_copy(update={"best_x": best_x, "best_f": best_f})


def dcc_cycle(meta: MetaState, obj, config: DccConfig, rng: np.random.Generator,
              executor: Optional[Executor] = None) -> MetaState:
    """
    Run every worker for one cycle, then the three meta-steps in order.

    Args:
        meta: Current master state (carries the per-worker streams)
        obj: Objective instance shared read-only by all workers
        config: DCC settings
        rng: Master random generator for the meta-steps
        executor: Worker pool; workers run inline when None

    Returns:
        Updated MetaState
    """
    rngs = meta.worker_rngs
    if executor is None:
        results = [_run_worker(slot, obj, config, rngs[i]) for i, slot in enumerate(meta.workers)]
    else:
        futures = [executor.submit(_run_worker, slot, obj, config, rngs[i])
                   for i, slot in enumerate(meta.workers)]
        results = [future.result() for future in futures]

    used = sum(new.state.evaluations - old.state.evaluations
               for old, new in zip(meta.workers, results))
    meta = meta.model_copy(update={"workers": results,
                                   "evaluations": meta.evaluations + used,
                                   "cycle": meta.cycle + 1})

    meta = _mean_update_step(meta, obj, config)
    meta = _covariance_step(meta, config, rng)
    meta = _best_update_step(meta)
    logger.debug(f"dcc cycle {meta.cycle}: evals={meta.evaluations} best_f={meta.best_f:.3e} "
                 f"elitists={meta.elitists}")
    return meta


def new_meta_state(obj, config: DccConfig, rng: np.random.Generator,
                   x0: Optional[np.ndarray] = None) -> MetaState:
    """Spawn the worker streams, start every worker and set b_x, b_f."""
    rngs = spawn_worker_rngs(rng, config.p)
    workers, evaluations = initialize_workers(obj, config, rngs, x0)
    fitnesses = [w.cycle_best_f for w in workers]
    best = int(rank_fitnesses(fitnesses)[0])
    return MetaState(
        best_x=np.array(workers[best].cycle_best_x, dtype=float),
        best_f=float(fitnesses[best]),
        workers=workers,
        evaluations=evaluations,
        worker_rngs=rngs,
    )


class DccOptimizer(Optimizer):
    """DCC driven by the common termination protocol."""

    draws_start_point = False

    def __init__(self, config: Optional[DccConfig] = None):
        super().__init__("dcc")
        self.config = config or DccConfig()
        self.executor: Optional[Executor] = None

    def initial_state(self, obj, x0: Optional[np.ndarray], rng: np.random.Generator) -> MetaState:
        return new_meta_state(obj, self.config, rng, x0)

    def step(self, state: MetaState, obj, rng: np.random.Generator) -> MetaState:
        return dcc_cycle(state, obj, self.config, rng, self.executor)

    def budget_per_step(self, state: MetaState) -> int:
        total = 0
        cc_config = cc_worker_config(self.config)
        for w in state.workers:
            if w.kind == "es":
                total += es_generations_per_cycle(self.config, w.state.lam) * w.state.lam
            else:
                total += sum(group_budget(cc_config, len(g)) for g in w.state.partition.groups)
        # one evaluation of the shared mean for the restarted CC workers
        return total + (1 if self.config.p_cc else 0)

    def run(self, obj, termination: Termination, rng: np.random.Generator,
            x0: Optional[np.ndarray] = None, recorder: Optional[RunRecorder] = None,
            state: Any = None) -> RunRecord:
        with ThreadPoolExecutor(max_workers=self.config.max_workers or self.config.p,
                                thread_name_prefix="dcc-worker") as executor:
            self.executor = executor
            try:
                return super().run(obj, termination, rng, x0=x0, recorder=recorder, state=state)
            finally:
                self.executor = None


def run_dcc(obj, config: Optional[DccConfig], termination: Termination,
            rng: np.random.Generator, x0: Optional[np.ndarray] = None,
            recorder: Optional[RunRecorder] = None) -> RunRecord:
    """
    Loop DCC cycles until the target, the evaluation budget or the wall-clock budget.

    Args:
        obj: Objective instance
        config: DCC settings
        termination: Termination protocol
        rng: Master random generator; worker streams are spawned from it
        x0: Common start point of all workers; each worker draws its own when omitted
        recorder: Optional recorder carrying record metadata

    Returns:
        RunRecord with one row per cycle boundary
    """
    return DccOptimizer(config).run(obj, termination, rng, x0=x0, recorder=recorder)

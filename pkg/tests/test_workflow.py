import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from dcc_framework.optimizer_base import log_rank_weights
from dcc_framework.workflow import (
    DccOptimizer,
    dcc_cycle,
    collective_covariance_learning,
    cc_worker_config,
    embed_subspace_directions,
    es_generations_per_cycle,
    meta_es_sigma,
    meta_mean_update,
    new_meta_state,
    run_dcc,
)
from optimizers.cc_engine import CcOptimizer, cc_cycle, group_budget, new_cc_state
from optimizers.lmcma import LmcmaOptimizer, new_lmcma_state, stored_path_norm
from optimizers.subspace_cma import default_popsize
from problems.objective import ObjectiveInstance, make_rotated_shifted
from problems.partitioning import default_decompose
from storage.models import CcConfig, DccConfig, LmcmaConfig, Termination


def _lmcma_state_with_paths(value, n=4, count=3, memory_size=5):
    state = new_lmcma_state(np.zeros(n), 1.0, memory_size=memory_size)
    for stamp in range(count):
        state.memory.remember(10 * value + stamp, np.full(n, float(value)))
    return state


def test_default_worker_split():
    config = DccConfig(p=8)
    assert (config.p_es, config.p_cc) == (6, 2)
    assert DccConfig(p=1).p_es == 1


def test_worker_split_must_add_up():
    with pytest.raises(ValueError):
        DccConfig(p=4, p_es=3, p_cc=3)


def test_cycle_evaluation_budget():
    assert es_generations_per_cycle(DccConfig(), 12) == 100
    assert es_generations_per_cycle(DccConfig(cycle_evals=120), 12) == 10
    assert cc_worker_config(DccConfig(k=4, cycle_evals=400)).per_group_budget == 100
    assert cc_worker_config(DccConfig(k=3)).k == 3
    assert group_budget(cc_worker_config(DccConfig()), 8) == 100 * default_popsize(8)
    assert es_generations_per_cycle(DccConfig(generations_per_cycle=7), 12) == 7


def test_meta_mean_update_weights_the_better_half():
    means = [np.array([0.0]), np.array([1.0]), np.array([2.0]), np.array([3.0])]
    shared, elitists = meta_mean_update(means, [3.0, 2.0, 1.0, 0.0], elitist_fraction=0.25)
    weights = log_rank_weights(2)
    assert shared[0] == pytest.approx(weights[0] * 3.0 + weights[1] * 2.0)
    assert elitists == [3]


def test_meta_mean_update_single_worker():
    shared, elitists = meta_mean_update([np.array([1.5, -2.0])], [4.0], elitist_fraction=0.05)
    assert np.array_equal(shared, [1.5, -2.0])
    assert elitists == [0]


def test_meta_mean_update_ranks_non_finite_last():
    means = [np.array([0.0]), np.array([1.0])]
    shared, elitists = meta_mean_update(means, [np.nan, 5.0], elitist_fraction=0.5)
    assert shared[0] == 1.0
    assert elitists == [1]


def test_meta_es_sigma_alternates_around_best():
    sigmas = meta_es_sigma([1.0, 3.0, 5.0, 7.0], [0.1, 0.0, np.nan, -1.0], (2.0, 0.5))
    assert sigmas == [2.0, 0.5, 2.0, 0.5]


def test_meta_es_sigma_single_worker_is_unchanged():
    assert meta_es_sigma([0.7], [1.0]) == [0.7]


def test_single_worker_keeps_its_memory(rng):
    state = _lmcma_state_with_paths(1)
    updated = collective_covariance_learning([state], [1.0], [], 0.2, rng)
    assert updated[0].memory.stamps == state.memory.stamps
    for new, old in zip(updated[0].memory.paths, state.memory.paths):
        assert np.array_equal(new, old)


def test_pool_comes_from_the_best_fifth(rng):
    states = [_lmcma_state_with_paths(v) for v in range(5)]
    fitnesses = [5.0, 4.0, 0.5, 3.0, 2.0]
    updated = collective_covariance_learning(states, fitnesses, [], 0.2, rng)
    for state in updated:
        assert len(state.memory) == 3
        assert all(np.all(path == 2.0) for path in state.memory.paths)
        assert state.memory.stamps == sorted(state.memory.stamps)


def test_kept_workers_are_untouched(rng):
    states = [_lmcma_state_with_paths(v) for v in range(5)]
    fitnesses = [5.0, 4.0, 0.5, 3.0, 2.0]
    updated = collective_covariance_learning(states, fitnesses, [], 0.2, rng, keep=[0])
    assert updated[0] is states[0]
    assert all(np.all(path == 2.0) for path in updated[1].memory.paths)


def _cc_state_after_one_cycle(rng):
    obj = make_rotated_shifted("ellipsoid", 6, seed=0)
    state = new_cc_state(obj, default_decompose(6, 3, seed=0), np.zeros(6))
    return cc_cycle(state, CcConfig(per_group_budget=60), rng)


def test_embedded_directions_live_in_their_group(rng):
    cc_state = _cc_state_after_one_cycle(rng)
    directions = embed_subspace_directions([cc_state], 6)
    assert len(directions) == 3
    for g, direction in enumerate(directions):
        outside = np.setdiff1d(np.arange(6), cc_state.partition.indices(g))
        assert np.all(direction[outside] == 0.0)
        assert np.linalg.norm(direction) == pytest.approx(1.0)


def test_worst_worker_receives_subspace_directions(rng):
    cc_state = _cc_state_after_one_cycle(rng)
    states = [_lmcma_state_with_paths(v, n=6, memory_size=6) for v in range(3)]
    updated = collective_covariance_learning(states, [1.0, 2.0, 3.0], [cc_state], 0.5, rng,
                                             injected_workers=1)
    norms = [np.linalg.norm(p) for p in updated[2].memory.paths]
    expected = stored_path_norm(updated[2].c1)
    assert sum(abs(n - expected) < 1e-9 for n in norms) == 3
    assert len(updated[0].memory) == 6


def test_memory_capacity_is_respected_when_injecting(rng):
    cc_state = _cc_state_after_one_cycle(rng)
    state = _lmcma_state_with_paths(0, n=6, count=2, memory_size=2)
    updated = collective_covariance_learning([state], [1.0], [cc_state], 1.0 - 1e-9, rng)
    assert len(updated[0].memory) <= 2


def test_workers_draw_from_their_own_streams():
    obj = make_rotated_shifted("sphere", 6, seed=0)
    config = DccConfig(p=4)
    meta = new_meta_state(obj, config, np.random.default_rng(9))
    points = [w.point for w in meta.workers]
    assert len({tuple(p) for p in points}) == 4
    assert [w.kind for w in meta.workers] == ["es", "es", "es", "cc"]
    assert meta.best_f == min(w.cycle_best_f for w in meta.workers)
    assert meta.evaluations == 4


def test_single_lmcma_worker_reduces_to_serial_lmcma():
    obj = make_rotated_shifted("ellipsoid", 10, seed=1)
    dcc = DccOptimizer(DccConfig(p=1))
    dcc.run(obj, Termination(max_cycles=2), np.random.default_rng(5))

    serial = LmcmaOptimizer(LmcmaConfig())
    serial.run(obj, Termination(max_cycles=200), np.random.default_rng(5).spawn(1)[0])

    worker = dcc.last_state.workers[0].state
    assert np.array_equal(worker.mean, serial.last_state.mean)
    assert worker.sigma == serial.last_state.sigma
    assert worker.evaluations == serial.last_state.evaluations


def test_single_cc_worker_reduces_to_serial_cc():
    obj = make_rotated_shifted("ellipsoid", 8, seed=2)
    dcc = DccOptimizer(DccConfig(p=1, p_es=0, k=4))
    dcc.run(obj, Termination(max_cycles=3), np.random.default_rng(6))

    serial = CcOptimizer(config=CcConfig(k=4, generations_per_group=100))
    serial.run(obj, Termination(max_cycles=3), np.random.default_rng(6).spawn(1)[0])

    worker = dcc.last_state.workers[0].state
    assert worker.partition == serial.partition
    assert np.array_equal(worker.context, serial.last_state.context)
    assert worker.context_fitness == serial.last_state.context_fitness


def test_best_so_far_never_increases():
    obj = make_rotated_shifted("ellipsoid", 12, seed=3)
    record = run_dcc(obj, DccConfig(p=4, cycle_evals=200), Termination(max_cycles=6),
                     np.random.default_rng(0))
    values = [p.best_f for p in record.series]
    assert len(values) == 7
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert record.best_x is not None


def test_runs_are_reproducible():
    obj = make_rotated_shifted("cigar", 10, seed=4)
    config = DccConfig(p=4, cycle_evals=150)

    def series():
        record = run_dcc(obj, config, Termination(max_cycles=4), np.random.default_rng(11))
        return [p.model_dump(exclude={"wall_ms"}) for p in record.series], record.best_x

    assert series() == series()


def test_elitist_mean_strategy_runs():
    obj = make_rotated_shifted("sphere", 8, seed=5)
    config = DccConfig(p=4, cycle_evals=120, mean_strategy="elitist")
    record = run_dcc(obj, config, Termination(max_cycles=3), np.random.default_rng(1))
    assert record.final_best_f < record.series[0].best_f


def test_sphere_reaches_target():
    obj = make_rotated_shifted("sphere", 10, seed=6)
    record = run_dcc(obj, DccConfig(p=4, cycle_evals=300), Termination(max_evaluations=200_000),
                     np.random.default_rng(2))
    assert record.status == "target_reached"


@pytest.mark.slow
def test_parallel_workers_speed_up_expensive_objectives():
    def slow_objective():
        return ObjectiveInstance("sphere", 6, delay_seconds=0.002)

    termination = Termination(max_cycles=2)
    start = time.perf_counter()
    run_dcc(slow_objective(), DccConfig(p=4, cycle_evals=60, max_workers=1), termination,
            np.random.default_rng(0))
    serial_seconds = time.perf_counter() - start

    start = time.perf_counter()
    run_dcc(slow_objective(), DccConfig(p=4, cycle_evals=60, max_workers=4), termination,
            np.random.default_rng(0))
    parallel_seconds = time.perf_counter() - start
    assert parallel_seconds < 0.6 * serial_seconds


def test_dcc_cycle_does_not_depend_on_the_pool():
    obj = make_rotated_shifted("ellipsoid", 8, seed=7)
    config = DccConfig(p=4, cycle_evals=120)

    def one_cycle(executor):
        rng = np.random.default_rng(3)
        meta = new_meta_state(obj, config, rng)
        return meta, dcc_cycle(meta, obj, config, rng, executor)

    before, inline = one_cycle(None)
    with ThreadPoolExecutor(max_workers=4) as pool:
        _, pooled = one_cycle(pool)
    assert inline.cycle == 1
    assert inline.evaluations > before.evaluations
    assert inline.best_f <= before.best_f
    assert pooled.best_f == inline.best_f
    assert np.array_equal(pooled.best_x, inline.best_x)


def test_non_elitist_cc_workers_restart_from_the_shared_mean():
    obj = make_rotated_shifted("sphere", 8, seed=8)
    config = DccConfig(p=4, p_es=2, p_cc=2, k=2, cycle_evals=120)
    rng = np.random.default_rng(4)
    before = new_meta_state(obj, config, rng)
    after = dcc_cycle(before, obj, config, rng)

    assert len(after.elitists) == 1
    restarted = [i for i, w in enumerate(after.workers)
                 if w.kind == "cc" and i not in after.elitists]
    assert restarted
    assert np.isfinite(after.shared_mean_f)
    for i in restarted:
        assert np.array_equal(after.workers[i].state.context, after.shared_mean)
        assert after.workers[i].state.context_fitness == after.shared_mean_f

    used = sum(new.state.evaluations - old.state.evaluations
               for old, new in zip(before.workers, after.workers))
    assert after.evaluations == before.evaluations + used + 1

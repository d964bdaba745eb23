import numpy as np
import pytest

from analysis.game_analysis import make_game_objective, verify_pne
from dcc_framework.exceptions import RejectedInputError
from optimizers.cc_engine import CcOptimizer, cc_cycle, group_budget, new_cc_state, run_cc
from optimizers.subspace_cma import new_cma_state
from problems.objective import make_objective, make_rotated_shifted
from problems.partitioning import Partition, default_decompose, singletons
from storage.models import CcConfig, Termination


def test_group_budget_default_and_override():
    assert group_budget(CcConfig(), 1) == 50 * 4
    assert group_budget(CcConfig(per_group_budget=30), 5) == 30
    assert group_budget(CcConfig(generations_per_group=100), 1) == 100 * 4


def test_new_state_costs_one_evaluation(coordinate_partition):
    obj = make_game_objective("f1")
    state = new_cc_state(obj, coordinate_partition, [5.0, 5.0])
    assert state.evaluations == 1
    assert obj.evaluation_counter == 1
    assert state.context_fitness == obj.evaluate([5.0, 5.0])


def test_trivial_partition_is_rejected():
    obj = make_objective("sphere", 3)
    with pytest.raises(RejectedInputError):
        new_cc_state(obj, Partition(3, [[1, 2, 3]]), np.zeros(3))


def test_partition_dimension_must_match(coordinate_partition):
    obj = make_objective("sphere", 3)
    with pytest.raises(RejectedInputError):
        new_cc_state(obj, coordinate_partition, np.zeros(3))


def test_f1_converges_to_the_origin(coordinate_partition, rng):
    obj = make_game_objective("f1")
    state = new_cc_state(obj, coordinate_partition, [5.0, 5.0])
    config = CcConfig()
    for _ in range(50):
        state = cc_cycle(state, config, rng)
        if state.context_fitness <= 1e-12:
            break
    assert state.context_fitness <= 1e-12
    assert np.linalg.norm(state.context) <= 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_f1_from_unit_start_within_fifty_cycles(coordinate_partition, seed):
    obj = make_game_objective("f1")
    state = new_cc_state(obj, coordinate_partition, [1.0, 1.0])
    rng = np.random.default_rng(seed)
    for _ in range(50):
        state = cc_cycle(state, CcConfig(), rng)
    assert np.linalg.norm(state.context) <= 1e-6


def test_collapsed_warm_state_still_searches(coordinate_partition, rng):
    obj = make_game_objective("f1")
    state = new_cc_state(obj, coordinate_partition, [1.0, 1.0])
    collapsed = []
    for value in (1.0, 1.0):
        sub = new_cma_state(np.array([value]), 1e8)
        sub.C = np.array([[1e-26]])
        collapsed.append(sub)
    state = state.model_copy(update={"sub_states": collapsed})
    state = cc_cycle(state, CcConfig(), rng)
    assert not state.fixed_point_flag
    assert state.context_fitness < 10.0


def test_rotated_quadratic_keeps_improving():
    obj = make_rotated_shifted("ellipsoid", 32, seed=0)
    rng = np.random.default_rng(0)
    state = new_cc_state(obj, default_decompose(32, 4, seed=0), rng.uniform(-10, 10, 32))
    initial = state.context_fitness
    config = CcConfig(per_group_budget=2000)
    for _ in range(3):
        state = cc_cycle(state, config, rng)
        assert not state.fixed_point_flag
    assert state.context_fitness <= initial / 10


def test_context_fitness_never_increases(rng):
    obj = make_rotated_shifted("ellipsoid", 8, seed=3)
    partition = default_decompose(8, 4, seed=0)
    state = new_cc_state(obj, partition, np.zeros(8))
    config = CcConfig(per_group_budget=60)
    history = [state.context_fitness]
    for _ in range(10):
        previous_evaluations = state.evaluations
        state = cc_cycle(state, config, rng)
        history.append(state.context_fitness)
        assert state.evaluations > previous_evaluations
        assert state.context_fitness == obj.evaluate(state.context)
    assert all(b <= a for a, b in zip(history, history[1:]))


def test_f4_line_is_a_fixed_point_after_one_cycle(coordinate_partition, rng):
    obj = make_game_objective("f4")
    state = new_cc_state(obj, coordinate_partition, [5.0, 5.0])
    state = cc_cycle(state, CcConfig(), rng)
    assert state.fixed_point_flag
    assert np.array_equal(state.context, [5.0, 5.0])


def test_run_cc_stops_on_persistent_fixed_point(coordinate_partition):
    obj = make_game_objective("f4")
    config = CcConfig(patience=2)
    record = run_cc(obj, coordinate_partition, config, Termination(max_evaluations=100_000),
                    np.random.default_rng(0), x0=[5.0, 5.0])
    assert record.status == "fixed_point"
    assert record.best_x == [5.0, 5.0]


def test_run_cc_zero_budget_returns_initial_point(coordinate_partition):
    obj = make_game_objective("f1")
    record = run_cc(obj, coordinate_partition, None, Termination(max_evaluations=0),
                    np.random.default_rng(0), x0=[5.0, 5.0])
    assert len(record.series) == 1
    assert record.series[0].best_f == 525.0
    assert record.status == "budget_exhausted"


def test_run_cc_default_partition_is_seeded():
    obj = make_objective("sphere", 6)
    first = CcOptimizer(config=CcConfig(k=3))
    first.run(obj, Termination(max_cycles=1), np.random.default_rng(4))
    second = CcOptimizer(config=CcConfig(k=3))
    second.run(obj, Termination(max_cycles=1), np.random.default_rng(4))
    assert first.partition == second.partition
    assert first.partition.m == 3


def test_separable_sphere_is_solved_by_cc():
    obj = make_objective("sphere", 8)
    record = run_cc(obj, default_decompose(8, 4, seed=1), None,
                    Termination(max_evaluations=40_000), np.random.default_rng(2))
    assert record.status == "target_reached"


def test_converged_context_is_a_pne(coordinate_partition):
    obj = make_game_objective("f1")
    optimizer = CcOptimizer(coordinate_partition, CcConfig())
    optimizer.run(obj, Termination(fitness_target=1e-14, max_cycles=60),
                  np.random.default_rng(3), x0=[5.0, 5.0])
    context = optimizer.last_state.context
    certificate = verify_pne(make_game_objective("f1"), singletons(2), context, tolerance=1e-8)
    assert certificate.is_pne


def test_fixed_point_on_f4_is_a_pne(coordinate_partition):
    obj = make_game_objective("f4")
    record = run_cc(obj, coordinate_partition, CcConfig(patience=2),
                    Termination(max_evaluations=200_000), np.random.default_rng(1), x0=[5.0, -3.0])
    assert record.status == "fixed_point"
    certificate = verify_pne(make_game_objective("f4"), singletons(2), record.best_x)
    assert certificate.is_pne


def test_target_is_measured_from_the_known_optimum():
    termination = Termination(max_cycles=1)
    assert termination.target_reached(2.0 + 1e-11, 2.0)
    assert not termination.target_reached(2.0 + 1e-9, 2.0)
    assert not termination.target_reached(-5.0, None)

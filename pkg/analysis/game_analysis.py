"""Continuous-game analysis of objective functions under a partition.

Every group of a partition is treated as a player that controls its own
coordinates and minimizes the shared objective. This module computes best
responses, checks pure Nash equilibria (PNE), compares them with the closed
forms known for a few two-dimensional games and traces alternating best
response dynamics.
"""
import math
import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from dcc_framework.exceptions import RejectedInputError, UnknownIdentifierError
from problems.objective import ObjectiveInstance
from problems.partitioning import Partition, is_refinement, require_valid, singletons
from storage.models import PneCertificate

logger = logging.getLogger(__name__)

DEFAULT_BOX = (-10.0, 10.0)
MULTISTARTS = 16
SOLVER_XATOL = 1e-10
UNBOUNDED_BELOW = -1e12
FIXED_POINT_MOVEMENT = 1e-12
PROBE_RADII = (1e-6, 1e-3, 1e-1, 1.0)
MAX_VERIFY_DIMENSION = 16
MAX_GROUP_SIZE = 8

ROTATION_ANGLE = math.pi / 6
_COS, _SIN = math.cos(ROTATION_ANGLE), math.sin(ROTATION_ANGLE)


def f1(x: np.ndarray) -> float:
    return float(7 * x[0] ** 2 + 6 * x[0] * x[1] + 8 * x[1] ** 2)


def f2(x: np.ndarray) -> float:
    return float(x[0] ** 2 + 1e6 * x[1] ** 2)


def f2_rotated(x: np.ndarray) -> float:
    u = _COS * x[0] - _SIN * x[1]
    v = _SIN * x[0] + _COS * x[1]
    return float(u * u + 1e6 * v * v)


def f3(x: np.ndarray) -> float:
    return float(100 * (x[0] ** 2 - x[1]) ** 2 + (x[0] - 1) ** 2)


def f4(x: np.ndarray) -> float:
    return float(abs(x[0] - x[1]) - min(x[0], x[1]))


def overlap3(x: np.ndarray) -> float:
    """(x+y)^2 + (y-1)^2 + (y+1)^2 + (y+z)^2, the sum of two overlapping 2-d games."""
    return float((x[0] + x[1]) ** 2 + (x[1] - 1) ** 2 + (x[1] + 1) ** 2 + (x[1] + x[2]) ** 2)


class GameFunction(NamedTuple):
    function: Callable[[np.ndarray], float]
    dimension: int
    optimum_value: Optional[float]
    optimum_point: Optional[Tuple[float, ...]]


GAME_FUNCTIONS: Dict[str, GameFunction] = {
    "f1": GameFunction(f1, 2, 0.0, (0.0, 0.0)),
    "f2": GameFunction(f2, 2, 0.0, (0.0, 0.0)),
    "f2_rotated": GameFunction(f2_rotated, 2, 0.0, (0.0, 0.0)),
    "f3": GameFunction(f3, 2, 0.0, (1.0, 1.0)),
    # f4 is unbounded below on the whole plane
    "f4": GameFunction(f4, 2, None, None),
    "overlap3": GameFunction(overlap3, 3, 2.0, (0.0, 0.0, 0.0)),
}


def make_game_objective(function_id: str) -> ObjectiveInstance:
    """Objective instance for one of the analysed game functions."""
    if function_id not in GAME_FUNCTIONS:
        raise UnknownIdentifierError("game function", function_id, GAME_FUNCTIONS)
    game = GAME_FUNCTIONS[function_id]
    return ObjectiveInstance(
        function_id, game.dimension,
        base_function=game.function,
        known_optimum_value=game.optimum_value,
        optimum_point=None if game.optimum_point is None else np.array(game.optimum_point),
    )


def _f3_x_response(y: float) -> float:
    # stationary points solve 400 x^3 + (2 - 400 y) x - 2 = 0
    roots = np.roots([400.0, 0.0, 2.0 - 400.0 * y, -2.0])
    real = [float(r.real) for r in roots if abs(r.imag) < 1e-9]
    return min(real, key=lambda x: f3(np.array([x, y])))


_F2R_X = -_COS * _SIN * (1e6 - 1) / (_COS ** 2 + 1e6 * _SIN ** 2)
_F2R_Y = -_SIN * _COS * (1e6 - 1) / (_SIN ** 2 + 1e6 * _COS ** 2)

# (response of x given y, response of y given x) for the coordinate partition
EXACT_BEST_RESPONSES: Dict[str, Tuple[Callable[[float], float], Callable[[float], float]]] = {
    "f1": (lambda y: -6.0 * y / 14.0, lambda x: -6.0 * x / 16.0),
    "f2": (lambda y: 0.0, lambda x: 0.0),
    "f2_rotated": (lambda y: _F2R_X * y, lambda x: _F2R_Y * x),
    "f3": (_f3_x_response, lambda x: x * x),
    "f4": (lambda y: y, lambda x: x),
}


def _is_coordinate_partition(partition: Partition, n: int) -> bool:
    return partition.n == n and partition == singletons(n)


class BestResponse(NamedTuple):
    subvector: np.ndarray
    fitness: float
    unbounded: bool


def best_response(obj, partition: Partition, x: Sequence[float], group_index: int,
                  solver_budget: Optional[int] = None, seed: int = 0,
                  box: Tuple[float, float] = DEFAULT_BOX,
                  starts: int = MULTISTARTS) -> BestResponse:
    """
    Approximate argmin over one group with all other coordinates frozen.

    Nelder-Mead (bounded to `box`) is started from the current subvector and
    from `starts - 1` uniform points in the box; the best result is returned.
    The current subvector itself is a candidate, so the returned fitness
    never exceeds f(x).

    Args:
        obj: Objective instance
        partition: Partition of the coordinates
        x: Point whose other groups are frozen
        group_index: Group to optimize
        solver_budget: Function evaluations per local search
        seed: Seed of the random starts
        box: Per-coordinate search bounds
        starts: Number of local searches

    Returns:
        BestResponse; `unbounded` is set when a value below -1e12 is found
    """
    x = np.asarray(x, dtype=float)
    require_valid(partition, allow_trivial=True)
    if partition.n != x.shape[0]:
        raise RejectedInputError("partition and point dimensions differ")
    if not 0 <= group_index < partition.m:
        raise RejectedInputError(f"group index {group_index} outside 0..{partition.m - 1}")
    indices = partition.indices(group_index)
    k = len(indices)
    if k > MAX_GROUP_SIZE:
        raise RejectedInputError(f"best responses are limited to groups of at most {MAX_GROUP_SIZE}")

    def restricted(sub: np.ndarray) -> float:
        candidate = x.copy()
        candidate[indices] = sub
        return obj.evaluate(candidate)

    best_sub = x[indices].copy()
    best_f = restricted(best_sub)
    rng = np.random.default_rng(seed)
    initial_points = [best_sub.copy()] + [rng.uniform(*box, size=k) for _ in range(starts - 1)]
    budget = solver_budget or 2000 * k

    for start in initial_points:
        result = optimize.minimize(
            restricted, start, method="Nelder-Mead",
            bounds=[box] * k,
            options={"xatol": SOLVER_XATOL, "fatol": 1e-14, "maxfev": budget},
        )
        if result.fun < best_f:
            best_f = float(result.fun)
            best_sub = np.array(result.x, dtype=float)
        if best_f < UNBOUNDED_BELOW:
            logger.warning(f"unbounded best response in group {group_index} of {obj.base_id}")
            return BestResponse(best_sub, best_f, True)

    return BestResponse(best_sub, best_f, False)


def _probe_directions(k: int, rng: np.random.Generator) -> List[np.ndarray]:
    axes = np.eye(k)
    directions = [axes[i] for i in range(k)] + [-axes[i] for i in range(k)]
    for _ in range(4):
        v = rng.standard_normal(k)
        directions.append(v / np.linalg.norm(v))
    return directions


def is_strict_for_group(obj, partition: Partition, x: np.ndarray, group_index: int,
                        fx: float, seed: int = 0) -> bool:
    """True if every unilateral probe deviation of this group strictly worsens f."""
    indices = partition.indices(group_index)
    rng = np.random.default_rng(seed)
    for direction in _probe_directions(len(indices), rng):
        for radius in PROBE_RADII:
            candidate = x.copy()
            candidate[indices] += radius * direction
            if not obj.evaluate(candidate) > fx:
                return False
    return True


def verify_pne(obj, partition: Partition, x: Sequence[float], tolerance: float = 1e-8,
               seed: int = 0, box: Tuple[float, float] = DEFAULT_BOX) -> PneCertificate:
    """
    Check x against the PNE definition for every group of a partition.

    The gap of a group is f(best response) - f(x) (never positive); x is a
    PNE when no gap falls below -tolerance. A PNE is reported strict when
    unilateral probe deviations of every group strictly worsen f.

    Args:
        obj: Objective instance of dimension at most 16
        partition: Partition of the coordinates
        x: Point to check
        tolerance: Allowed improvement margin
        seed: Seed of the multistart and probe draws
        box: Search box of the best responses

    Returns:
        PneCertificate
    """
    x = np.asarray(x, dtype=float)
    if obj.dimension > MAX_VERIFY_DIMENSION:
        raise RejectedInputError(f"verification is limited to dimension {MAX_VERIFY_DIMENSION}")
    if partition.n != obj.dimension:
        raise RejectedInputError("partition and objective dimensions differ")
    require_valid(partition, allow_trivial=True)
    if x.shape != (obj.dimension,):
        raise RejectedInputError(f"point must have {obj.dimension} coordinates")

    fx = obj.evaluate(x)
    gaps, unbounded = [], False
    for g in range(partition.m):
        response = best_response(obj, partition, x, g, seed=seed + g, box=box)
        gaps.append(float(response.fitness - fx))
        unbounded = unbounded or response.unbounded

    is_pne = not unbounded and all(gap >= -tolerance for gap in gaps)
    is_strict = is_pne and all(
        is_strict_for_group(obj, partition, x, g, fx, seed=seed + g) for g in range(partition.m)
    )
    return PneCertificate(
        point=x.tolist(),
        partition=partition.as_lists(),
        tolerance=tolerance,
        is_pne=is_pne,
        is_strict=is_strict,
        per_group_gap=gaps,
        unbounded=unbounded,
    )


ORACLE_FUNCTIONS = ("f1", "f2", "f2_rotated", "f3", "f4", "schwefel221")


def closed_form_oracle(function_id: str, point: Sequence[float], partition: Partition,
                    atol: float = 1e-8) -> bool:
    """
    Exact membership test in the closed-form PNE set of a game function.

    f1, f2 and f2_rotated have the single PNE (0, 0), f3 has (1, 1), f4 has
    the line x = y (coordinate partition only). For schwefel221 a point is a
    PNE under any partition iff all group-wise maxima of |x_j| are equal.

    Args:
        function_id: One of ORACLE_FUNCTIONS
        point: Point to test
        partition: Partition the PNE is taken with respect to
        atol: Absolute tolerance of the equalities

    Returns:
        True if the point lies in the PNE set
    """
    if function_id not in ORACLE_FUNCTIONS:
        raise UnknownIdentifierError("oracle function", function_id, ORACLE_FUNCTIONS)
    point = np.asarray(point, dtype=float)

    if function_id == "schwefel221":
        if partition.n != point.shape[0]:
            raise RejectedInputError("partition and point dimensions differ")
        maxima = [float(np.max(np.abs(point[partition.indices(g)]))) for g in range(partition.m)]
        return max(maxima) - min(maxima) <= atol

    if point.shape != (2,) or not _is_coordinate_partition(partition, 2):
        raise RejectedInputError(f"{function_id} has a closed form only for the 2-d coordinate partition")
    if function_id == "f4":
        return bool(abs(point[0] - point[1]) <= atol)
    target = GAME_FUNCTIONS[function_id].optimum_point
    return bool(np.all(np.abs(point - np.array(target)) <= atol))


def check_downward_propagation(obj, p: Partition, p_refined: Partition, x: Sequence[float],
                               tolerance: float = 1e-8) -> bool:
    """
    A PNE for p must remain a PNE for any refinement of p.

    Returns:
        True unless x verifies for p but not for p_refined
    """
    if not is_refinement(p_refined, p):
        raise RejectedInputError("p_refined is not a refinement of p")
    coarse = verify_pne(obj, p, x, tolerance)
    if not coarse.is_pne:
        return True
    return verify_pne(obj, p_refined, x, tolerance).is_pne


class BestResponseTrace(NamedTuple):
    cycles: List[int]
    points: np.ndarray
    converged: bool
    total_cycles: int


def trace_best_response_dynamics(obj, partition: Partition, x0: Sequence[float],
                                 max_cycles: int, record_every: int = 1) -> BestResponseTrace:
    """
    Alternate exact best responses of the two players from x0.

    A cycle updates x and then y. The trace stops once a cycle moves the
    point by less than 1e-12 (max-norm) or after `max_cycles` cycles. Closed
    forms are used when the function has them, numeric best responses
    otherwise.

    Args:
        obj: Two-dimensional objective
        partition: The coordinate partition {{1},{2}}
        x0: Starting point
        max_cycles: Cycle cap
        record_every: Keep every k-th cycle (the first and last are always kept)

    Returns:
        BestResponseTrace
    """
    if obj.dimension != 2 or not _is_coordinate_partition(partition, 2):
        raise RejectedInputError("best-response traces need a 2-d coordinate partition")
    if record_every < 1:
        raise RejectedInputError("record_every must be positive")

    exact = EXACT_BEST_RESPONSES.get(obj.base_id)
    if exact is not None:
        respond_x, respond_y = exact
    else:
        def respond_x(y: float) -> float:
            return float(best_response(obj, partition, [x, y], 0).subvector[0])

        def respond_y(x_: float) -> float:
            return float(best_response(obj, partition, [x_, y], 1).subvector[0])

    x, y = float(x0[0]), float(x0[1])
    cycles, points = [0], [(x, y)]
    converged = False
    cycle = 0
    while cycle < max_cycles:
        cycle += 1
        new_x = respond_x(y)
        x_prev, y_prev = x, y
        x = new_x
        y = respond_y(x)
        if cycle % record_every == 0:
            cycles.append(cycle)
            points.append((x, y))
        if max(abs(x - x_prev), abs(y - y_prev)) < FIXED_POINT_MOVEMENT:
            converged = True
            break

    if cycles[-1] != cycle:
        cycles.append(cycle)
        points.append((x, y))
    logger.info(f"best-response trace on {obj.base_id}: {cycle} cycles, converged={converged}")
    return BestResponseTrace(cycles, np.array(points), converged, cycle)


def best_response_curve(obj, partition: Partition, group_index: int,
                        frozen_values: Sequence[float]) -> np.ndarray:
    """
    Best response of one player of a 2-d game against each frozen value of the other.

    Returns:
        Array of (x, y) points on the curve
    """
    if obj.dimension != 2 or not _is_coordinate_partition(partition, 2):
        raise RejectedInputError("best-response curves need a 2-d coordinate partition")
    exact = EXACT_BEST_RESPONSES.get(obj.base_id)
    curve = []
    for value in frozen_values:
        value = float(value)
        if exact is not None:
            response = exact[group_index](value)
        else:
            point = [0.0, value] if group_index == 0 else [value, 0.0]
            response = float(best_response(obj, partition, point, group_index).subvector[0])
        curve.append((response, value) if group_index == 0 else (value, response))
    return np.array(curve)

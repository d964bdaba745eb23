"""Benchmark functions, the rotation/shift wrapper and overlapping functions.

All ten base functions are minimized with optimum value 0. Instances wrap a
base function as ``f_base(R (x - s) + o)``, where ``o`` is the base's own
optimum (all zeros except for rosenbrock), so that ``x = s`` is always the
optimum of a shifted instance.
"""
import time
import logging
import threading
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from dcc_framework.exceptions import RejectedInputError, UnknownIdentifierError

logger = logging.getLogger(__name__)

INITIAL_RANGE = (-10.0, 10.0)


def sphere(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def cigar(x: np.ndarray) -> float:
    return float(x[0] ** 2 + 1e6 * np.dot(x[1:], x[1:]))


def discus(x: np.ndarray) -> float:
    return float(1e6 * x[0] ** 2 + np.dot(x[1:], x[1:]))


def cigar_discus(x: np.ndarray) -> float:
    middle = x[1:-1]
    return float(x[0] ** 2 + 1e4 * np.dot(middle, middle) + 1e6 * x[-1] ** 2)


def ellipsoid(x: np.ndarray) -> float:
    scales = np.power(10.0, 6.0 * np.linspace(0.0, 1.0, x.shape[0]))
    return float(np.dot(scales, x * x))


def different_powers(x: np.ndarray) -> float:
    exponents = 2.0 + 4.0 * np.linspace(0.0, 1.0, x.shape[0])
    return float(np.sum(np.power(np.abs(x), exponents)))


def schwefel221(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))


def step(x: np.ndarray) -> float:
    rounded = np.floor(x + 0.5)
    return float(np.dot(rounded, rounded))


def rosenbrock(x: np.ndarray) -> float:
    head, tail = x[:-1], x[1:]
    return float(100.0 * np.sum((head * head - tail) ** 2) + np.sum((head - 1.0) ** 2))


def schwefel12(x: np.ndarray) -> float:
    partial = np.cumsum(x)
    return float(np.dot(partial, partial))


BASE_FUNCTIONS: Dict[str, Callable[[np.ndarray], float]] = {
    "sphere": sphere,
    "cigar": cigar,
    "discus": discus,
    "cigar_discus": cigar_discus,
    "ellipsoid": ellipsoid,
    "different_powers": different_powers,
    "schwefel221": schwefel221,
    "step": step,
    "rosenbrock": rosenbrock,
    "schwefel12": schwefel12,
}

FUNCTION_IDS = tuple(BASE_FUNCTIONS)


def base_optimum(base_id: str, dimension: int) -> np.ndarray:
    """Documented optimum point of an unwrapped base function."""
    if base_id not in BASE_FUNCTIONS:
        raise UnknownIdentifierError("function", base_id, FUNCTION_IDS)
    if base_id == "rosenbrock":
        return np.ones(dimension)
    return np.zeros(dimension)


def random_rotation(rng: np.random.Generator, dimension: int) -> np.ndarray:
    """Orthogonal matrix from the QR orthonormalization of a Gaussian matrix."""
    gaussian = rng.standard_normal((dimension, dimension))
    q, r = np.linalg.qr(gaussian)
    # sign fix makes the distribution uniform over the orthogonal group
    return q * np.sign(np.diag(r))


def _frozen(array: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if array is None:
        return None
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


class OverlappingComponent:
    """One term f_b(R_i (x[idx_i] - s_i)) of an overlapping function."""

    def __init__(self, indices: np.ndarray, rotation: np.ndarray, shift: np.ndarray):
        self.indices = np.array(indices, dtype=int)
        self.indices.setflags(write=False)
        self.rotation = _frozen(rotation)
        self.shift = _frozen(shift)


class ObjectiveInstance:
    """A dimension-n objective with optional wrappers and a thread-safe counter.

    Everything except the evaluation counter is read-only after construction,
    so one instance can be shared by all workers.
    """

    def __init__(self, base_id: str, dimension: int,
                 base_function: Optional[Callable[[np.ndarray], float]] = None,
                 rotation: Optional[np.ndarray] = None,
                 shift: Optional[np.ndarray] = None,
                 known_optimum_value: Optional[float] = 0.0,
                 optimum_offset: Optional[np.ndarray] = None,
                 components: Optional[Sequence[OverlappingComponent]] = None,
                 optimum_point: Optional[np.ndarray] = None,
                 delay_seconds: float = 0.0):
        if dimension < 1:
            raise RejectedInputError("dimension must be positive")
        if base_function is None:
            if base_id not in BASE_FUNCTIONS:
                raise UnknownIdentifierError("function", base_id, FUNCTION_IDS)
            base_function = BASE_FUNCTIONS[base_id]
        self.base_id = base_id
        self.dimension = dimension
        self.rotation = _frozen(rotation)
        self.shift = _frozen(shift)
        self.optimum_offset = _frozen(optimum_offset)
        self.components = list(components) if components else None
        self.known_optimum_value = known_optimum_value
        self.delay_seconds = delay_seconds
        self._base = base_function
        self._optimum_point = _frozen(optimum_point)
        self._counter = 0
        self._lock = threading.Lock()

    @property
    def evaluation_counter(self) -> int:
        return self._counter

    @property
    def optimum_point(self) -> Optional[np.ndarray]:
        """A global minimizer when one is known, else None."""
        if self._optimum_point is not None:
            return self._optimum_point
        if self.components is not None:
            return None
        if self.shift is not None:
            return self.shift
        if self.base_id in BASE_FUNCTIONS:
            return base_optimum(self.base_id, self.dimension)
        return None

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Map x to the argument of the base function."""
        z = x - self.shift if self.shift is not None else x
        if self.rotation is not None:
            z = self.rotation @ z
        if self.optimum_offset is not None:
            z = z + self.optimum_offset
        return z

    def evaluate(self, x: Sequence[float]) -> float:
        """
        Evaluate the objective at x.

        Args:
            x: Point of length `dimension`

        Returns:
            Objective value
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise RejectedInputError(
                f"expected a point of dimension {self.dimension}, got shape {x.shape}"
            )
        with self._lock:
            self._counter += 1
        if self.delay_seconds:
            time.sleep(self.delay_seconds)

        if self.components is not None:
            return float(sum(
                self._base(c.rotation @ (x[c.indices] - c.shift)) for c in self.components
            ))
        return self._base(self.transform(x))

    __call__ = evaluate


def make_objective(base_id: str, dimension: int) -> ObjectiveInstance:
    """Unwrapped base function."""
    return ObjectiveInstance(base_id, dimension)


def make_rotated_shifted(base_id: str, dimension: int, seed: int) -> ObjectiveInstance:
    """
    Build a rotated and shifted instance of a base function.

    Args:
        base_id: One of FUNCTION_IDS
        dimension: Problem dimension (>= 2)
        seed: Non-negative seed; equal seeds give bit-identical instances

    Returns:
        ObjectiveInstance
    """
    if base_id not in BASE_FUNCTIONS:
        raise UnknownIdentifierError("function", base_id, FUNCTION_IDS)
    if dimension < 2:
        raise RejectedInputError("rotated-shifted instances need dimension >= 2")
    if seed < 0 or seed >= 2 ** 64:
        raise RejectedInputError("seed must be a 64-bit unsigned value")

    rng = np.random.default_rng(seed)
    rotation = random_rotation(rng, dimension)
    shift = rng.uniform(*INITIAL_RANGE, size=dimension)
    offset = base_optimum(base_id, dimension)
    return ObjectiveInstance(
        base_id, dimension,
        rotation=rotation,
        shift=shift,
        optimum_offset=offset if offset.any() else None,
    )


class OverlappingSpec(BaseModel):
    """Index sets (1-based) of the components of an overlapping function."""
    dimension: int = Field(ge=1)
    component_index_sets: List[List[int]]
    conforming: bool = True

    @property
    def num_components(self) -> int:
        return len(self.component_index_sets)

    def check(self):
        """Raise RejectedInputError unless the spec is well formed."""
        if not self.component_index_sets:
            raise RejectedInputError("an overlapping spec needs at least one component")
        covered = set()
        for indices in self.component_index_sets:
            if not indices:
                raise RejectedInputError("components must be nonempty")
            bad = [i for i in indices if not 1 <= i <= self.dimension]
            if bad:
                raise RejectedInputError(f"component index out of range: {bad}")
            if len(set(indices)) != len(indices):
                raise RejectedInputError("component indices must be distinct")
            covered.update(indices)
        if covered != set(range(1, self.dimension + 1)):
            raise RejectedInputError("components must cover every coordinate")
        if self.num_components > 1:
            sets = [set(c) for c in self.component_index_sets]
            overlapping = any(sets[i] & sets[j]
                              for i in range(len(sets)) for j in range(i + 1, len(sets)))
            if not overlapping:
                raise RejectedInputError("at least two components must share an index")


def build_overlapping_spec(dimension: int, num_components: int, overlap: int,
                           conforming: bool = True) -> OverlappingSpec:
    """
    Contiguous components of near-equal size, neighbours sharing `overlap` indices.

    Args:
        dimension: Problem dimension
        num_components: Number of components
        overlap: Indices shared by consecutive components

    Returns:
        OverlappingSpec
    """
    if num_components < 1 or overlap < 0:
        raise RejectedInputError("need num_components >= 1 and overlap >= 0")
    if num_components > 1 and overlap == 0:
        raise RejectedInputError("overlap must be positive with several components")
    total = dimension + overlap * (num_components - 1)
    sizes = [len(chunk) for chunk in np.array_split(np.arange(total), num_components)]
    if min(sizes) <= overlap:
        raise RejectedInputError("components too small for the requested overlap")

    index_sets, start = [], 0
    for size in sizes:
        index_sets.append(list(range(start + 1, start + size + 1)))
        start += size - overlap
    return OverlappingSpec(dimension=dimension, component_index_sets=index_sets,
                           conforming=conforming)


def make_overlapping(spec: OverlappingSpec, seed: int) -> ObjectiveInstance:
    """
    Sum of rotated-shifted Schwefel 1.2 terms over overlapping index sets.

    Conforming specs share one global shift, so the shifts agree on shared
    coordinates and the optimum value is 0. Conflicting specs draw a shift
    per component and their optimum value is left unknown.

    Args:
        spec: Component index sets
        seed: Seed for rotations and shifts

    Returns:
        ObjectiveInstance
    """
    spec.check()
    rng = np.random.default_rng(seed)
    index_arrays = [np.array(c, dtype=int) - 1 for c in spec.component_index_sets]
    rotations = [random_rotation(rng, len(idx)) for idx in index_arrays]

    if spec.conforming:
        global_shift = rng.uniform(*INITIAL_RANGE, size=spec.dimension)
        shifts = [global_shift[idx] for idx in index_arrays]
        known, optimum = 0.0, global_shift
    else:
        shifts = [rng.uniform(*INITIAL_RANGE, size=len(idx)) for idx in index_arrays]
        known, optimum = None, None

    components = [OverlappingComponent(idx, rot, sh)
                  for idx, rot, sh in zip(index_arrays, rotations, shifts)]
    return ObjectiveInstance(
        "overlapping", spec.dimension,
        base_function=schwefel12,
        components=components,
        known_optimum_value=known,
        optimum_point=optimum,
    )


def schwefel12_hessian(n: int) -> np.ndarray:
    """
    Exact Hessian of Schwefel's problem 1.2.

    Args:
        n: Dimension (>= 1)

    Returns:
        Integer matrix 2*M with M[i][j] = n + 1 - max(i, j) (1-based)
    """
    if n < 1:
        raise RejectedInputError("n must be positive")
    idx = np.arange(1, n + 1)
    return 2 * (n + 1 - np.maximum.outer(idx, idx))

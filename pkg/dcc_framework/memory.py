"""Memory management for optimizers: direction memory and run history."""
import time
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from storage.models import RunPoint, RunRecord, RunStatus

logger = logging.getLogger(__name__)


class DirectionMemory:
    """Bounded, time-stamped store of evolution-path vectors for LM-CMA."""

    def __init__(self, capacity: int, entries: Optional[Sequence[Tuple[int, np.ndarray]]] = None):
        """
        Initialize the memory.

        Args:
            capacity: Maximum number of stored paths
            entries: Optional initial (generation, path) pairs, oldest first
        """
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._stamps: List[int] = []
        self._paths: List[np.ndarray] = []
        for stamp, path in entries or ():
            self._stamps.append(int(stamp))
            self._paths.append(np.array(path, dtype=float))
        while len(self._paths) > capacity:
            self._evict()

    def __len__(self) -> int:
        return len(self._paths)

    @property
    def paths(self) -> List[np.ndarray]:
        """Stored paths, oldest first."""
        return list(self._paths)

    @property
    def stamps(self) -> List[int]:
        return list(self._stamps)

    def entries(self) -> List[Tuple[int, np.ndarray]]:
        return list(zip(self._stamps, self._paths))

    def remember(self, stamp: int, path: np.ndarray):
        """
        Append a path, evicting one older entry when the memory is full.

        Args:
            stamp: Generation at which the path was recorded
            path: Evolution-path vector
        """
        self._stamps.append(int(stamp))
        self._paths.append(np.array(path, dtype=float))
        if len(self._paths) > self.capacity:
            self._evict()

    def _evict(self):
        # The newest entry is never a candidate.
        if len(self._paths) <= 2:
            victim = 0
        else:
            gaps = [self._stamps[j] - self._stamps[j - 1]
                    for j in range(1, len(self._stamps) - 1)]
            victim = 1 + int(np.argmin(gaps))
        del self._stamps[victim]
        del self._paths[victim]

    def copy(self) -> "DirectionMemory":
        return DirectionMemory(self.capacity, [(s, p.copy()) for s, p in self.entries()])

    def __deepcopy__(self, memo):
        return self.copy()


class RunRecorder:
    """Collects the (evaluations, best_f, wall_ms) history of one run."""

    def __init__(self, function_id: str = "", algorithm: str = "", seed: int = 0,
                 fingerprint: str = ""):
        self.function_id = function_id
        self.algorithm = algorithm
        self.seed = seed
        self.fingerprint = fingerprint
        self.points: List[RunPoint] = []
        self._start = time.perf_counter()

    @property
    def elapsed_seconds(self) -> float:
        return time.perf_counter() - self._start

    def add_point(self, cycle: int, evaluations: int, best_f: float):
        """
        Record the state at a generation or cycle boundary.

        Rows that neither add evaluations nor change anything are skipped so
        the series keeps strictly increasing evaluation counts.

        Args:
            cycle: Generation or cycle index
            evaluations: Total evaluations so far
            best_f: Best-so-far fitness
        """
        if self.points and evaluations <= self.points[-1].evaluations:
            return
        if self.points:
            best_f = min(best_f, self.points[-1].best_f)
        self.points.append(RunPoint(
            cycle=cycle,
            evaluations=evaluations,
            best_f=float(best_f),
            wall_ms=self.elapsed_seconds * 1000.0,
        ))

    def finish(self, status: RunStatus, best_x: Optional[np.ndarray] = None) -> RunRecord:
        """
        Close the run.

        Args:
            status: Final status
            best_x: Best-so-far solution

        Returns:
            RunRecord
        """
        logger.info(
            f"{self.algorithm} on {self.function_id} (seed {self.seed}) finished: "
            f"{status}, best_f={self.points[-1].best_f if self.points else float('inf'):.3e}"
        )
        return RunRecord(
            fingerprint=self.fingerprint,
            function_id=self.function_id,
            algorithm=self.algorithm,
            seed=self.seed,
            status=status,
            series=list(self.points),
            best_x=None if best_x is None else [float(v) for v in best_x],
        )

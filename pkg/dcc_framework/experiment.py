"""Benchmark experiments: build instances, run an algorithm per seed, store records."""
import logging
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from analysis.game_analysis import GAME_FUNCTIONS, make_game_objective
from dcc_framework.exceptions import UnknownIdentifierError
from dcc_framework.memory import RunRecorder
from dcc_framework.utils import Settings, config_fingerprint
from dcc_framework.workflow import run_dcc
from optimizers.cc_engine import run_cc
from optimizers.lmcma import run_lmcma
from optimizers.subspace_cma import run_cma
from problems.objective import FUNCTION_IDS, ObjectiveInstance, make_objective, make_rotated_shifted
from problems.partitioning import parse_partition
from storage.models import (
    ALGORITHM_IDS, CcConfig, CmaConfig, DccConfig, ExperimentConfig, LmcmaConfig, RunRecord,
)
from storage.record_store import RecordStore

logger = logging.getLogger(__name__)

FUNCTION_CHOICES = tuple(FUNCTION_IDS) + tuple(GAME_FUNCTIONS)


def build_objective(function_id: str, dimension: int, seed: int,
                    rotate_shift: bool = True) -> ObjectiveInstance:
    """
    Objective instance of an experiment for one seed.

    Args:
        function_id: Benchmark or game function id
        dimension: Dimension (ignored for game functions)
        seed: Seed of the rotation and shift
        rotate_shift: Wrap benchmark functions with a rotation and shift

    Returns:
        ObjectiveInstance
    """
    if function_id in GAME_FUNCTIONS:
        return make_game_objective(function_id)
    if function_id not in FUNCTION_IDS:
        raise UnknownIdentifierError("function", function_id, FUNCTION_CHOICES)
    if rotate_shift:
        return make_rotated_shifted(function_id, dimension, seed)
    return make_objective(function_id, dimension)


def _run_one(config: ExperimentConfig, obj: ObjectiveInstance, seed: int,
             recorder: RunRecorder, settings: Settings) -> RunRecord:
    options: Dict[str, Any] = dict(config.algorithm_config)
    termination = config.termination()
    rng = np.random.default_rng(seed)

    if config.algorithm == "cma":
        return run_cma(obj, CmaConfig(**options), termination, rng, recorder=recorder)
    if config.algorithm == "lmcma":
        return run_lmcma(obj, LmcmaConfig(**options), termination, rng, recorder=recorder)
    if config.algorithm == "cc":
        literal = options.pop("partition", None)
        partition = parse_partition(literal, obj.dimension) if literal else None
        return run_cc(obj, partition, CcConfig(**options), termination, rng, recorder=recorder)
    if settings.max_workers and "max_workers" not in options:
        options["max_workers"] = settings.max_workers
    return run_dcc(obj, DccConfig(**options), termination, rng, recorder=recorder)


def run_experiment(config: ExperimentConfig, settings: Optional[Settings] = None,
                   store: Optional[RecordStore] = None) -> List[RunRecord]:
    """
    Run the configured algorithm once per seed.

    Args:
        config: Experiment configuration
        settings: Process settings (progress bar, output directory)
        store: Where to save records; `config.output_path` is used when omitted

    Returns:
        One RunRecord per seed, in seed order
    """
    settings = settings or Settings(progress=False)
    if config.algorithm not in ALGORITHM_IDS:
        raise UnknownIdentifierError("algorithm", config.algorithm, ALGORITHM_IDS)
    if config.function_id not in FUNCTION_CHOICES:
        raise UnknownIdentifierError("function", config.function_id, FUNCTION_CHOICES)
    if store is None and config.output_path:
        store = RecordStore(config.output_path)

    fingerprint = config_fingerprint(config)
    logger.info(f"experiment {fingerprint}: {config.algorithm} on {config.function_id} "
                f"(n={config.dimension}, seeds={config.seeds})")

    records = []
    for seed in tqdm(config.seeds, desc=f"{config.algorithm}/{config.function_id}",
                     disable=not settings.progress):
        obj = build_objective(config.function_id, config.dimension, seed, config.rotate_shift)
        recorder = RunRecorder(function_id=config.function_id, algorithm=config.algorithm,
                               seed=seed, fingerprint=fingerprint)
        record = _run_one(config, obj, seed, recorder, settings)
        if store is not None:
            store.save_record(record)
        records.append(record)
    return records

"""Utility functions for the optimization framework."""
import os
import json
import hashlib
import logging
from typing import Dict, Any, List, Optional, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel

from dcc_framework.exceptions import RejectedInputError

try:
    import tomllib as toml_reader
except ImportError:  # Python < 3.11
    import tomli as toml_reader

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    """Process-level settings read from the environment (and `.env`)."""
    log_level: str = "INFO"
    log_file: Optional[str] = None
    output_dir: str = "./results"
    progress: bool = True
    max_workers: Optional[int] = None


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """
    Configure root logging for command-line runs.

    Args:
        level: Log level name
        log_file: Optional path of an additional log file
    """
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        ensure_directory_exists(os.path.dirname(log_file))
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def get_env_variable(key: str, default: Optional[str] = None) -> Optional[str]:
    """
    Get an environment variable.

    Args:
        key: Environment variable key
        default: Default value if not found

    Returns:
        Environment variable value or default
    """
    return os.environ.get(key, default)


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Build the settings object, loading a `.env` file first if present.

    Args:
        env_file: Explicit dotenv path; the nearest `.env` is used otherwise

    Returns:
        Settings
    """
    load_dotenv(env_file)

    max_workers = get_env_variable("BENCH_MAX_WORKERS")
    return Settings(
        log_level=get_env_variable("BENCH_LOG_LEVEL", "INFO"),
        log_file=get_env_variable("BENCH_LOG_FILE") or None,
        output_dir=get_env_variable("BENCH_OUTPUT_DIR", "./results"),
        progress=get_env_variable("BENCH_PROGRESS", "1") not in ("0", "false", "no"),
        max_workers=int(max_workers) if max_workers else None,
    )


def ensure_directory_exists(directory_path: str):
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        directory_path: Path to the directory
    """
    if directory_path and not os.path.exists(directory_path):
        os.makedirs(directory_path, exist_ok=True)


def load_json_file(file_path: str) -> Dict[str, Any]:
    """
    Load data from a JSON file.

    Args:
        file_path: Path to the JSON file

    Returns:
        Dictionary containing the data
    """
    try:
        with open(file_path, 'r') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading JSON file {file_path}: {e}")
        raise RejectedInputError(f"cannot read JSON file {file_path}: {e}") from e


def load_config_file(file_path: str) -> Dict[str, Any]:
    """
    Load a configuration mapping from a JSON or TOML file.

    Args:
        file_path: Path ending in `.json` or `.toml`

    Returns:
        Dictionary containing the configuration
    """
    if file_path.endswith(".toml"):
        try:
            with open(file_path, 'rb') as f:
                return toml_reader.load(f)
        except (OSError, toml_reader.TOMLDecodeError) as e:
            logger.error(f"Error loading TOML file {file_path}: {e}")
            raise RejectedInputError(f"cannot read TOML file {file_path}: {e}") from e
    return load_json_file(file_path)


def config_fingerprint(config: BaseModel) -> str:
    """
    Hash a configuration model.

    Args:
        config: Any pydantic model

    Returns:
        Hex SHA-256 digest of the canonical JSON dump (first 16 chars)
    """
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def spawn_worker_rngs(source: Union[int, np.random.Generator], count: int) -> List[np.random.Generator]:
    """
    Split a master seed or generator into independent per-worker generators.

    Args:
        source: Master seed or master generator
        count: Number of streams

    Returns:
        List of generators; stream i depends only on (source, i)
    """
    if isinstance(source, np.random.Generator):
        return source.spawn(count)
    children = np.random.SeedSequence(source).spawn(count)
    return [np.random.default_rng(child) for child in children]

import os
import json
import shutil
import hashlib
import logging

import numpy as np
import pandas as pd

from rkhs_tools.errors import StageMissing


def ensure_clean_dir(directory_path: str) -> None:
    """Ensure directory exists and is empty.

    - Creates the directory if missing.
    - Removes all files, symlinks, and subdirectories if it exists.
    - Logs warnings for entries that cannot be deleted.
    """
    os.makedirs(directory_path, exist_ok=True)
    logger = logging.getLogger(__name__)
    with os.scandir(directory_path) as it:
        for entry in it:
            path = entry.path
            try:
                if entry.is_file() or entry.is_symlink():
                    os.unlink(path)
                elif entry.is_dir():
                    shutil.rmtree(path)
            except Exception as exc:
                logger.warning("Failed to delete %s: %s", path, exc)


def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(data) -> str:
    """Canonical JSON: sorted keys, fixed indentation, numpy scalars unwrapped."""
    return json.dumps(data, sort_keys=True, indent=2, default=_to_builtin)


def write_json(path: str, data) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(data))
        f.write("\n")
    logging.getLogger(__name__).debug("Wrote %s", path)
    return path


def read_json(path: str, stage: str):
    """Load an artifact written by ``stage``; raises ``StageMissing`` when absent."""
    if not os.path.exists(path):
        raise StageMissing(stage, path)
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False, float_format="%.17g")
    logging.getLogger(__name__).debug("Wrote %s (%d rows)", path, len(frame))
    return path


def read_csv(path: str, stage: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise StageMissing(stage, path)
    return pd.read_csv(path)


def write_columns(path: str, header: dict, **arrays) -> str:
    """``numpy.savez`` archive with a JSON header entry."""
    np.savez(path, header=np.array(dumps(header)), **arrays)
    logging.getLogger(__name__).debug("Wrote %s (%s)", path, ", ".join(sorted(arrays)))
    return path


def read_columns(path: str, stage: str) -> tuple[dict, dict[str, np.ndarray]]:
    if not os.path.exists(path):
        raise StageMissing(stage, path)
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        arrays = {key: archive[key] for key in archive.files if key != "header"}
    return header, arrays


def config_hash(config: dict, version: str) -> str:
    """SHA-256 of the canonical config JSON and the package version."""
    digest = hashlib.sha256(dumps(config).encode("utf-8"))
    digest.update(version.encode("utf-8"))
    return digest.hexdigest()

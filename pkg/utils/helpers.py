"""
Utility functions for the SimDiff forecaster.
"""
import os
import json
import hashlib
from typing import Any, Optional

import numpy as np


def get_file_hash(file_path: str, algorithm: str = 'sha256') -> Optional[str]:
    """Calculate hash of a file."""
    if not os.path.exists(file_path):
        return None

    hash_func = hashlib.new(algorithm)

    try:
        with open(file_path, 'rb') as f:
            for chunk in iter(lambda: f.read(4096), b""):
                hash_func.update(chunk)
        return hash_func.hexdigest()
    except (OSError, IOError):
        return None


def fingerprint(payload: Any, algorithm: str = 'sha256') -> str:
    """Hash of the canonical JSON form of ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.new(algorithm, canonical.encode('utf-8')).hexdigest()


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the counter ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def ensure_dir(path: str) -> str:
    """Create ``path`` if needed and return it."""
    os.makedirs(path, exist_ok=True)
    return path

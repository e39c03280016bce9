"""
Checkpoint management for trained forecasters.

A checkpoint is an ``.npz`` archive holding every parameter as little-endian
float64 plus a ``__meta__`` entry with the JSON-encoded configuration,
fingerprint and channel count. An index file next to the checkpoints records
what was saved and when.
"""
import os
import json
import zipfile
from datetime import datetime
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np

from config import DenoiserConfig, RunConfig, TrainConfig
from models.forecaster import SimDiffForecaster
from utils.exceptions import ArtifactMismatchError, CheckpointError
from utils.helpers import get_file_hash

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'simdiff-checkpoint/1'
META_KEY = '__meta__'


class CheckpointManager:
    """Saves, loads and indexes forecaster checkpoints."""

    def __init__(self, index_file: Optional[str] = None):
        self.index_file = index_file

    # index ------------------------------------------------------------------
    def _index_path(self, checkpoint_path: str) -> str:
        if self.index_file is not None:
            return self.index_file
        return os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), 'checkpoints.json')

    def load_index(self, index_path: str) -> Dict[str, Any]:
        """Load the checkpoint index from JSON."""
        if os.path.exists(index_path):
            try:
                with open(index_path, 'r') as f:
                    return json.load(f)
            except (json.JSONDecodeError, FileNotFoundError) as e:
                logger.error(f"Error loading checkpoint index: {e}")
                return {"checkpoints": []}
        return {"checkpoints": []}

    def save_index(self, index_path: str, index: Dict[str, Any]) -> bool:
        try:
            with open(index_path, 'w') as f:
                json.dump(index, f, indent=2)
            return True
        except OSError as e:
            logger.error(f"Error saving checkpoint index: {e}")
            return False

    def get_file_info(self, file_path: str) -> Dict[str, Any]:
        """Size, modification date and content hash of a checkpoint file."""
        try:
            file_size = os.path.getsize(file_path)
            file_modified = datetime.fromtimestamp(os.path.getmtime(file_path)).isoformat()
            return {
                'size': file_size,
                'size_mb': round(file_size / (1024 * 1024), 2),
                'modified_date': file_modified,
                'sha256': get_file_hash(file_path),
            }
        except OSError as e:
            logger.error(f"Error getting file info for {file_path}: {e}")
            return {}

    def _register(self, path: str, meta: Dict[str, Any]) -> Dict[str, Any]:
        index_path = self._index_path(path)
        index = self.load_index(index_path)
        entry = {
            'filename': os.path.basename(path),
            'path': os.path.abspath(path),
            'fingerprint': meta['fingerprint'],
            'n_channels': meta['n_channels'],
            'saved_date': datetime.now().isoformat(),
            **self.get_file_info(path),
        }
        entries = [e for e in index.get('checkpoints', []) if e.get('path') != entry['path']]
        entries.append(entry)
        index = {'checkpoints': entries, 'last_updated': entry['saved_date'], 'count': len(entries)}
        self.save_index(index_path, index)
        return entry

    # save / load -------------------------------------------------------------
    def save(self, forecaster: SimDiffForecaster, run_config: RunConfig, path: str,
             extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Write ``forecaster`` to ``path`` and record it in the index."""
        meta = {
            'format': CHECKPOINT_FORMAT,
            'fingerprint': run_config.model_fingerprint(forecaster.n_channels),
            'n_channels': forecaster.n_channels,
            'denoiser': forecaster.denoiser_config.model_dump(),
            'train': forecaster.train_config.model_dump(),
            **(extra or {}),
        }
        arrays = {name: value.astype('<f8') for name, value in forecaster.state_dict().items()}
        arrays[META_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode('utf-8'), dtype=np.uint8)

        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'wb') as f:
            np.savez(f, **arrays)
        entry = self._register(path, meta)
        logger.info(f"Saved checkpoint {path} ({entry.get('size_mb', '?')} MB, fingerprint {meta['fingerprint'][:12]})")
        return entry

    def read(self, path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        """Raw parameter arrays and metadata of a checkpoint."""
        if not os.path.isfile(path):
            raise CheckpointError(f"Checkpoint not found: {path}")
        try:
            with open(path, 'rb') as f, np.load(f, allow_pickle=False) as archive:
                arrays = {name: archive[name] for name in archive.files}
        except (OSError, ValueError, zipfile.BadZipFile) as e:
            raise CheckpointError(f"Checkpoint {path} is not a readable archive: {e}") from e
        if META_KEY not in arrays:
            raise CheckpointError(f"Checkpoint {path} has no metadata entry")
        try:
            meta = json.loads(arrays.pop(META_KEY).tobytes().decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"Checkpoint {path} has corrupt metadata: {e}") from e
        if meta.get('format') != CHECKPOINT_FORMAT:
            raise CheckpointError(f"Checkpoint {path} has unsupported format {meta.get('format')!r}")
        return arrays, meta

    def load(self, path: str, run_config: Optional[RunConfig] = None,
             n_channels: Optional[int] = None) -> Tuple[SimDiffForecaster, Dict[str, Any]]:
        """Rebuild the forecaster stored at ``path``.

        When ``run_config`` is given its model fingerprint must match the stored
        one, otherwise ``ArtifactMismatchError`` is raised.
        """
        arrays, meta = self.read(path)
        stored_channels = int(meta['n_channels'])
        if n_channels is not None and n_channels != stored_channels:
            raise ArtifactMismatchError(f"Checkpoint {path} was trained on {stored_channels} channels, "
                                        f"dataset has {n_channels}")
        if run_config is not None:
            expected = run_config.model_fingerprint(stored_channels)
            if expected != meta['fingerprint']:
                raise ArtifactMismatchError(
                    f"Checkpoint {path} does not match the run configuration "
                    f"(stored fingerprint {meta['fingerprint'][:12]}, config {expected[:12]})")

        forecaster = SimDiffForecaster(DenoiserConfig.model_validate(meta['denoiser']),
                                       TrainConfig.model_validate(meta['train']), stored_channels)
        forecaster.load_state_dict(arrays)
        forecaster.eval()
        logger.info(f"Loaded checkpoint {path} ({len(arrays)} parameter arrays)")
        return forecaster, meta

    def checkpoint_exists(self, path: str) -> bool:
        return os.path.isfile(path)

import os

import pandas as pd

from slip_perception.errors import DataError


def resolve_path(path):
    return os.path.abspath(os.path.expanduser(path))


def validate_manifest_splits(manifest: pd.DataFrame, required, manifest_path=''):
    """Every required split must list at least one episode."""
    present = set(manifest['split'])
    for split in required:
        if split not in present:
            raise DataError(f'the dataset manifest {manifest_path} has no {split} split')
    duplicated = manifest['episode_id'][manifest['episode_id'].duplicated()]
    if not duplicated.empty:
        raise DataError(f'episodes {sorted(set(duplicated))} appear more than once in {manifest_path}')

"""Episode directories and NDJSON frames.

An episode directory holds one record file per modality plus `episode.json`.
A record file is little-endian: a header

    magic 'SLIP' | version u16 | modality u8 | dtype u8 | ndim u8 | ndim x dim u32

followed by fixed-size records of a float64 timestamp and the payload.
"""
import json
import os
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from slip_perception.constants import (
    Condition, DATASET_MANIFEST_FILE_NAME, DTYPE_CODES, EPISODE_FORMAT_VERSION, EPISODE_MAGIC,
    EPISODE_MANIFEST_FILE_NAME, Modality, MODALITY_ORDER, STREAM_FILE_SUFFIX,
)
from slip_perception.errors import DataError, ShapeMismatchError
from slip_perception.pipeline.streamsync import SensorFrame, StreamSet

_HEADER = np.dtype([('magic', 'S4'), ('version', '<u2'), ('modality', 'u1'), ('dtype', 'u1'), ('ndim', 'u1')])
_DTYPE_TO_CODE = {np.dtype(v).str: k for k, v in DTYPE_CODES.items()}
MANIFEST_COLUMNS = ['episode_id', 'path', 'split', 'condition', 'object', 'pattern', 'seed']


class EpisodeManifest(BaseModel):
    episode_id: str
    condition: Condition
    object: str = ''
    pattern: str = ''
    seed: int = 0
    drop_time: Optional[float] = None
    start_time: float = 0.0
    duration: float = 0.0
    format_version: int = EPISODE_FORMAT_VERSION
    streams: Dict[str, str] = {}

    class Config:
        extra = 'forbid'


def _record_dtype(dtype: np.dtype, shape: Tuple[int, ...]) -> np.dtype:
    return np.dtype([('timestamp', '<f8'), ('payload', dtype, shape)])


def write_stream(path: str, modality: Modality, frames: List[SensorFrame], dtype=None):
    if not frames:
        raise DataError(f'refusing to write an empty {Modality(modality).value} stream to {path}')
    shape = frames[0].payload.shape
    dtype = np.dtype(dtype or frames[0].payload.dtype).newbyteorder('<')
    if dtype.str not in _DTYPE_TO_CODE:
        raise DataError(f'dtype {dtype} has no record code')
    header = np.zeros(1, dtype=_HEADER)
    header['magic'] = EPISODE_MAGIC
    header['version'] = EPISODE_FORMAT_VERSION
    header['modality'] = MODALITY_ORDER.index(Modality(modality))
    header['dtype'] = _DTYPE_TO_CODE[dtype.str]
    header['ndim'] = len(shape)
    records = np.zeros(len(frames), dtype=_record_dtype(dtype, shape))
    for i, frame in enumerate(frames):
        if frame.payload.shape != shape:
            raise ShapeMismatchError(f'{Modality(modality).value} frame {i} has shape {frame.payload.shape}, expected {shape}')
        records[i]['timestamp'] = frame.timestamp
        records[i]['payload'] = frame.payload
    with open(path, 'wb') as f:
        f.write(header.tobytes())
        f.write(np.asarray(shape, dtype='<u4').tobytes())
        f.write(records.tobytes())


def read_stream(path: str) -> Tuple[Modality, List[SensorFrame]]:
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < _HEADER.itemsize or raw[:4] != EPISODE_MAGIC:
        raise DataError(f'{path} is not a SLIP record file')
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if int(header['version']) != EPISODE_FORMAT_VERSION:
        raise DataError(f'{path} has record format version {int(header["version"])}, expected {EPISODE_FORMAT_VERSION}')
    try:
        modality = MODALITY_ORDER[int(header['modality'])]
        dtype = np.dtype(DTYPE_CODES[int(header['dtype'])])
    except (IndexError, KeyError) as e:
        raise DataError(f'{path} has an unknown modality or dtype code') from e
    ndim = int(header['ndim'])
    offset = _HEADER.itemsize
    shape = tuple(int(s) for s in np.frombuffer(raw, dtype='<u4', count=ndim, offset=offset))
    offset += 4 * ndim
    record = _record_dtype(dtype, shape)
    if (len(raw) - offset) % record.itemsize:
        raise DataError(f'{path} is truncated: {len(raw) - offset} payload bytes are not a multiple of {record.itemsize}')
    records = np.frombuffer(raw, dtype=record, offset=offset)
    frames = [SensorFrame(modality, float(r['timestamp']), np.array(r['payload'])) for r in records]
    return modality, frames


def write_episode(out_dir: str, streams: StreamSet, manifest: EpisodeManifest, dtypes: Dict[Modality, str] = None):
    os.makedirs(out_dir, exist_ok=True)
    dtypes = dtypes or {}
    files = {}
    for modality in MODALITY_ORDER:
        frames = streams.streams.get(modality)
        if not frames:
            continue
        file_name = f'{modality.value}{STREAM_FILE_SUFFIX}'
        write_stream(os.path.join(out_dir, file_name), modality, frames, dtypes.get(modality))
        files[modality.value] = file_name
    manifest = manifest.copy(update={'streams': files})
    with open(os.path.join(out_dir, EPISODE_MANIFEST_FILE_NAME), 'w', encoding='utf-8') as f:
        f.write(manifest.json(indent=2))


def read_episode(path: str) -> Tuple[StreamSet, EpisodeManifest]:
    manifest_path = os.path.join(path, EPISODE_MANIFEST_FILE_NAME)
    if not os.path.isfile(manifest_path):
        raise DataError(f'{path} has no {EPISODE_MANIFEST_FILE_NAME}')
    try:
        manifest = EpisodeManifest.parse_file(manifest_path)
    except ValidationError as e:
        raise DataError(f'{manifest_path} is invalid: {e}') from e
    streams = {}
    for name, file_name in manifest.streams.items():
        modality, frames = read_stream(os.path.join(path, file_name))
        if modality.value != name:
            raise DataError(f'{file_name} in {path} holds {modality.value} frames, the manifest says {name}')
        streams[modality] = frames
    stream_set = StreamSet(
        episode_id=manifest.episode_id, condition=manifest.condition, streams=streams,
        drop_time=manifest.drop_time, start_time=manifest.start_time,
    )
    return stream_set, manifest


def frame_to_record(frame: SensorFrame) -> dict:
    return {
        'modality': frame.modality.value,
        'timestamp': frame.timestamp,
        'shape': list(frame.payload.shape),
        'payload': frame.payload.ravel().tolist(),
    }


def parse_frame_line(line: str) -> SensorFrame:
    try:
        record = json.loads(line)
        return SensorFrame.from_flat(record['modality'], record['timestamp'], record['shape'], record['payload'])
    except ShapeMismatchError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f'malformed frame record: {e}') from e


def episode_to_ndjson(streams: StreamSet) -> Iterator[str]:
    """Frames of every modality as NDJSON lines, ordered by timestamp then modality order."""
    frames = [
        (frame.timestamp, MODALITY_ORDER.index(modality), i, frame)
        for modality, stream in streams.streams.items()
        for i, frame in enumerate(stream)
    ]
    for *_, frame in sorted(frames, key=lambda item: item[:3]):
        yield json.dumps(frame_to_record(frame))


def write_manifest(rows: List[dict], out_dir: str) -> str:
    path = os.path.join(out_dir, DATASET_MANIFEST_FILE_NAME)
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, sep='\t', index=False)
    return path


def read_manifest(path: str) -> pd.DataFrame:
    if os.path.isdir(path):
        path = os.path.join(path, DATASET_MANIFEST_FILE_NAME)
    if not os.path.isfile(path):
        raise DataError(f'dataset manifest {path} does not exist')
    manifest = pd.read_csv(path, sep='\t', dtype={'seed': 'uint64', 'pattern': str}, keep_default_na=False)
    missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
    if missing:
        raise DataError(f'dataset manifest {path} lacks columns {missing}')
    base = os.path.dirname(os.path.abspath(path))
    manifest['path'] = [p if os.path.isabs(p) else os.path.join(base, p) for p in manifest['path']]
    return manifest

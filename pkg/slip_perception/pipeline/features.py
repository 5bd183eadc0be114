"""Per-episode feature extraction: synchronized, labeled ticks carrying MFCC vectors."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import pandas as pd

from slip_perception.constants import Condition, Label
from slip_perception.errors import DataError
from slip_perception.pipeline.dsp import MfccConfig, mfcc
from slip_perception.pipeline.episode_io import read_episode
from slip_perception.pipeline.streamsync import StreamSet, SyncConfig, SyncedSample, label_ticks, synchronize


@dataclass
class EpisodeFeatures:
    episode_id: str
    condition: Condition
    object_name: str
    pattern: str
    split: str
    samples: List[SyncedSample]


def attach_mfcc(samples: Sequence[SyncedSample], config: MfccConfig) -> List[SyncedSample]:
    return [
        replace(s, mfcc=mfcc(s.audio, config, s.tick_time).coefficients) if s.mfcc is None else s
        for s in samples
    ]


def extract_features(streams: StreamSet, sync: SyncConfig, mfcc_config: MfccConfig) -> List[SyncedSample]:
    samples = synchronize(streams, sync)
    samples = label_ticks(samples, streams.drop_time, sync.abnormal_window)
    return attach_mfcc(samples, mfcc_config)


def load_episode(row, sync: SyncConfig, mfcc_config: MfccConfig) -> EpisodeFeatures:
    streams, manifest = read_episode(row.path)
    samples = extract_features(streams, sync, mfcc_config)
    return EpisodeFeatures(
        episode_id=manifest.episode_id,
        condition=manifest.condition,
        object_name=manifest.object,
        pattern=manifest.pattern,
        split=row.split,
        samples=samples,
    )


def load_split(manifest: pd.DataFrame, split: str, sync: SyncConfig, mfcc_config: MfccConfig,
               workers: int = 1) -> List[EpisodeFeatures]:
    """Episodes of one split in manifest order."""
    rows = list(manifest[manifest['split'] == split].itertuples(index=False))
    if not rows:
        raise DataError(f'the dataset manifest has no {split} split')
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda row: load_episode(row, sync, mfcc_config), rows))


def collect(episodes: Sequence[EpisodeFeatures], normal_only: bool = False) -> Tuple[List[SyncedSample], pd.DataFrame]:
    """Flattened ticks plus a frame of their episode metadata, row-aligned."""
    samples, meta = [], []
    for episode in episodes:
        for sample in episode.samples:
            if normal_only and sample.label != Label.NORMAL:
                continue
            samples.append(sample)
            meta.append({
                'episode_id': episode.episode_id,
                'condition': episode.condition.value,
                'object': episode.object_name,
                'pattern': episode.pattern,
                'tick_time': sample.tick_time,
                'label': sample.label.value,
            })
    return samples, pd.DataFrame(meta, columns=['episode_id', 'condition', 'object', 'pattern', 'tick_time', 'label'])

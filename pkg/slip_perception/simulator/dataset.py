import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, validator

from slip_perception.constants import Condition, MovingPattern, OBJECT_PRESETS
from slip_perception.errors import ConfigError
from slip_perception.pipeline.episode_io import EpisodeManifest, write_episode, write_manifest
from slip_perception.simulator.scenario import ScenarioConfig, SimulatorConfig, generate_episode

SPLITS = ('train', 'val', 'eval')


class DatasetConfig(BaseModel):
    n_per_cell: int = 6
    split: Tuple[float, float, float] = (0.55, 0.18, 0.27)
    conditions: List[Condition] = list(Condition)
    objects: List[str] = list(OBJECT_PRESETS)
    patterns: List[MovingPattern] = list(MovingPattern)

    class Config:
        extra = 'forbid'

    @validator('n_per_cell')
    def _count(cls, v):
        if v <= 0:
            raise ValueError('n_per_cell must be at least 1')
        return v

    @validator('split')
    def _ratios(cls, v):
        if any(r < 0 for r in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f'split ratios must be non-negative and sum to 1, got {v}')
        return v

    @validator('conditions', 'objects', 'patterns')
    def _non_empty(cls, v):
        if not v:
            raise ValueError('must name at least one entry')
        return v


@dataclass(frozen=True)
class PlannedEpisode:
    episode_id: str
    split: str
    condition: Condition
    object_name: str
    pattern: MovingPattern
    seed: int


def split_sizes(total: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder rounding; ties go to the earlier split."""
    quotas = np.asarray(ratios, dtype=np.float64) * total
    sizes = np.floor(quotas + 1e-9).astype(int)
    remainders = quotas - sizes
    for i in sorted(range(len(ratios)), key=lambda k: (-remainders[k], k))[:total - int(sizes.sum())]:
        sizes[i] += 1
    return sizes.tolist()


def episode_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def scene_seed_for(seed: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(0,)).generate_state(1, dtype=np.uint64)[0])


def plan_dataset(config: DatasetConfig, seed: int) -> List[PlannedEpisode]:
    """Full factorial over conditions x objects x patterns x repetitions, split disjointly by episode."""
    unknown = [o for o in config.objects if o not in OBJECT_PRESETS]
    if unknown:
        raise ConfigError(f'unknown object presets {unknown}')
    cells = [
        (condition, obj, pattern, rep)
        for condition in config.conditions
        for obj in config.objects
        for pattern in config.patterns
        for rep in range(config.n_per_cell)
    ]
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(cells))
    sizes = split_sizes(len(cells), config.split)
    split_of = {}
    start = 0
    for name, size in zip(SPLITS, sizes):
        for position in order[start:start + size]:
            split_of[int(position)] = name
        start += size
    return [
        PlannedEpisode(
            episode_id=f'{condition.value}-{obj}-{pattern.value}-{rep:03d}',
            split=split_of[i],
            condition=condition,
            object_name=obj,
            pattern=pattern,
            seed=episode_seed(seed, i),
        )
        for i, (condition, obj, pattern, rep) in enumerate(cells)
    ]


def scenario_for(planned: PlannedEpisode, simulator: SimulatorConfig, scene_seed: int) -> ScenarioConfig:
    return ScenarioConfig(
        **simulator.dict(),
        seed=planned.seed, scene_seed=scene_seed, object_name=planned.object_name,
        condition=planned.condition, pattern=planned.pattern,
    )


def _write_one(planned: PlannedEpisode, simulator: SimulatorConfig, scene_seed: int, out_dir: str) -> dict:
    cfg = scenario_for(planned, simulator, scene_seed)
    episode = generate_episode(cfg, planned.episode_id)
    relative = os.path.join('episodes', planned.episode_id)
    manifest = EpisodeManifest(
        episode_id=planned.episode_id, condition=planned.condition, object=planned.object_name,
        pattern=planned.pattern.value, seed=planned.seed, drop_time=episode.drop_time, duration=cfg.duration,
    )
    write_episode(os.path.join(out_dir, relative), episode.streams, manifest)
    return {
        'episode_id': planned.episode_id, 'path': relative, 'split': planned.split,
        'condition': planned.condition.value, 'object': planned.object_name, 'pattern': planned.pattern.value,
        'seed': planned.seed,
    }


def generate_dataset(config: DatasetConfig, simulator: SimulatorConfig, seed: int, out_dir: str,
                     workers: int = 1) -> str:
    """Writes every planned episode below `out_dir` and returns the manifest path."""
    plan = plan_dataset(config, seed)
    scene_seed = scene_seed_for(seed)
    os.makedirs(out_dir, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda p: _write_one(p, simulator, scene_seed, out_dir), plan))
    return write_manifest(rows, out_dir)

"""Alignment of raw per-modality streams onto a common clock.

Every modality is resampled to the tick grid by picking the frame nearest to
each tick. A frame further than the hold tolerance from its tick is not used;
the modality then keeps the value it had on the previous tick.
"""
import bisect
import heapq
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, validator

from slip_perception.constants import (
    ABNORMAL_WINDOW_S, Condition, DEPTH_MAX_MM, GRID_HZ, HOLD_TOLERANCE_PERIODS, Label, Modality,
    MODALITY_ORDER, MODALITY_RANK, RGB_RANGE, TIME_EPS,
)
from slip_perception.errors import (
    DataError, DegenerateRangeError, MissingModalityError, NonMonotoneTimestampError, ShapeMismatchError,
)


class SyncConfig(BaseModel):
    grid_hz: float = GRID_HZ
    tolerance_periods: float = HOLD_TOLERANCE_PERIODS
    hold_last: bool = True
    abnormal_window: float = ABNORMAL_WINDOW_S
    start_time: float = 0.0
    depth_max_mm: float = DEPTH_MAX_MM

    class Config:
        extra = 'forbid'

    @validator('grid_hz')
    def _positive_rate(cls, v):
        if v <= 0:
            raise ValueError('grid_hz must be positive')
        return v

    @validator('tolerance_periods', 'abnormal_window', 'depth_max_mm')
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError('must not be negative')
        return v


@dataclass(frozen=True)
class SensorFrame:
    modality: Modality
    timestamp: float
    payload: np.ndarray

    def __post_init__(self):
        modality = Modality(self.modality)
        object.__setattr__(self, 'modality', modality)
        payload = np.asarray(self.payload)
        if payload.ndim != MODALITY_RANK[modality]:
            raise ShapeMismatchError(
                f'{modality.value} frames need rank {MODALITY_RANK[modality]}, got shape {payload.shape}'
            )
        if modality == Modality.RGB and payload.shape[-1] != 3:
            raise ShapeMismatchError(f'rgb frames need 3 channels, got shape {payload.shape}')
        object.__setattr__(self, 'payload', payload)

    @classmethod
    def from_flat(cls, modality, timestamp, shape, values):
        values = np.asarray(values, dtype=np.float64)
        shape = tuple(int(s) for s in shape)
        if values.size != int(np.prod(shape)):
            raise ShapeMismatchError(
                f'{Modality(modality).value} payload has {values.size} values but shape {shape} needs {int(np.prod(shape))}'
            )
        timestamp = float(timestamp)
        if not np.isfinite(timestamp):
            raise DataError(f'{Modality(modality).value} frame has a non-finite timestamp {timestamp}')
        if not np.all(np.isfinite(values)):
            raise DataError(f'{Modality(modality).value} frame at {timestamp} has non-finite payload values')
        return cls(Modality(modality), timestamp, values.reshape(shape))


@dataclass
class StreamSet:
    episode_id: str
    condition: Condition
    streams: Dict[Modality, List[SensorFrame]]
    drop_time: Optional[float] = None
    start_time: float = 0.0

    def span(self) -> Tuple[float, float]:
        starts = [frames[0].timestamp for frames in self.streams.values() if frames]
        ends = [frames[-1].timestamp for frames in self.streams.values() if frames]
        return min(starts), max(ends)

    def validate(self, modalities: Sequence[Modality] = MODALITY_ORDER):
        for modality in modalities:
            frames = self.streams.get(modality)
            if not frames:
                raise MissingModalityError(modality, self.episode_id)
            timestamps = np.fromiter((f.timestamp for f in frames), dtype=np.float64, count=len(frames))
            if not np.all(np.isfinite(timestamps)):
                raise DataError(f'{modality.value} stream of episode {self.episode_id} has non-finite timestamps')
            steps = np.diff(timestamps)
            if np.any(steps <= 0):
                bad = int(np.argmax(steps <= 0)) + 1
                raise NonMonotoneTimestampError(
                    f'{modality.value} timestamps of episode {self.episode_id} do not increase at frame {bad} '
                    f'({timestamps[bad - 1]} -> {timestamps[bad]})'
                )
        if self.drop_time is not None:
            lo, hi = self.span()
            if not lo - TIME_EPS <= self.drop_time <= hi + TIME_EPS:
                raise DataError(f'drop_time {self.drop_time} of episode {self.episode_id} lies outside [{lo}, {hi}]')


@dataclass
class SyncedSample:
    tick_time: float
    rgb: np.ndarray
    depth: np.ndarray
    ft: np.ndarray
    audio: Optional[np.ndarray] = None
    mfcc: Optional[np.ndarray] = None
    label: Label = Label.NORMAL
    stale: FrozenSet[Modality] = field(default_factory=frozenset)

    def slot(self, modality: Modality) -> np.ndarray:
        if modality == Modality.AUDIO:
            return self.mfcc if self.mfcc is not None else self.audio
        return {Modality.RGB: self.rgb, Modality.DEPTH: self.depth, Modality.FORCE_TORQUE: self.ft}[modality]


class StreamSynchronizer:
    """Incremental nearest-frame alignment.

    A tick is emitted as soon as every modality holds a frame later than the
    tick plus the tolerance, since no frame arriving afterwards can be selected
    for it. `flush` emits the ticks left up to the end of the shortest stream.
    """

    def __init__(self, config: SyncConfig = None, modalities: Sequence[Modality] = MODALITY_ORDER):
        self.config = config or SyncConfig()
        self.modalities = tuple(modalities)
        self.period = 1.0 / self.config.grid_hz
        self.tolerance = self.config.tolerance_periods * self.period
        self._times = {m: [] for m in self.modalities}
        self._payloads = {m: [] for m in self.modalities}
        self._held = {m: None for m in self.modalities}
        self._next_index = 1
        self.dropped_ticks = 0

    def tick_time(self, index: int) -> float:
        return self.config.start_time + index / self.config.grid_hz

    def push(self, frame: SensorFrame) -> List[SyncedSample]:
        modality = frame.modality
        if modality not in self._times:
            return []
        times = self._times[modality]
        if times and frame.timestamp <= times[-1]:
            raise NonMonotoneTimestampError(
                f'{modality.value} frame at {frame.timestamp} does not follow {times[-1]}'
            )
        times.append(frame.timestamp)
        self._payloads[modality].append(frame.payload)
        return self._drain(final=False)

    def flush(self) -> List[SyncedSample]:
        return self._drain(final=True)

    def _ready(self, t: float, final: bool) -> bool:
        for modality in self.modalities:
            times = self._times[modality]
            if not times:
                return False
            if final:
                if times[-1] < t - TIME_EPS:
                    return False
            elif times[-1] <= t + self.tolerance + TIME_EPS:
                return False
        return True

    def _drain(self, final: bool) -> List[SyncedSample]:
        out = []
        while True:
            t = self.tick_time(self._next_index)
            if not self._ready(t, final):
                break
            sample = self._select(t)
            self._next_index += 1
            if sample is None:
                self.dropped_ticks += 1
            else:
                out.append(sample)
            self._prune(self.tick_time(self._next_index))
        return out

    def _select(self, t: float) -> Optional[SyncedSample]:
        values, stale = {}, set()
        for modality in self.modalities:
            payload = nearest_frame(self._times[modality], self._payloads[modality], t, self.tolerance)
            if payload is not None:
                self._held[modality] = payload
            elif self.config.hold_last and self._held[modality] is not None:
                payload = self._held[modality]
                stale.add(modality)
            values[modality] = payload
        if any(v is None for v in values.values()):
            return None
        return SyncedSample(
            tick_time=t,
            rgb=values.get(Modality.RGB),
            depth=values.get(Modality.DEPTH),
            ft=values.get(Modality.FORCE_TORQUE),
            audio=values.get(Modality.AUDIO),
            stale=frozenset(stale),
        )

    def _prune(self, next_tick: float):
        horizon = next_tick - self.tolerance - TIME_EPS
        for modality in self.modalities:
            times = self._times[modality]
            cut = bisect.bisect_left(times, horizon)
            # the newest frame always stays, readiness is judged from it
            cut = max(0, min(cut, len(times) - 1))
            if cut:
                del times[:cut]
                del self._payloads[modality][:cut]


def nearest_frame(times: Sequence[float], payloads: Sequence[np.ndarray], t: float, tolerance: float):
    """Payload whose timestamp is nearest to t, ties to the earlier frame; None beyond tolerance."""
    if not times:
        return None
    i = bisect.bisect_left(times, t)
    best = None
    if i > 0:
        best = i - 1
    # distances within TIME_EPS count as a tie
    if i < len(times) and (best is None or (times[i] - t) < (t - times[best]) - TIME_EPS):
        best = i
    if abs(times[best] - t) > tolerance + TIME_EPS:
        return None
    return payloads[best]


def synchronize(streams: StreamSet, config: SyncConfig = None, grid_hz: float = None,
                modalities: Sequence[Modality] = MODALITY_ORDER) -> List[SyncedSample]:
    config = config or SyncConfig()
    if grid_hz is not None:
        if grid_hz <= 0:
            raise DataError('grid_hz must be positive')
        config = config.copy(update={'grid_hz': grid_hz})
    config = config.copy(update={'start_time': streams.start_time})
    streams.validate(modalities)
    synchronizer = StreamSynchronizer(config, modalities)
    merged = heapq.merge(*[
        [((f.timestamp, order, i), f) for i, f in enumerate(streams.streams[m])]
        for order, m in enumerate(modalities)
    ])
    samples = []
    for _, frame in merged:
        samples.extend(synchronizer.push(frame))
    samples.extend(synchronizer.flush())
    return samples


def minmax_normalize(value, lo, hi):
    """(clamp(value) - lo) / (hi - lo); works element-wise on arrays of per-channel bounds."""
    lo_arr = np.asarray(lo, dtype=np.float64)
    hi_arr = np.asarray(hi, dtype=np.float64)
    if np.any(lo_arr >= hi_arr):
        raise DegenerateRangeError(f'normalization range is degenerate: lo={lo}, hi={hi}')
    scaled = (np.clip(value, lo_arr, hi_arr) - lo_arr) / (hi_arr - lo_arr)
    if np.ndim(scaled) == 0:
        return float(scaled)
    return scaled


class NormalizationRanges(BaseModel):
    ft_lo: List[float]
    ft_hi: List[float]
    mfcc_lo: List[float]
    mfcc_hi: List[float]
    rgb_lo: float = RGB_RANGE[0]
    rgb_hi: float = RGB_RANGE[1]
    depth_lo: float = 0.0
    depth_hi: float = DEPTH_MAX_MM

    class Config:
        extra = 'forbid'


def _channel_range(rows: np.ndarray) -> Tuple[List[float], List[float]]:
    lo = rows.min(axis=0)
    hi = rows.max(axis=0)
    hi = np.where(hi - lo > 0, hi, lo + 1.0)
    return lo.tolist(), hi.tolist()


def fit_ranges(samples: Iterable[SyncedSample], depth_max_mm: float = DEPTH_MAX_MM) -> NormalizationRanges:
    samples = list(samples)
    if not samples:
        raise DataError('cannot fit normalization ranges on an empty split')
    if any(s.mfcc is None for s in samples):
        raise DataError('normalization ranges need MFCC features; run feature extraction first')
    ft_lo, ft_hi = _channel_range(np.stack([s.ft for s in samples]).astype(np.float64))
    mfcc_lo, mfcc_hi = _channel_range(np.stack([s.mfcc for s in samples]).astype(np.float64))
    return NormalizationRanges(
        ft_lo=ft_lo, ft_hi=ft_hi, mfcc_lo=mfcc_lo, mfcc_hi=mfcc_hi, depth_hi=depth_max_mm,
    )


def normalize_sample(sample: SyncedSample, ranges: NormalizationRanges) -> SyncedSample:
    if sample.mfcc is None:
        raise DataError(f'tick {sample.tick_time:.1f} has no MFCC features')
    return replace(
        sample,
        rgb=minmax_normalize(np.asarray(sample.rgb, dtype=np.float64), ranges.rgb_lo, ranges.rgb_hi),
        depth=minmax_normalize(np.asarray(sample.depth, dtype=np.float64), ranges.depth_lo, ranges.depth_hi),
        ft=minmax_normalize(np.asarray(sample.ft, dtype=np.float64), ranges.ft_lo, ranges.ft_hi),
        mfcc=minmax_normalize(np.asarray(sample.mfcc, dtype=np.float64), ranges.mfcc_lo, ranges.mfcc_hi),
    )


def label_ticks(samples: Sequence[SyncedSample], drop_time: Optional[float],
                window: float = ABNORMAL_WINDOW_S) -> List[SyncedSample]:
    """Normal up to the drop, abnormal inside the window after it, nothing beyond."""
    if drop_time is None:
        return [replace(s, label=Label.NORMAL) for s in samples]
    labeled = []
    for sample in samples:
        if sample.tick_time <= drop_time + TIME_EPS:
            labeled.append(replace(sample, label=Label.NORMAL))
        elif sample.tick_time <= drop_time + window + TIME_EPS:
            labeled.append(replace(sample, label=Label.ABNORMAL))
    return labeled

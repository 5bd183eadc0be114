import json
import time
from dataclasses import dataclass
from typing import Iterable, List, Sequence, TextIO

import pandas as pd

from slip_perception.constants import Modality, MODALITY_ORDER
from slip_perception.errors import DataError
from slip_perception.pipeline.bundle import load_bundle
from slip_perception.pipeline.episode_io import parse_frame_line
from slip_perception.pipeline.features import attach_mfcc
from slip_perception.pipeline.streamsync import StreamSynchronizer, SyncedSample
from slip_perception.utils.string_tools import print_colored, warn
from slip_perception.utils.timer import StageTimer, resident_memory_mb


@dataclass
class StreamSummary:
    emitted: int
    skipped: int
    latency: pd.DataFrame


class StreamScorer:
    """Scores NDJSON frames tick by tick as soon as each tick can no longer change."""

    def __init__(self, bundle_path, mask: Sequence[Modality] = None, report_latency=True, max_skipped_lines=-1):
        self.bundle = load_bundle(bundle_path)
        self.mask = self.bundle.resolve_mask(mask)
        self.report_latency = report_latency
        self.max_skipped_lines = max_skipped_lines
        self.timer = StageTimer()
        # every modality is synchronized so the tick set matches batch evaluation
        self.synchronizer = StreamSynchronizer(self.bundle.sync, MODALITY_ORDER)

    def score(self, lines: Iterable[str], out: TextIO) -> StreamSummary:
        emitted = skipped = 0
        for line_number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                ticks = self.synchronizer.push(parse_frame_line(line))
            except DataError as e:
                skipped += 1
                warn(f'line {line_number} skipped: {e}')
                if 0 <= self.max_skipped_lines < skipped:
                    raise DataError(f'more than {self.max_skipped_lines} malformed lines') from e
                continue
            emitted += self.emit(ticks, out)
        emitted += self.emit(self.synchronizer.flush(), out)
        summary = StreamSummary(emitted=emitted, skipped=skipped, latency=self.timer.summary())
        if self.report_latency:
            self.report(summary)
        return summary

    def emit(self, ticks: List[SyncedSample], out: TextIO) -> int:
        for tick in ticks:
            start = time.perf_counter()
            with self.timer.measure('mfcc'):
                sample = attach_mfcc([tick], self.bundle.mfcc)[0]
            score = float(self.bundle.score([sample], self.mask, self.timer)[0])
            predicted = self.bundle.predict([score])[0]
            self.timer.add('total', (time.perf_counter() - start) * 1000.0)
            out.write(json.dumps({'tick_time': tick.tick_time, 'score': score, 'predicted': predicted.value}) + '\n')
            out.flush()
        return len(ticks)

    def report(self, summary: StreamSummary):
        text = f'ticks: {summary.emitted}, skipped lines: {summary.skipped}'
        if not summary.latency.empty:
            text += '\n' + summary.latency.to_string(index=False, float_format=lambda v: f'{v:.3f}')
        text += f"\nresident memory: {resident_memory_mb():.1f} MiB"
        print_colored('Stream latency', text, 'cyan', err=True)

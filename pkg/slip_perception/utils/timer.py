import datetime
import os
import time
from collections import defaultdict
from contextlib import contextmanager

import numpy as np
import pandas as pd
import psutil

from slip_perception.utils.string_tools import format_seconds


class Singleton(type):
    _instances = {}

    def __call__(cls, *args, **kwargs):
        if cls not in cls._instances:
            cls._instances[cls] = super().__call__(*args, **kwargs)
        return cls._instances[cls]


class Timer(metaclass=Singleton):
    def __init__(self):
        if not hasattr(self, "start_time"):
            self.start_time = datetime.datetime.now()

    def get_time_since_start(self):
        return format_seconds((datetime.datetime.now() - self.start_time).total_seconds())


class StageTimer:
    """Per-stage wall-clock samples in milliseconds."""

    def __init__(self):
        self.samples = defaultdict(list)

    @contextmanager
    def measure(self, stage):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.samples[stage].append((time.perf_counter() - start) * 1000.0)

    def add(self, stage, milliseconds):
        self.samples[stage].append(milliseconds)

    def summary(self) -> pd.DataFrame:
        rows = [
            {'stage': stage, 'count': len(values), 'median_ms': float(np.median(values)),
             'p95_ms': float(np.percentile(values, 95))}
            for stage, values in self.samples.items() if values
        ]
        return pd.DataFrame(rows, columns=['stage', 'count', 'median_ms', 'p95_ms'])


def resident_memory_mb():
    return psutil.Process(os.getpid()).memory_info().rss / (1 << 20)


class EpochLogger:
    """Rewrites the whole CSV after every epoch so an interrupted run keeps its history."""

    def __init__(self, log_file_path):
        self.log_file_path = log_file_path
        self.rows = []

    def log(self, record):
        self.rows.append({'epoch': record.epoch, 'train_loss': record.train_loss, 'val_loss': record.val_loss})
        pd.DataFrame(self.rows, columns=['epoch', 'train_loss', 'val_loss']).to_csv(self.log_file_path, index=False)

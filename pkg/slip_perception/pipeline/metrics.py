"""Ranking and threshold metrics with Abnormal as the positive class."""
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, validator
from scipy.stats import rankdata

from slip_perception.constants import Label
from slip_perception.errors import DataError, UndefinedMetricError

METRIC_NAMES = ('AUROC', 'AUPRC', 'F1')


class MetricsConfig(BaseModel):
    histogram_bins: int = 30
    group_by: List[str] = ['condition']
    per_object: bool = True

    class Config:
        extra = 'forbid'

    @validator('histogram_bins')
    def _bins(cls, v):
        if v <= 0:
            raise ValueError('histogram_bins must be positive')
        return v


def _positives(labels) -> np.ndarray:
    return np.array([Label(l) == Label.ABNORMAL if not isinstance(l, (bool, np.bool_)) else bool(l) for l in labels])


def _prepare(scores, labels, need_negatives=True) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positives(labels)
    if scores.shape != positive.shape:
        raise DataError(f'{scores.size} scores but {positive.size} labels')
    if not np.all(np.isfinite(scores)):
        raise DataError('scores contain non-finite values')
    if not positive.any():
        raise UndefinedMetricError('metric undefined without abnormal samples')
    if need_negatives and positive.all():
        raise UndefinedMetricError('metric undefined without normal samples')
    return scores, positive


def auroc(scores, labels) -> float:
    """Mann-Whitney statistic: P(abnormal score > normal score) with half credit for ties."""
    scores, positive = _prepare(scores, labels)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    ranks = rankdata(scores, method='average')
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _cumulative_counts(scores, positive):
    order = np.argsort(-scores, kind='mergesort')
    scores, positive = scores[order], positive[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    tp = np.cumsum(positive)[last_of_run]
    fp = np.cumsum(~positive)[last_of_run]
    return scores[last_of_run], tp.astype(np.float64), fp.astype(np.float64)


def roc_curve(scores, labels) -> pd.DataFrame:
    """ROC points at every distinct threshold, from (0, 0) to (1, 1)."""
    scores, positive = _prepare(scores, labels)
    thresholds, tp, fp = _cumulative_counts(scores, positive)
    return pd.DataFrame({
        'fpr': np.r_[0.0, fp / (~positive).sum()],
        'tpr': np.r_[0.0, tp / positive.sum()],
        'threshold': np.r_[np.inf, thresholds],
    })


def trapezoid_auc(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def precision_recall_curve(scores, labels) -> pd.DataFrame:
    scores, positive = _prepare(scores, labels, need_negatives=False)
    thresholds, tp, fp = _cumulative_counts(scores, positive)
    return pd.DataFrame({
        'recall': tp / positive.sum(),
        'precision': tp / (tp + fp),
        'threshold': thresholds,
    })


def auprc(scores, labels) -> float:
    """Sum of (R_k - R_{k-1}) * P_k over distinct thresholds; precision is not interpolated."""
    curve = precision_recall_curve(scores, labels)
    recall = np.r_[0.0, curve['recall'].to_numpy()]
    return float(np.sum(np.diff(recall) * curve['precision'].to_numpy()))


def f1_at_threshold(scores, labels, threshold: float) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positives(labels)
    predicted = scores > threshold
    tp = float(np.sum(predicted & positive))
    fp = float(np.sum(predicted & ~positive))
    fn = float(np.sum(~predicted & positive))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score_histograms(scores, labels, bins: int = 30) -> pd.DataFrame:
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positives(labels)
    edges = np.histogram_bin_edges(scores, bins=bins)
    normal, _ = np.histogram(scores[~positive], bins=edges)
    abnormal, _ = np.histogram(scores[positive], bins=edges)
    return pd.DataFrame({'bin_lo': edges[:-1], 'bin_hi': edges[1:], 'normal': normal, 'abnormal': abnormal})


@dataclass
class EvalReport:
    group: str
    auroc: float
    auprc: float
    f1: float
    threshold: float
    n_positive: int
    n_negative: int
    roc: pd.DataFrame
    prc: pd.DataFrame
    histogram: pd.DataFrame

    def summary(self) -> str:
        return (
            f'group: {self.group}\n'
            f'samples: {self.n_positive + self.n_negative} ({self.n_positive} abnormal, {self.n_negative} normal)\n'
            f'AUROC: {self.auroc:.4f}\n'
            f'AUPRC: {self.auprc:.4f}\n'
            f'F1 at threshold {self.threshold:.6g}: {self.f1:.4f}\n'
        )


def evaluate_scores(scores, labels, threshold: float, group: str = 'all', bins: int = 30) -> EvalReport:
    scores, positive = _prepare(scores, labels)
    return EvalReport(
        group=group,
        auroc=auroc(scores, positive),
        auprc=auprc(scores, positive),
        f1=f1_at_threshold(scores, positive, threshold),
        threshold=float(threshold),
        n_positive=int(positive.sum()),
        n_negative=int((~positive).sum()),
        roc=roc_curve(scores, positive),
        prc=precision_recall_curve(scores, positive),
        histogram=score_histograms(scores, positive, bins),
    )


def group_name(keys: Sequence[str], values) -> str:
    values = values if isinstance(values, tuple) else (values,)
    return '/'.join(f'{k}={v}' for k, v in zip(keys, values))


def report(scored: pd.DataFrame, group_keys: Sequence[str], threshold: float, bins: int = 30) -> Dict[str, EvalReport]:
    """One report per group of the `score`/`label` frame; an empty key list gives a single 'all' group."""
    if scored.empty:
        raise DataError('no scored samples to report on')
    if not group_keys:
        return {'all': evaluate_scores(scored['score'], scored['label'], threshold, 'all', bins)}
    reports = {}
    for values, frame in scored.groupby(list(group_keys), sort=True):
        name = group_name(group_keys, values)
        try:
            reports[name] = evaluate_scores(frame['score'], frame['label'], threshold, name, bins)
        except UndefinedMetricError as e:
            raise UndefinedMetricError(f'group {name}: {e}') from e
    return reports


def write_report(rep: EvalReport, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    rep.roc.to_csv(os.path.join(out_dir, 'roc.csv'), index=False)
    rep.prc.to_csv(os.path.join(out_dir, 'prc.csv'), index=False)
    rep.histogram.to_csv(os.path.join(out_dir, 'hist.csv'), index=False)
    with open(os.path.join(out_dir, 'summary.txt'), 'w') as f:
        f.write(rep.summary())


def read_curve(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


def results_table(rows: pd.DataFrame) -> pd.DataFrame:
    """Rows of (modality_set, condition, AUROC, AUPRC, F1) pivoted to modality set x (condition, metric)."""
    table = rows.pivot(index='modality_set', columns='condition', values=list(METRIC_NAMES))
    table = table.swaplevel(0, 1, axis=1)
    conditions = list(dict.fromkeys(rows['condition']))
    columns = [(c, m) for c in conditions for m in METRIC_NAMES]
    order = list(dict.fromkeys(rows['modality_set']))
    return table.reindex(index=order, columns=pd.MultiIndex.from_tuples(columns, names=['condition', 'metric']))


def object_summary(rows: pd.DataFrame) -> pd.DataFrame:
    """Mean and median AUROC across objects per modality set and condition."""
    summary = rows.groupby(['modality_set', 'condition'], sort=False)['AUROC'].agg(['mean', 'median', 'count'])
    return summary.rename(columns={'mean': 'mean_auroc', 'median': 'median_auroc', 'count': 'objects'}).reset_index()


def write_table(table: pd.DataFrame, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    flat = table.copy()
    flat.columns = [f'{c}_{m}' for c, m in flat.columns]
    flat.to_csv(os.path.join(out_dir, 'table.csv'), index_label='modality_set')
    with open(os.path.join(out_dir, 'table.txt'), 'w') as f:
        f.write(table.to_string(float_format=lambda v: f'{v:.4f}') + '\n')

"""Normalized aggregation along the pathway.

The score of a pathway error d is ||(d - mu) V S^-1||^2 where mu, V and S come
from the thin SVD of the centered training error matrix. Singular values below
`rel_tolerance * max(S)` are dropped by zeroing their inverse.
"""
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, validator

from slip_perception.constants import DEFAULT_THRESHOLD_QUANTILE, Label, SVD_RELATIVE_TOLERANCE
from slip_perception.errors import DataError, ShapeMismatchError, ThresholdMissingError

# scale applied to the inverse singular values; 'direct' is the bare formula above
WHITENING_CONVENTIONS = ('direct', 'sample', 'population')
SCORERS = ('nap', 'recon')


class NapConfig(BaseModel):
    scorer: str = 'nap'
    whitening: str = 'direct'
    include_input_block: bool = False
    rel_tolerance: float = SVD_RELATIVE_TOLERANCE
    threshold_quantile: float = DEFAULT_THRESHOLD_QUANTILE

    class Config:
        extra = 'forbid'

    @validator('scorer')
    def _scorer(cls, v):
        if v not in SCORERS:
            raise ValueError(f'scorer must be one of {SCORERS}')
        return v

    @validator('whitening')
    def _whitening(cls, v):
        if v not in WHITENING_CONVENTIONS:
            raise ValueError(f'whitening must be one of {WHITENING_CONVENTIONS}')
        return v

    @validator('rel_tolerance')
    def _tolerance(cls, v):
        if not 0 <= v < 1:
            raise ValueError('rel_tolerance must lie in [0, 1)')
        return v

    @validator('threshold_quantile')
    def _quantile(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('threshold_quantile must lie in [0, 1]')
        return v


@dataclass(frozen=True)
class NapModel:
    mu: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    kept_rank: int
    n_rows: int
    whitening: str = 'direct'
    threshold: Optional[float] = None

    @property
    def width(self) -> int:
        return self.mu.shape[0]

    def with_threshold(self, threshold: float) -> 'NapModel':
        return replace(self, threshold=float(threshold))


@dataclass(frozen=True)
class ScoredSample:
    tick_time: float
    score: float
    label: Label = Label.NORMAL
    predicted: Optional[Label] = None


def _whitening_scale(whitening: str, n_rows: int) -> float:
    return {'direct': 1.0, 'sample': np.sqrt(n_rows - 1.0), 'population': np.sqrt(float(n_rows))}[whitening]


def fit(d_rows, config: NapConfig = None) -> NapModel:
    config = config or NapConfig()
    d = np.asarray(d_rows, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 2:
        raise DataError(f'NAP needs at least 2 pathway error rows, got shape {d.shape}')
    if not np.all(np.isfinite(d)):
        raise DataError('pathway error matrix contains non-finite values')
    mu = d.mean(axis=0)
    _, sigma, vt = np.linalg.svd(d - mu, full_matrices=False)
    cutoff = config.rel_tolerance * sigma[0] if sigma.size else 0.0
    kept = sigma > cutoff
    scale = _whitening_scale(config.whitening, d.shape[0])
    sigma_inv = np.zeros_like(sigma)
    sigma_inv[kept] = scale / sigma[kept]
    return NapModel(
        mu=mu, v=vt.T.copy(), sigma=sigma, sigma_inv=sigma_inv, kept_rank=int(kept.sum()), n_rows=d.shape[0],
        whitening=config.whitening,
    )


def score_batch(d, model: NapModel) -> np.ndarray:
    d = np.atleast_2d(np.asarray(d, dtype=np.float64))
    if d.shape[1] != model.width:
        raise ShapeMismatchError(f'pathway error has width {d.shape[1]}, the NAP model expects {model.width}')
    projection = ((d - model.mu) @ model.v) * model.sigma_inv
    return np.einsum('ij,ij->i', projection, projection)


def score(d, model: NapModel) -> float:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise ShapeMismatchError(f'score takes one pathway error vector, got shape {d.shape}')
    return float(score_batch(d, model)[0])


def fit_threshold(val_scores: Sequence[float], q: float = DEFAULT_THRESHOLD_QUANTILE) -> float:
    """Empirical q-quantile, linear interpolation between the closest order statistics."""
    scores = np.asarray(val_scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError('cannot fit a threshold on zero validation scores')
    if not 0 <= q <= 1:
        raise DataError(f'quantile {q} outside [0, 1]')
    return float(np.quantile(scores, q, method='linear'))


def classify(value: float, model: NapModel) -> Label:
    if model.threshold is None:
        raise ThresholdMissingError('the NAP model has no decision threshold')
    return Label.ABNORMAL if value > model.threshold else Label.NORMAL


def nap_arrays(model: NapModel) -> Dict[str, np.ndarray]:
    return {'mu': model.mu, 'v': model.v, 'sigma': model.sigma, 'sigma_inv': model.sigma_inv}


def nap_meta(model: NapModel) -> dict:
    return {
        'kept_rank': model.kept_rank, 'n_rows': model.n_rows, 'whitening': model.whitening,
        'threshold': model.threshold,
    }


def nap_from_arrays(arrays: Dict[str, np.ndarray], meta: dict) -> NapModel:
    v = np.array(arrays['v'], dtype=np.float64)
    mu = np.array(arrays['mu'], dtype=np.float64)
    if v.shape[0] != mu.shape[0]:
        raise ShapeMismatchError(f'NAP basis has {v.shape[0]} rows but the mean has width {mu.shape[0]}')
    return NapModel(
        mu=mu, v=v,
        sigma=np.array(arrays['sigma'], dtype=np.float64),
        sigma_inv=np.array(arrays['sigma_inv'], dtype=np.float64),
        kept_rank=int(meta['kept_rank']), n_rows=int(meta['n_rows']), whitening=meta['whitening'],
        threshold=meta.get('threshold'),
    )

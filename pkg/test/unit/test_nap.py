import numpy as np
import pytest

from slip_perception.constants import Label
from slip_perception.errors import DataError, ShapeMismatchError, ThresholdMissingError
from slip_perception.pipeline import nap
from slip_perception.pipeline.nap import NapConfig


def jacobi_svd(a, sweeps=60, tol=1e-13):
    """One-sided Jacobi SVD: singular values (descending) and right singular vectors."""
    u = np.array(a, dtype=np.float64)
    n = u.shape[1]
    v = np.eye(n)
    for _ in range(sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = u[:, i] @ u[:, i]
                beta = u[:, j] @ u[:, j]
                gamma = u[:, i] @ u[:, j]
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ui, vi = u[:, i].copy(), v[:, i].copy()
                u[:, i], u[:, j] = c * ui - s * u[:, j], s * ui + c * u[:, j]
                v[:, i], v[:, j] = c * vi - s * v[:, j], s * vi + c * v[:, j]
        if not rotated:
            break
    sigma = np.linalg.norm(u, axis=0)
    order = np.argsort(-sigma)
    return sigma[order], v[:, order]


def random_rows(n=50, width=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, width)) @ np.diag(np.linspace(0.5, 3.0, width))


def test_hand_computed_example():
    d = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    model = nap.fit(d)
    np.testing.assert_allclose(model.mu, [1.0, 1.0])
    np.testing.assert_allclose(model.sigma, [2.0, 2.0])
    assert model.kept_rank == 2
    assert nap.score(np.array([3.0, 1.0]), model) == pytest.approx(1.0, abs=1e-9)
    assert nap.score(np.array([1.0, 1.0]), model) == pytest.approx(0.0, abs=1e-12)


def test_zero_matrix_scores_zero():
    model = nap.fit(np.zeros((5, 4)))
    assert model.kept_rank == 0
    assert nap.score(np.array([1.0, -2.0, 3.0, 0.5]), model) == 0.0


def test_matches_jacobi_svd():
    d = random_rows()
    model = nap.fit(d)
    mu = d.mean(axis=0)
    sigma, v = jacobi_svd(d - mu)
    np.testing.assert_allclose(model.sigma, sigma, rtol=1e-8)

    queries = np.random.default_rng(1).normal(size=(20, 10)) * 2.0
    expected = np.sum((((queries - mu) @ v) / sigma) ** 2, axis=1)
    np.testing.assert_allclose(nap.score_batch(queries, model), expected, rtol=1e-8)


def test_basis_reconstructs_centered_rows():
    d = random_rows(seed=2)
    model = nap.fit(d)
    centered = d - model.mu
    np.testing.assert_allclose(centered @ model.v @ model.v.T, centered, atol=1e-8)


@pytest.mark.parametrize('whitening, factor', [
    ('direct', lambda n: 1.0),
    ('sample', lambda n: n - 1.0),
    ('population', lambda n: float(n)),
])
def test_whitening_conventions(whitening, factor):
    d = random_rows(seed=3)
    model = nap.fit(d, NapConfig(whitening=whitening))
    projection = ((d - model.mu) @ model.v) * model.sigma_inv
    np.testing.assert_allclose(np.sum(projection ** 2, axis=0), factor(len(d)), rtol=1e-9)
    assert nap.score_batch(d, model).sum() == pytest.approx(factor(len(d)) * model.kept_rank, rel=1e-9)


def test_sample_whitening_gives_unit_variance():
    d = random_rows(seed=12)
    model = nap.fit(d, NapConfig(whitening='sample'))
    projection = ((d - model.mu) @ model.v) * model.sigma_inv
    np.testing.assert_allclose(projection.var(axis=0, ddof=1), 1.0, atol=1e-3)


def test_scaling_invariance():
    d = random_rows(seed=4)
    query = np.random.default_rng(5).normal(size=10)
    base = nap.score(query, nap.fit(d))
    scaled = nap.score(7.5 * query, nap.fit(7.5 * d))
    assert scaled == pytest.approx(base, rel=1e-9)


def test_rotation_invariance():
    d = random_rows(seed=6)
    q, _ = np.linalg.qr(np.random.default_rng(7).normal(size=(10, 10)))
    query = np.random.default_rng(8).normal(size=10)
    base = nap.score(query, nap.fit(d))
    rotated = nap.score(query @ q, nap.fit(d @ q))
    assert rotated == pytest.approx(base, rel=1e-6)


def test_collinear_columns_are_truncated():
    d = random_rows(seed=9)
    d = np.hstack([d, d[:, :1]])
    model = nap.fit(d)
    assert model.kept_rank == 10
    assert np.count_nonzero(model.sigma_inv) == 10
    assert np.isfinite(nap.score(np.ones(11), model))


def test_fit_needs_two_rows():
    with pytest.raises(DataError):
        nap.fit(np.ones((1, 3)))
    with pytest.raises(DataError):
        nap.fit(np.array([[0.0, np.nan], [1.0, 1.0]]))


def test_score_width_mismatch():
    model = nap.fit(random_rows())
    with pytest.raises(ShapeMismatchError):
        nap.score(np.zeros(9), model)


def test_threshold_quantile():
    assert nap.fit_threshold(np.arange(1.0, 11.0), 0.9) == pytest.approx(9.1)
    assert nap.fit_threshold([4.0, 4.0, 4.0], 0.9) == 4.0
    assert nap.fit_threshold([3.0, 1.0, 2.0], 1.0) == 3.0
    with pytest.raises(DataError):
        nap.fit_threshold([], 0.9)


def test_classify_is_strict():
    model = nap.fit(random_rows()).with_threshold(2.0)
    assert nap.classify(2.0, model) == Label.NORMAL
    assert nap.classify(2.0 + 1e-9, model) == Label.ABNORMAL
    assert nap.classify(0.0, model) == Label.NORMAL


def test_classify_without_threshold():
    with pytest.raises(ThresholdMissingError):
        nap.classify(1.0, nap.fit(random_rows()))


def test_arrays_round_trip():
    model = nap.fit(random_rows(), NapConfig(whitening='sample')).with_threshold(3.5)
    restored = nap.nap_from_arrays(nap.nap_arrays(model), nap.nap_meta(model))
    assert restored.threshold == 3.5
    assert restored.whitening == 'sample'
    query = np.random.default_rng(10).normal(size=10)
    assert nap.score(query, restored) == nap.score(query, model)

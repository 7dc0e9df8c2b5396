import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from oracles import pair_count_auc
from rsmanifold.detection import (MetricMatrix, _separation_scatter, detect, roc_auc, sml_fit,
                                  sml_objective_matrix)
from rsmanifold.errors import DegenerateInputError, DomainError, ShapeError
from rsmanifold.linalg import psd_project
from rsmanifold.pipeline.cube import first_n_split
from rsmanifold.pipeline.synth import synth_detection


def two_groups(seed, p=12, q=15, d=4, shift=2.0):
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(p, d)) * 0.3
    neg = rng.normal(size=(q, d)) * 0.3
    pos[:, 0] += shift
    return pos, neg


# -- ROC -------------------------------------------------------------------

def test_auc_hand_example_matches_pair_counting():
    scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.7]
    labels = [1, 0, 1, 0, 1, 0]
    # pairs: 0.1 beats all 3 (3), 0.35 beats all 3 (3), 0.4 ties 0.4 and beats 0.7, 0.8 (2.5)
    assert roc_auc(scores, labels) == pair_count_auc(scores, labels) == 8.5 / 9


def test_auc_extremes():
    assert roc_auc([0, 1, 2, 3], [1, 1, 0, 0]) == 1.0
    assert roc_auc([3, 2, 1, 0], [1, 1, 0, 0]) == 0.0
    assert roc_auc([5.0] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auc_single_class():
    with pytest.raises(DomainError):
        roc_auc([1, 2, 3], [1, 1, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=30))
def test_auc_matches_oracle_and_monotone_invariance(pairs):
    scores = np.array([s for s, _ in pairs], dtype=float)
    labels = np.array([l for _, l in pairs])
    if labels.all() or not labels.any():
        return
    auc = roc_auc(scores, labels)
    assert abs(auc - pair_count_auc(scores, labels)) < 1e-12
    assert roc_auc(np.exp(scores) * 3 + 1, labels) == auc


# -- objective pieces -------------------------------------------------------

def test_separation_scatter_matches_pair_sum():
    pos, neg = two_groups(0, p=4, q=5, d=3)
    brute = sum(np.outer(a - b, a - b) for a in pos for b in neg)
    np.testing.assert_allclose(_separation_scatter(pos, neg), brute, atol=1e-12)


def test_objective_matrix_errors():
    pos, neg = two_groups(0)
    with pytest.raises(DomainError):
        sml_objective_matrix(pos, neg, k=12)
    with pytest.raises(DomainError):
        sml_objective_matrix(pos[:1], neg)
    with pytest.raises(DomainError):
        sml_objective_matrix(pos, neg, lambda_sim=-1)
    with pytest.raises(ShapeError):
        sml_objective_matrix(pos, neg[:, :2])
    with pytest.raises(DegenerateInputError):
        sml_objective_matrix(np.ones((4, 3)), np.ones((4, 3)), k=2)


# -- fitting ---------------------------------------------------------------

def test_unregularized_fit_reaches_normalized_separation_scatter():
    pos, neg = two_groups(1)
    m = sml_fit(pos, neg, 0.0, 0.0, k=3)
    s = _separation_scatter(pos, neg)
    target = s / np.linalg.norm(s)
    np.testing.assert_allclose(m.m, target, atol=1e-6)
    start = np.trace(s) / np.sqrt(s.shape[0]) / (len(pos) * len(neg))
    assert m.history[-1] >= start


def test_axis_one_separation_concentrates_metric():
    rng = np.random.default_rng(2)
    pos = np.c_[rng.normal(3.0, 0.2, 15), rng.normal(0.0, 0.2, 15)]
    neg = np.c_[rng.normal(0.0, 0.2, 15), rng.normal(0.0, 0.2, 15)]
    m = sml_fit(pos, neg, 1.0, 1.0, k=3)
    assert m.m[0, 0] >= 0.9


@pytest.mark.parametrize("lams", [(0.0, 0.0), (1.0, 1.0), (10.0, 0.1)])
def test_every_accepted_iterate_psd_unit_norm(lams):
    pos, neg = two_groups(3, d=5)
    seen = []
    m = sml_fit(pos, neg, *lams, k=3, callback=lambda mat, f: seen.append((mat.copy(), f)))
    assert len(seen) == len(m.history) >= 2
    for mat, _ in seen:
        assert np.linalg.eigvalsh(mat).min() >= -1e-8
        assert abs(np.linalg.norm(mat) - 1) <= 1e-9
    assert np.all(np.diff(m.history) >= 0)


def test_smoothness_term_decreases_with_its_weight():
    cube, raster, _ = synth_detection(3)
    x, y = cube.pixels(), raster.flat()
    train, _ = first_n_split(y, 15)
    pos, neg = x[train][y[train] == 2], x[train][y[train] == 1]
    from rsmanifold.patch_align import knn_laplacian
    smooth = pos.T @ knn_laplacian(pos, 3) @ pos
    low = sml_fit(pos, neg, 0.1, 0.1, k=3)
    high = sml_fit(pos, neg, 0.1, 10.0, k=3)
    assert np.sum(high.m * smooth) <= np.sum(low.m * smooth) + 1e-12


def test_metric_matrix_validation():
    with pytest.raises(DomainError):
        MetricMatrix(np.eye(3))
    with pytest.raises(ShapeError):
        MetricMatrix(np.ones((2, 3)))
    np.testing.assert_allclose(np.linalg.norm(MetricMatrix.identity(4).m), 1.0)


# -- detection ---------------------------------------------------------------

def test_detect_target_scores_zero_and_identity_is_distance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 6))
    target = x[3]
    res = detect(x, target, MetricMatrix.identity(6))
    assert res.scores[3] == 0.0 and res.auc is None
    np.testing.assert_allclose(res.scores, ((x - target) ** 2).sum(1) / np.sqrt(6), rtol=1e-12)


def test_detect_rotation_invariance():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(30, 5))
    target = rng.normal(size=5)
    m = psd_project(np.cov(x.T))
    metric = MetricMatrix(m / np.linalg.norm(m))
    r = ortho_group.rvs(5, random_state=6)
    rotated = MetricMatrix(r @ metric.m @ r.T)
    np.testing.assert_allclose(detect(x @ r.T, r @ target, rotated).scores,
                               detect(x, target, metric).scores, atol=1e-10)


def test_detect_dimension_mismatch():
    with pytest.raises(ShapeError):
        detect(np.zeros((3, 4)), np.zeros(3), MetricMatrix.identity(4))


def test_learned_metric_beats_identity_on_mixed_pixels():
    cube, raster, _ = synth_detection(0)
    x, y = cube.pixels(), raster.flat()
    train, test = first_n_split(y, 20)
    pos, neg = x[train][y[train] == 2], x[train][y[train] == 1]
    template = pos.mean(axis=0)
    truth = y[test] == 2
    base = detect(x[test], template, MetricMatrix.identity(x.shape[1]), truth).auc
    learned = detect(x[test], template, sml_fit(pos, neg, 1.0, 1.0, k=5), truth).auc
    assert learned >= base + 0.05

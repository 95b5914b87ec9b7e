import math

import numpy as np
import pytest
from sklearn.metrics import adjusted_mutual_info_score

from occo.errors import InputError, LengthMismatch, MaskLengthMismatch, SingleClass, TooFewItems
from occo.model import CompletionSample, init_params
from occo.probes import (ROBUSTNESS_ROWS, activation_mask, ami, concept_masks, count_detected_concepts,
                         dataset_loss, dissect, dissection_miou, filter_normalized_direction, kmeans,
                         landscape_slice, linear_probe, miou_csv, robustness_probe)


def blobs(rng, n=100):
    a = rng.normal(size=(n, 2))
    b = rng.normal(size=(n, 2)) + [10.0, 0.0]
    return np.vstack([a, b]), np.repeat([0, 1], n)


def test_kmeans_blobs(rng):
    X, y = blobs(rng)
    cl = kmeans(X, 2, rng)
    agree = max((cl.labels == y).mean(), (cl.labels != y).mean())
    assert agree >= 0.99


def test_kmeans_k_equals_n(rng):
    X = rng.normal(size=(12, 3))
    cl = kmeans(X, 12, 0)
    assert len(set(cl.labels.tolist())) == 12 and cl.inertia == 0.0
    with pytest.raises(TooFewItems):
        kmeans(X, 13, 0)
    with pytest.raises(TooFewItems):
        kmeans(X, 0, 0)


def test_kmeans_duplicate_invariance(rng):
    X, _ = blobs(rng, 40)
    init = X[[0, 50]]
    a = kmeans(X, 2, init=init)
    b = kmeans(np.vstack([X, X]), 2, init=init)
    np.testing.assert_allclose(a.centroids, b.centroids, atol=1e-9)


def test_kmeans_history_and_determinism(rng):
    X = rng.normal(size=(300, 4))
    cl = kmeans(X, 5, 7)
    assert all(b <= a + 1e-9 for a, b in zip(cl.history, cl.history[1:]))
    again = kmeans(X, 5, 7, threads=4)
    assert np.array_equal(cl.labels, again.labels) and cl.restart == again.restart


def test_ami_identical_and_permuted(rng):
    a = rng.integers(0, 4, 60)
    assert ami(a, a) == 1.0
    perm = np.array([2, 0, 3, 1])
    assert ami(a, perm[a]) == pytest.approx(1.0, abs=1e-12)
    assert ami([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    with pytest.raises(LengthMismatch):
        ami([0, 1], [0, 1, 1])


def test_ami_matches_sklearn(rng):
    for _ in range(30):
        n = int(rng.integers(5, 120))
        a, b = rng.integers(0, rng.integers(1, 6), n), rng.integers(0, rng.integers(1, 6), n)
        v = ami(a, b)
        assert -1 <= v <= 1
        assert v == pytest.approx(ami(b, a), abs=1e-12)
        assert v == pytest.approx(adjusted_mutual_info_score(a, b, average_method="arithmetic"), abs=1e-9)


def test_ami_random_null():
    rng = np.random.default_rng(0)
    vals = [ami(rng.integers(0, 10, 200), rng.integers(0, 10, 200)) for _ in range(100)]
    assert abs(np.mean(vals)) < 0.05


def test_robustness_probe_shape(rng, toy_dims):
    params = init_params(toy_dims, rng)
    clouds = [rng.normal(size=(20, 3)) + 3 * (i % 2) for i in range(10)]
    labels = [i % 2 for i in range(10)]
    rows = robustness_probe(params, clouds, labels, seed=1, n_seeds=3)
    assert [r.transform for r in rows] == ["none", "J", "J+T", "J+T+R"]
    twice = robustness_probe(params, clouds, labels, seed=1, n_seeds=3,
                             rows=(ROBUSTNESS_ROWS[0], ROBUSTNESS_ROWS[0]))
    assert twice[0].values == twice[1].values == rows[0].values
    assert all(len(r.values) == 3 and r.stderr >= 0 for r in rows)


def test_linear_probe_separable(rng):
    X, y = blobs(rng, 30)
    assert linear_probe(X, y, X, y) == 1.0
    Xt, yt = blobs(np.random.default_rng(5), 30)
    assert linear_probe(X, y, Xt, yt) == 1.0
    with pytest.raises(SingleClass):
        linear_probe(X, np.zeros(len(X)), X, y)


def test_linear_probe_shuffled_null():
    rng = np.random.default_rng(0)
    accs = []
    for _ in range(20):
        X, y = blobs(rng, 30)
        Xt, yt = blobs(rng, 30)
        accs.append(linear_probe(X, rng.permutation(y), Xt, yt))
    assert abs(np.mean(accs) - 0.5) <= 0.1


def test_linear_probe_multiclass(rng):
    centers = np.array([[0, 0], [8, 0], [0, 8]])
    y = np.repeat([0, 1, 2], 20)
    X = centers[y] + rng.normal(size=(60, 2))
    assert linear_probe(X, y, X, y) == 1.0


def test_activation_mask_examples():
    assert activation_mask(np.zeros(10)).sum() == 2
    assert np.flatnonzero(activation_mask(np.ones(10))).tolist() == [0, 1]
    assert np.flatnonzero(activation_mask(np.arange(10.0))).tolist() == [8, 9]
    for n in range(1, 51):
        assert activation_mask(np.random.default_rng(n).normal(size=n)).sum() == math.ceil(0.2 * n)
    two = activation_mask(np.column_stack([np.arange(5.0), -np.arange(5.0)]))
    assert two[:, 0].tolist() == [False] * 4 + [True]
    assert two[:, 1].tolist() == [True] + [False] * 4
    with pytest.raises(InputError):
        activation_mask(np.zeros(0))


def test_miou_examples():
    m = np.array([True, True, False, False, False])
    assert dissection_miou([m], [m])[0, 0] == 1.0
    assert dissection_miou([m], [~m])[0, 0] == 0.0
    c = np.array([True, False, True, True, False])
    assert dissection_miou([m], [c])[0, 0] == 0.25
    empty = np.zeros(5, dtype=bool)
    assert dissection_miou([m, empty], [m, empty])[0, 0] == 0.5
    with pytest.raises(MaskLengthMismatch):
        dissection_miou([m], [])
    with pytest.raises(MaskLengthMismatch):
        dissection_miou([m], [c[:4]])


def test_concept_counting():
    assert count_detected_concepts(np.zeros((3, 4))).total == 0
    hand = np.array([[0.6, 0.5, 0.0], [0.51, 0.2, 0.0], [0.0, 0.5000001, 0.0]])
    cc = count_detected_concepts(hand)
    assert cc.total == 3 and cc.unique == 2
    assert cc.per_concept.tolist() == [2, 1, 0]
    single = count_detected_concepts([[0.6]])
    assert (single.total, single.unique) == (1, 1)


def test_dissect_layers(rng, toy_dims):
    params = init_params(toy_dims, rng)
    clouds = [rng.normal(size=(30, 3)) for _ in range(4)]
    parts = [rng.integers(0, 3, 30) for _ in range(4)]
    mats = dissect(clouds, parts, params)
    assert [m.shape for m in mats] == [(8, 3), (8, 3), (8, 3)]
    assert all(((m >= 0) & (m <= 1)).all() for m in mats)
    text = miou_csv(mats, ["top", "bottom", "side"])
    assert text.splitlines()[0] == "layer,channel,top,bottom,side"
    assert len(text.splitlines()) == 1 + 24
    assert concept_masks([0, 2], 3).tolist() == [[True, False, False], [False, False, True]]


def landscape_data(rng, dims, n=3):
    return [CompletionSample(rng.normal(size=(16, 3)), rng.normal(size=(dims.n_coarse, 3)),
                             rng.normal(size=(dims.n_fine, 3))) for _ in range(n)]


def test_landscape_center_and_norms(rng, toy_dims):
    params = init_params(toy_dims, rng)
    for arr in params.tensors.values():
        if arr.ndim == 1:
            arr += rng.normal(size=arr.shape)
    data = landscape_data(rng, toy_dims)
    sl = landscape_slice(params, data, grid_side=5, seed=3)
    assert sl.loss.shape == (5, 5)
    assert sl.center() == dataset_loss(params, data)
    for name, theta in params:
        for d in (sl.delta[name], sl.eta[name]):
            if theta.ndim == 1:
                assert abs(np.linalg.norm(d) - np.linalg.norm(theta)) <= 1e-9
            else:
                np.testing.assert_allclose(np.linalg.norm(d, axis=1), np.linalg.norm(theta, axis=1),
                                           atol=1e-9)
    again = landscape_slice(params, data, grid_side=5, seed=3, threads=3)
    assert np.array_equal(sl.loss, again.loss)
    assert sl.to_csv().splitlines()[0] == "alpha,beta,loss"
    for bad in (4, 1):
        with pytest.raises(InputError):
            landscape_slice(params, data, grid_side=bad)


def test_filter_norm_zero_filter(rng, toy_dims):
    params = init_params(toy_dims, rng)
    d = filter_normalized_direction(params, rng)
    # zero biases give zero direction components
    assert not d["enc.0.b"].any()

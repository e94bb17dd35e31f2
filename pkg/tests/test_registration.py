import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semloc.core import (
    DegenerateGeometryError,
    InsufficientCorrespondencesError,
    NoScoreableObjectsError,
    ObjectMap,
    RigidTransform,
    apply_transform,
    compose,
    inverse,
    profile_config,
    rot_z,
    rotation_from_axis_angle,
    transform_distance,
)
from semloc.registration import compute_rmse, fit_rigid, register_submap, sum_squared_residuals


def random_transform(rng, scale=50.0):
    return RigidTransform(rotation_from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi)),
                          rng.uniform(-scale, scale, 3))


def brute_rmse(t, veh, ref, class_filter=None):
    total, count = 0.0, 0
    for u, c in zip(veh.centroids, veh.class_ids):
        if class_filter is not None and c not in class_filter:
            continue
        same = [p for p, k in zip(ref.centroids, ref.class_ids) if k == c]
        if not same:
            continue
        v = t.rotation @ u + t.translation
        total += min(float(np.sum((v - p) ** 2)) for p in same)
        count += 1
    return math.sqrt(total / count)


def test_fit_identity():
    p = np.random.default_rng(0).normal(size=(5, 3))
    assert fit_rigid(list(zip(p, p))).allclose(RigidTransform.identity(), atol=1e-9)


def test_fit_rot90_shift():
    q = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [1, 1, 3]], dtype=float)
    t = RigidTransform(rot_z(math.pi / 2), [5, 0, 0])
    p = t.apply_points(q)
    assert fit_rigid(list(zip(p, q))).allclose(t, atol=1e-9)


def test_fit_errors():
    with pytest.raises(InsufficientCorrespondencesError):
        fit_rigid([((0, 0, 0), (0, 0, 0)), ((1, 0, 0), (1, 0, 0))])
    line = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [5, 5, 5]], dtype=float)
    with pytest.raises(DegenerateGeometryError):
        fit_rigid((line, line + 3))


def test_fit_handles_reflection_case():
    # planar points: the unconstrained SVD solution may be a reflection
    rng = np.random.default_rng(2)
    q = np.c_[rng.normal(size=(6, 2)), np.zeros(6)]
    t = RigidTransform(rotation_from_axis_angle([1, 0, 0], math.pi), [1, 2, 3])
    got = fit_rigid((t.apply_points(q), q))
    assert np.linalg.det(got.rotation) == pytest.approx(1.0)
    assert got.allclose(t, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 30))
def test_fit_exact_recovery(seed, n):
    rng = np.random.default_rng(seed)
    t = random_transform(rng)
    q = rng.uniform(-20, 20, (n, 3))
    got = fit_rigid((t.apply_points(q), q))
    dt, dr = transform_distance(got, t)
    assert dt < 1e-6 and dr < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fit_equivariance(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-10, 10, (8, 3))
    p = random_transform(rng).apply_points(q) + rng.normal(0, 0.2, (8, 3))
    s = RigidTransform(rotation_from_axis_angle(rng.normal(size=3), 1.1), [0, 0, 0])
    t = fit_rigid((p, q))
    ts = fit_rigid((s.apply_points(p), s.apply_points(q)))
    # S p = (S T S^-1) S q
    assert ts.allclose(compose(compose(s, t), inverse(s)), atol=1e-6)


def test_fit_is_locally_optimal():
    rng = np.random.default_rng(7)
    q = rng.uniform(-10, 10, (10, 3))
    p = random_transform(rng).apply_points(q) + rng.normal(0, 0.5, q.shape)
    t = fit_rigid((p, q))
    best = sum_squared_residuals(t, p, q)
    for _ in range(200):
        d = RigidTransform(rotation_from_axis_angle(rng.normal(size=3), rng.uniform(-0.05, 0.05)),
                           rng.normal(0, 0.05, 3))
        assert sum_squared_residuals(compose(d, t), p, q) >= best


def test_rmse_examples():
    ref = ObjectMap([[0, 0, 0], [10, 0, 0]], [0, 1])
    assert compute_rmse(RigidTransform.identity(), ref, ref) == 0.0
    veh = ObjectMap([[3, 0, 0]], [0])
    assert compute_rmse(RigidTransform.identity(), veh, ref) == pytest.approx(3.0)


def test_rmse_matches_brute_force():
    rng = np.random.default_rng(1)
    for n_ref in (5, 80, 300):  # below and above the tree threshold
        ref = ObjectMap(rng.uniform(0, 50, (n_ref, 3)), rng.integers(0, 3, n_ref))
        veh = ObjectMap(rng.uniform(0, 50, (5, 3)), rng.integers(0, 4, 5))
        t = random_transform(rng, 5)
        if not set(veh.class_ids) & set(ref.class_ids):
            continue
        assert compute_rmse(t, veh, ref) == pytest.approx(brute_rmse(t, veh, ref), rel=1e-12)
        assert compute_rmse(t, veh, ref, {0}) == pytest.approx(brute_rmse(t, veh, ref, {0}), rel=1e-12) \
            if 0 in veh.class_ids else True


def test_rmse_permutation_invariant_and_errors():
    rng = np.random.default_rng(4)
    ref = ObjectMap(rng.uniform(0, 9, (12, 3)), rng.integers(0, 2, 12))
    veh = ObjectMap(rng.uniform(0, 9, (7, 3)), rng.integers(0, 2, 7))
    perm = rng.permutation(7)
    assert compute_rmse(RigidTransform.identity(), veh, ref) == pytest.approx(
        compute_rmse(RigidTransform.identity(), veh.subset(perm), ref), rel=1e-12)
    with pytest.raises(NoScoreableObjectsError):
        compute_rmse(RigidTransform.identity(), ObjectMap([[0, 0, 0]], [7]), ref)
    with pytest.raises(NoScoreableObjectsError):
        compute_rmse(RigidTransform.identity(), ObjectMap.empty(), ref)


def test_register_noiseless_copy():
    rng = np.random.default_rng(8)
    ref = ObjectMap(rng.uniform(0, 60, (20, 3)), rng.integers(0, 3, 20), frame="reference")
    t = random_transform(rng)
    veh = apply_transform(inverse(t), ref)
    cand = register_submap(ref, veh, profile_config("kitti"))
    assert cand.inlier_count == 20 and cand.certified_exact
    dt, dr = transform_distance(cand.transform, t)
    assert dt < 1e-6 and dr < 1e-6 and cand.rmse < 1e-9


def test_register_identity_on_same_map():
    rng = np.random.default_rng(10)
    m = ObjectMap(rng.uniform(0, 60, (15, 3)), rng.integers(0, 2, 15))
    cand = register_submap(m, m, profile_config("kitti"))
    assert cand.transform.allclose(RigidTransform.identity(), atol=1e-9) and cand.rmse < 1e-12


def test_register_with_half_outliers():
    rng = np.random.default_rng(12)
    ref = ObjectMap(rng.uniform(0, 80, (40, 3)) * [1, 1, 0.05], rng.integers(0, 2, 40), frame="reference")
    t = random_transform(rng)
    true_veh = inverse(t).apply_points(ref.centroids[:20]) + rng.normal(0, 0.1, (20, 3))
    outliers = inverse(t).apply_points(rng.uniform(0, 80, (20, 3)) * [1, 1, 0.05])
    veh = ObjectMap(np.vstack([true_veh, outliers]), np.r_[ref.class_ids[:20], rng.integers(0, 2, 20)])
    cand = register_submap(ref, veh, profile_config("kitti", epsilon=1.0))
    dt, dr = transform_distance(cand.transform, t)
    assert dt < 0.5 and dr < 2.0
    assert {(i, i) for i in range(20)} <= {(a.ref_index, a.veh_index) for a in cand.inliers}


def test_register_small_clique_is_unusable():
    ref = ObjectMap([[0, 0, 0], [5, 0, 0]], [0, 0])
    cand = register_submap(ref, ref, profile_config("kitti"))
    assert not cand.usable and cand.inlier_count == 2 and cand.transform is None


def test_register_collinear_clique_is_unusable():
    ref = ObjectMap([[0, 0, 0], [5, 0, 0], [9, 0, 0], [20, 0, 0]], [0, 0, 0, 0])
    cand = register_submap(ref, ref, profile_config("kitti"))
    assert not cand.usable and cand.inlier_count == 4

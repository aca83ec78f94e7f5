from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchy.errors import DegenerateBoundary, DomainValidationError
from patchy.geometry import HalfSpace, SmoothDomain, ball, ellipsoid, smooth_intersection

B2 = ball([0.0, 0.0], 2.0)
ELL = ellipsoid([0.0, 0.0], [2.0, 1.0])


def dense_ellipse(n: int = 200_001) -> np.ndarray:
    th = np.linspace(0.0, 2.0 * math.pi, n)
    return np.column_stack([2.0 * np.cos(th), np.sin(th)])


DENSE = dense_ellipse()


def oracle_distance(x) -> float:
    d = float(np.min(np.linalg.norm(DENSE - np.asarray(x), axis=1)))
    inside = x[0] ** 2 / 4 + x[1] ** 2 < 1
    return d if inside else -d


def test_contains_ball():
    assert B2.contains([0.0, 0.0])
    assert not B2.contains([2.0, 0.0])
    assert not B2.contains([3.0, 0.0])


def test_signed_distance_ball():
    assert B2.signed_distance([1.0, 0.0]) == pytest.approx(1.0)
    assert B2.signed_distance([3.0, 0.0]) == pytest.approx(-1.0)


def test_signed_distance_ellipse_center():
    assert ELL.signed_distance([0.0, 0.0]) == pytest.approx(1.0, abs=1e-9)
    assert oracle_distance([0.0, 0.0]) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("x", [[0.3, 0.2], [1.5, -0.4], [-2.3, 0.5], [0.0, 1.4], [1.0, 0.8]])
def test_signed_distance_ellipse_matches_dense_oracle(x):
    assert ELL.signed_distance(x) == pytest.approx(oracle_distance(x), abs=1e-6)


def test_outer_normal():
    assert np.allclose(B2.outer_normal([2.0, 0.0]), [1.0, 0.0], atol=1e-12)
    assert np.allclose(B2.outer_normal([0.0, -2.0]), [0.0, -1.0], atol=1e-12)
    n = ELL.outer_normal([2.0, 0.0])
    assert np.allclose(n, [1.0, 0.0], atol=1e-12)
    assert abs(np.linalg.norm(n) - 1.0) < 1e-12


def test_project_boundary():
    assert np.allclose(B2.project_boundary([1.0, 0.0]), [2.0, 0.0])
    assert np.allclose(B2.project_boundary([0.0, 2.5]), [0.0, 2.0])
    p = ELL.project_boundary([0.0, 0.5])
    assert np.allclose(p, [0.0, 1.0], atol=1e-8)
    assert abs(ELL.level(p)) <= 1e-10


def test_inset_contains():
    assert B2.inset_contains(0.5, [1.0, 0.0])
    assert not B2.inset_contains(0.5, [1.8, 0.0])
    assert ELL.inset_contains(0.0, [0.1, 0.1])
    assert B2.inset_contains(1.0, [1.0, 0.0])  # closed inequality


def test_regularity_rejects_flat_level_set():
    # psi = (|x|^2 - 1)^3 has a vanishing gradient on its zero set
    with pytest.raises(DomainValidationError):
        SmoothDomain(lambda x: (x @ x - 1.0) ** 3, lambda x: 6.0 * (x @ x - 1.0) ** 2 * x, 1.0, [0.0, 0.0])


def test_degenerate_normal_raises():
    dom = SmoothDomain(lambda x: x @ x - 1.0, lambda x: 2.0 * x, 1.0, [0.0, 0.0])
    flat = SmoothDomain(lambda x: x @ x - 1.0, lambda x: 2.0 * x * (abs(x[1]) > 1e-3), 1.0,
                        [0.0, 0.0], check=False)
    assert np.allclose(dom.outer_normal([0.0, 1.0]), [0.0, 1.0])
    with pytest.raises(DegenerateBoundary):
        flat.outer_normal([1.0, 0.0])


def test_smooth_intersection_is_inside_parts():
    dom = smooth_intersection([HalfSpace(np.array([1.0, 0.0]), 1.0), HalfSpace(np.array([0.0, 1.0]), 1.0),
                               HalfSpace(np.array([-1.0, 0.0]), 1.0), HalfSpace(np.array([0.0, -1.0]), 1.0)],
                              20.0, center=[0.0, 0.0], bounding_radius=2.0)
    assert dom.contains([0.0, 0.0])
    assert not dom.contains([1.01, 0.0])
    # the softmax boundary lies inside the square
    assert dom.signed_distance([0.0, 0.0]) <= 1.0 + 1e-9


def test_boundary_samples_nested():
    a = ELL.boundary_samples(16)
    b = ELL.boundary_samples(64)
    assert np.allclose(a, b[:16])


pts = st.tuples(st.floats(-2.6, 2.6), st.floats(-1.6, 1.6)).map(np.array)


@settings(max_examples=60, deadline=None)
@given(pts, pts)
def test_signed_distance_is_1_lipschitz(x, y):
    assert abs(ELL.signed_distance(x) - ELL.signed_distance(y)) <= np.linalg.norm(x - y) + 1e-8


@settings(max_examples=60, deadline=None)
@given(pts)
def test_sign_matches_membership(x):
    phi = ELL.signed_distance(x)
    if abs(phi) > 1e-8:
        assert ELL.contains(x) == (phi > 0)


@settings(max_examples=40, deadline=None)
@given(pts)
def test_projection_idempotent(x):
    p = ELL.project_boundary(x)
    assert np.linalg.norm(ELL.project_boundary(p) - p) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(pts)
def test_normal_parallel_to_offset(x):
    phi = ELL.signed_distance(x)
    if abs(phi) < 1e-6:
        return
    p = ELL.project_boundary(x)
    r = (x - p) / np.linalg.norm(x - p)
    n = ELL.outer_normal(x)
    cos = float(r @ n) * (-1.0 if phi > 0 else 1.0)
    assert math.acos(min(1.0, cos)) <= 1e-6

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentz_compare.errors import DegeneracyError, DomainError, ModelError, StencilError
from lorentz_compare.spacetime import (
    CoordinateMetric,
    SpaceForm,
    TangentVector,
    TimelikePlane,
    connection_coefficients,
    curvature_apply,
    curvature_tensor,
    inner,
    model_from_json,
    orthonormal_frame,
    random_unit_timelike,
    ricci_timelike,
    sample_timelike_plane,
    sectional_timelike,
    stream,
)

POINTS = {
    0.0: np.array([0.3, 0.2, -0.4, 0.1]),
    1.0: np.array([0.3, 0.2, -0.4, 0.1]),
    -1.0: np.array([0.3, 0.5, -0.4, 0.7]),
}


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0])
def test_embedding_lies_on_quadric(c):
    m = SpaceForm(c, 3)
    X = m.embed(POINTS[c])
    target = 0.0 if c == 0 else (m.a**2 if c > 0 else -m.a**2)
    if c != 0:
        assert m.ambient_inner(X, X) == pytest.approx(target, rel=1e-13)
    assert np.allclose(m.chart(X), POINTS[c], atol=1e-12)


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0, 0.25])
def test_christoffel_closed_form_matches_fd(c):
    m = SpaceForm(c, 3)
    x = POINTS[np.sign(c) * 1.0 if c else 0.0]
    assert np.max(np.abs(m.christoffel(x) - m.christoffel_fd(x))) < 1e-7


def test_minkowski_is_flat():
    m = SpaceForm(0.0, 3)
    x = POINTS[0.0]
    assert np.all(m.christoffel(x) == 0)
    assert np.all(m.curvature(x) == 0)


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0, -0.3])
def test_constant_sectional_and_ricci(c):
    m = SpaceForm(c, 3)
    x = POINTS[np.sign(c) * 1.0 if c else 0.0]
    for i in range(5):
        plane = sample_timelike_plane(m, x, stream(7, i))
        plane.check()
        assert sectional_timelike(m, plane) == pytest.approx(c, abs=1e-10)
        assert ricci_timelike(m, x, plane.V) == pytest.approx(-3 * c, abs=1e-10)


@pytest.mark.parametrize("c", [-1.0, 1.0])
def test_curvature_matches_space_form_formula(c):
    m = SpaceForm(c, 2)
    x = np.array([0.2, 0.3, -0.1])
    g = m.metric(x)
    R = m.curvature(x)
    rng = stream(3)
    for _ in range(5):
        X, Y, Z = rng.normal(size=(3, 3))
        expect = c * (inner(g, Y, Z) * X - inner(g, X, Z) * Y)
        assert np.allclose(curvature_apply(R, X, Y, Z), expect, atol=1e-10)
    # FD curvature from the closed connection agrees
    assert np.max(np.abs(m.curvature_fd(x) - R)) < 1e-6


def test_curvature_symmetries_and_bianchi():
    m = CoordinateMetric(2, "builtin:frw_quadratic")
    x = np.array([0.4, 0.1, -0.2])
    R = m.curvature(x)
    g = m.metric(x)
    low = np.einsum("ml,lkij->mkij", g, R)  # R_{mkij}
    assert np.max(np.abs(R + np.swapaxes(R, 2, 3))) < 1e-6
    assert np.max(np.abs(low + np.swapaxes(low, 0, 1))) < 1e-5
    assert np.max(np.abs(low - np.transpose(low, (2, 3, 0, 1)))) < 1e-5
    bianchi = R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2))
    assert np.max(np.abs(bianchi)) < 1e-6


def test_coordinate_metric_minkowski_has_no_curvature():
    m = CoordinateMetric(3, "builtin:minkowski")
    x = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.max(np.abs(m.christoffel(x))) < 1e-10
    assert np.max(np.abs(m.curvature(x))) < 1e-8


def test_coordinate_de_sitter_flat_has_curvature_one():
    m = CoordinateMetric(3, "builtin:de_sitter_flat")
    x = np.array([0.2, 0.1, -0.3, 0.0])
    plane = sample_timelike_plane(m, x, stream(1))
    assert sectional_timelike(m, plane) == pytest.approx(1.0, abs=1e-5)


def test_frw_timelike_curvature():
    m = CoordinateMetric(2, "builtin:frw_quadratic")
    t = 0.6
    w = 1 + t * t / 4
    plane = TimelikePlane(m, np.array([t, 0.0, 0.0]), np.array([1.0, 0, 0]), np.array([0, 1 / w, 0]))
    assert sectional_timelike(m, plane) == pytest.approx(0.5 / w, abs=1e-5)


def test_stencil_error_near_boundary():
    m = CoordinateMetric(2, "builtin:minkowski", lo=[-1, -1, -1], hi=[1, 1, 1])
    with pytest.raises(StencilError):
        m.christoffel_fd(np.array([0.99999, 0.0, 0.0]))


def test_domain_errors():
    with pytest.raises(DomainError):
        connection_coefficients(SpaceForm(1.0, 2), np.array([0.0, 1.5, 0.0]))
    assert not SpaceForm(-1.0, 2).in_domain([4.0, 0.0, 0.0])


def test_model_from_json_and_errors():
    assert model_from_json({"kind": "space_form", "c": -1, "n": 3}).describe() == {
        "kind": "space_form", "c": -1.0, "n": 3}
    with pytest.raises(ModelError):
        model_from_json({"kind": "warp"})
    with pytest.raises(ModelError):
        CoordinateMetric(2, "builtin:nope")


def test_degenerate_plane():
    m = SpaceForm(0.0, 2)
    V = np.array([1.0, 0, 0])
    plane = TimelikePlane(m, np.zeros(3), V, V)
    with pytest.raises(DegeneracyError):
        sectional_timelike(m, plane)


def test_causal_types():
    m = SpaceForm(0.0, 2)
    p = np.zeros(3)
    assert TangentVector(m, p, np.array([1.0, 0.2, 0])).causal_type == "timelike"
    assert TangentVector(m, p, np.array([1.0, 1.0, 0])).causal_type == "null"
    assert TangentVector(m, p, np.array([0.1, 1.0, 0])).causal_type == "spacelike"
    assert TangentVector(m, p, np.array([1.0, 0.2, 0])).future
    assert not TangentVector(m, p, np.array([-1.0, 0.2, 0])).future


def test_orthonormal_frame_rejects_riemannian():
    with pytest.raises(ModelError):
        orthonormal_frame(np.eye(3))


def test_sampling_is_deterministic():
    m = SpaceForm(1.0, 3)
    x = POINTS[1.0]
    a = sample_timelike_plane(m, x, stream(11, 4))
    b = sample_timelike_plane(m, x, stream(11, 4))
    assert np.array_equal(a.V, b.V) and np.array_equal(a.X, b.X)
    c = sample_timelike_plane(m, x, stream(11, 5))
    assert not np.array_equal(a.V, c.V)


def test_thousand_planes_in_de_sitter():
    m = SpaceForm(1.0, 3)
    x = POINTS[1.0]
    R = curvature_tensor(m, x)
    g = m.metric(x)
    rng = stream(2024)
    ks = []
    for _ in range(1000):
        V = random_unit_timelike(m, x, rng)
        X = rng.normal(size=4)
        X = X + inner(g, X, V) * V
        X = X / math.sqrt(inner(g, X, X))
        ks.append(inner(g, curvature_apply(R, V, X, X), V) / (-1.0))
    ks = np.array(ks)
    assert ks.max() - ks.min() <= 1e-4
    assert abs(ks.mean() - 1.0) <= 1e-4


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_random_timelike_is_unit_and_future(seed):
    m = SpaceForm(-1.0, 3)
    x = POINTS[-1.0]
    V = random_unit_timelike(m, x, stream(seed))
    assert inner(m.metric(x), V, V) == pytest.approx(-1.0, abs=1e-10)
    assert TangentVector(m, x, V).future

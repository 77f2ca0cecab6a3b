import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentz_compare.comparison_ode import CurvatureProfile, f_c
from lorentz_compare.errors import DomainError, HypothesisError, ModelError
from lorentz_compare.radial_geometry import (
    bochner_residual,
    exp_map,
    hess_r,
    integrate_geodesic,
    laplacian_r,
    lorentz_distance,
    radial_frame,
    sample_chronological,
    shoot,
    verify_hessian_comparison,
    verify_laplacian_comparison,
)
from lorentz_compare.spacetime import CoordinateMetric, SpaceForm, inner, stream

COTH_1 = 1.3130352854993313036
MINK = SpaceForm(0.0, 3)
O = np.zeros(4)


def _q(*xs):
    return np.array(xs, dtype=float)


# --- distance ---------------------------------------------------------------


def test_minkowski_distance_examples():
    chk, r = lorentz_distance(MINK, O, _q(2, 0, 0, 0))
    assert chk.related and r == pytest.approx(2.0, abs=1e-14)
    chk, r = lorentz_distance(MINK, O, _q(5, 3, 0, 0))
    assert chk.reason == "chronological" and r == pytest.approx(4.0, abs=1e-13)
    chk, r = lorentz_distance(MINK, O, _q(1, 2, 0, 0))
    assert not chk.related and chk.reason == "not_chronological" and r == 0.0
    chk, r = lorentz_distance(MINK, O, _q(-2, 0, 0, 0))
    assert not chk.related and r == 0.0


@pytest.mark.parametrize("c", [-1.0, 1.0, 0.5])
def test_distance_matches_exp_map(c):
    m = SpaceForm(c, 3)
    p = _q(0.1, 0.2, -0.1, 0.05)
    rng = stream(5)
    from lorentz_compare.spacetime import random_unit_timelike

    for t in (0.3, 1.0, 2.0):
        v = random_unit_timelike(m, p, rng, 0.8)
        q, _ = exp_map(m, p, v, t)
        chk, r = lorentz_distance(m, p, q)
        assert chk.related and r == pytest.approx(t, abs=1e-10)


def test_anti_de_sitter_outside_domain():
    m = SpaceForm(-1.0, 2)
    # past the focal time pi on the static axis
    chk, r = lorentz_distance(m, _q(-0.6 * math.pi, 0, 0), _q(0.6 * math.pi, 0, 0))
    assert chk.reason == "outside_domain" and not chk.related and r == 0.0
    # ambient pairing S <= -1
    chk, r = lorentz_distance(m, _q(0, 0, 0), _q(math.pi * 0.99, 1.0, 0))
    assert chk.reason == "outside_domain"
    chk, _ = lorentz_distance(m, _q(0.6 * math.pi, 0, 0), _q(-0.6 * math.pi, 0, 0))
    assert chk.reason == "not_chronological"
    chk, r = lorentz_distance(m, _q(0, 0, 0), _q(0.9 * math.pi, 0, 0))
    assert chk.related and r == pytest.approx(0.9 * math.pi, abs=1e-12)


def test_distance_only_in_space_forms():
    with pytest.raises(ModelError):
        lorentz_distance(CoordinateMetric(3, "builtin:minkowski"), O, _q(1, 0, 0, 0))


# --- geodesics --------------------------------------------------------------


def test_minkowski_geodesic_is_straight_line():
    v = _q(1, 0, 0, 0)
    geo = integrate_geodesic(MINK, O, v, 2.0, 0.1)
    assert np.allclose(geo.positions, geo.t[:, None] * v, atol=1e-14)
    w = _q(math.cosh(0.5), math.sinh(0.5), 0, 0)
    geo = integrate_geodesic(MINK, O, w, 2.0, 0.1)
    assert np.allclose(geo.positions, geo.t[:, None] * w, atol=1e-13)


def test_mirrored_path():
    w = _q(math.cosh(0.5), math.sinh(0.5), 0.0, 0.0)
    a = integrate_geodesic(MINK, O, w, 1.0, 0.1)
    b = integrate_geodesic(MINK, O, -w, 1.0, 0.1)
    assert np.allclose(a.positions, -b.positions, atol=1e-14)


def test_anti_de_sitter_geodesic_unit_speed():
    m = SpaceForm(-1.0, 3)
    p = _q(-1.0, 0.2, 0.0, -0.1)
    from lorentz_compare.spacetime import random_unit_timelike

    v = random_unit_timelike(m, p, stream(2), 0.7)
    geo = integrate_geodesic(m, p, v, 3.0, 1e-2)
    assert not geo.truncated
    speed = np.array([inner(m.metric(x), u, u) for x, u in zip(geo.positions, geo.velocities)])
    assert np.max(np.abs(speed + 1)) < 1e-8
    # geodesic residual against the closed exponential map
    x_exact, _ = exp_map(m, p, v, geo.t)
    assert np.max(np.abs(geo.positions - x_exact)) < 1e-6


def test_geodesic_truncates_at_chart_boundary():
    m = SpaceForm(-1.0, 2)
    geo = integrate_geodesic(m, _q(3.0, 0, 0), _q(1.0, 0, 0), 1.0, 0.05)
    assert geo.truncated and geo.t[-1] < 1.0


# --- gradient ---------------------------------------------------------------


def test_gradient_examples():
    rd = radial_frame(MINK, O, _q(2, 0, 0, 0))
    assert np.allclose(rd.grad, [-1, 0, 0, 0], atol=1e-14)
    rd = radial_frame(MINK, O, _q(5, 3, 0, 0))
    assert np.allclose(rd.grad, -_q(5, 3, 0, 0) / 4, atol=1e-14)
    assert inner(MINK.metric(rd.q), rd.grad, rd.grad) == pytest.approx(-1.0, abs=1e-12)
    assert rd.grad[0] < 0


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0])
def test_shooting_matches_closed_form(c):
    m = SpaceForm(c, 3)
    p = _q(0.0, 0.1, 0.0, 0.0)
    for q in sample_chronological(m, p, 3, seed=9, r_range=(0.3, 1.5)):
        a = radial_frame(m, p, q, "closed")
        b = radial_frame(m, p, q, "shooting")
        assert a.r == pytest.approx(b.r, abs=1e-10)
        assert np.max(np.abs(a.grad - b.grad)) < 1e-8
        w, u, r, it = shoot(m, p, q)
        assert it < 50


def test_radial_frame_rejects_unrelated():
    with pytest.raises(DomainError):
        radial_frame(MINK, O, _q(1, 2, 0, 0))


# --- Hessian / Laplacian ----------------------------------------------------


def test_minkowski_hessian_example():
    rd = hess_r(MINK, O, _q(2, 0, 0, 0))
    assert np.allclose(rd.transverse_eigenvalues, -0.5, atol=1e-8)
    assert np.linalg.norm(rd.hess[:, 0]) < 1e-8
    assert rd.laplacian == pytest.approx(-1.5, abs=1e-8)


def test_de_sitter_hessian_eigenvalues_at_unit_distance():
    m = SpaceForm(1.0, 3)
    p = np.zeros(4)
    from lorentz_compare.spacetime import random_unit_timelike

    v = random_unit_timelike(m, p, stream(4), 0.5)
    q, _ = exp_map(m, p, v, 1.0)
    for method in ("finite_difference", "jacobi"):
        rd = hess_r(m, p, q, method)
        assert np.allclose(rd.transverse_eigenvalues, -COTH_1, atol=1e-4)


@pytest.mark.parametrize("c", [-1.0, 0.0, 1.0])
def test_laplacian_space_form_closed_form(c):
    m = SpaceForm(c, 3)
    p = np.zeros(4)
    for q in sample_chronological(m, p, 4, seed=3, r_range=(0.3, 2.0)):
        rd = hess_r(m, p, q)
        assert rd.laplacian == pytest.approx(-3 * f_c(c, rd.r), abs=1e-4)


def test_laplacian_homogeneity():
    q = _q(3.0, 1.0, -0.5, 0.7)
    assert laplacian_r(MINK, O, 2 * q) == pytest.approx(laplacian_r(MINK, O, q) / 2, rel=1e-7)


def test_methods_agree_at_fifty_minkowski_points():
    for q in sample_chronological(MINK, O, 50, seed=123):
        a = hess_r(MINK, O, q, "finite_difference")
        b = hess_r(MINK, O, q, "jacobi")
        assert np.max(np.abs(a.transverse_eigenvalues - b.transverse_eigenvalues)) < 1e-4


def test_radial_data_invariants():
    m = SpaceForm(1.0, 3)
    p = np.zeros(4)
    for q in sample_chronological(m, p, 5, seed=8):
        rd = hess_r(m, p, q)
        g = m.metric(q)
        assert inner(g, rd.grad, rd.grad) == pytest.approx(-1.0, abs=1e-8)
        assert np.linalg.norm(rd.hess[:, 0]) <= 1e-5
        # symmetric in the orthonormal frame up to the signature
        eta = np.diag([-1.0, 1, 1, 1])
        S = eta @ rd.hess
        assert np.max(np.abs(S - S.T)) < 1e-6


# --- Bochner ----------------------------------------------------------------


def test_bochner_minkowski():
    for q in sample_chronological(MINK, O, 5, seed=1):
        assert abs(bochner_residual(MINK, O, q)) <= 1e-4


def test_bochner_de_sitter():
    m = SpaceForm(1.0, 3)
    for q in sample_chronological(m, np.zeros(4), 3, seed=2):
        assert abs(bochner_residual(m, np.zeros(4), q)) <= 1e-3


def test_bochner_rotation_invariant():
    q = _q(3.0, 1.0, 0.5, 0.0)
    th = 0.7
    Rot = np.eye(4)
    Rot[1:3, 1:3] = [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
    a = bochner_residual(MINK, O, q)
    b = bochner_residual(MINK, O, Rot @ q)
    assert abs(a - b) < 1e-6


# --- verification reports --------------------------------------------------


def test_hessian_comparison_equality_in_minkowski():
    qs = sample_chronological(MINK, O, 10, seed=0)
    rep = verify_hessian_comparison(MINK, CurvatureProfile.constant(0.0), qs, "upper_G")
    assert rep.n_samples == 80
    assert max(abs(row["raw_margin"]) for row in rep.rows) <= 1e-5


def test_hessian_comparison_strict_for_larger_G():
    qs = sample_chronological(MINK, O, 10, seed=0)
    rep = verify_hessian_comparison(MINK, CurvatureProfile.constant(1.0), qs, "upper_G")
    assert rep.passed
    assert min(row["raw_margin"] for row in rep.rows) > 0
    for row in rep.rows[:8]:
        r = row["r"]
        assert row["raw_margin"] == pytest.approx(1 / math.tanh(r) - 1 / r, abs=1e-5)


def test_hessian_comparison_wrong_side_is_rejected():
    qs = sample_chronological(MINK, O, 3, seed=0)
    with pytest.raises(HypothesisError):
        verify_hessian_comparison(MINK, CurvatureProfile.constant(1.0), qs, "lower_G")


def test_de_sitter_lower_side_equality():
    m = SpaceForm(1.0, 3)
    qs = sample_chronological(m, np.zeros(4), 5, seed=4)
    rep = verify_hessian_comparison(m, CurvatureProfile.constant(1.0), qs, "lower_G")
    assert rep.passed and max(abs(row["raw_margin"]) for row in rep.rows) <= 1e-4


def test_laplacian_comparison_examples():
    qs = sample_chronological(MINK, O, 8, seed=6)
    rep = verify_laplacian_comparison(MINK, CurvatureProfile.constant(0.0), qs)
    assert max(abs(row["margin"]) for row in rep.rows) <= 1e-5
    rep = verify_laplacian_comparison(MINK, CurvatureProfile.constant(1.0), qs)
    for row in rep.rows:
        r = row["r"]
        assert row["margin"] == pytest.approx(3 * (1 / math.tanh(r) - 1 / r), abs=1e-5)
    m = SpaceForm(-1.0, 3)
    qs = sample_chronological(m, np.zeros(4), 6, seed=6, r_range=(0.2, 2.8))
    rep = verify_laplacian_comparison(m, CurvatureProfile.constant(-1.0), qs)
    assert rep.passed and max(abs(row["margin"]) for row in rep.rows) <= 1e-4


def test_samples_near_r0_are_excluded():
    m = SpaceForm(-1.0, 3)
    p = np.zeros(4)
    from lorentz_compare.spacetime import random_unit_timelike

    v = random_unit_timelike(m, p, stream(0), 0.3)
    near, _ = exp_map(m, p, v, math.pi - 5e-4)
    ok, _ = exp_map(m, p, v, 1.0)
    rep = verify_laplacian_comparison(m, CurvatureProfile.constant(-1.0), [ok, near])
    assert rep.n_excluded == 1 and rep.excluded[0]["reason"] == "r0_band"


def test_sampling_is_deterministic():
    a = sample_chronological(SpaceForm(1.0, 3), np.zeros(4), 4, seed=17)
    b = sample_chronological(SpaceForm(1.0, 3), np.zeros(4), 4, seed=17)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@given(seed=st.integers(0, 5000), c=st.sampled_from([-1.0, 0.0, 1.0]))
@settings(max_examples=20, deadline=None)
def test_eikonal_property(seed, c):
    m = SpaceForm(c, 3)
    q = sample_chronological(m, np.zeros(4), 1, seed=seed)[0]
    rd = radial_frame(m, np.zeros(4), q)
    assert inner(m.metric(q), rd.grad, rd.grad) == pytest.approx(-1.0, abs=1e-8)
    assert rd.grad[0] < 0

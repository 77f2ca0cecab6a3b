import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentz_compare.comparison_ode import (
    CurvatureProfile,
    Sampled,
    f_c,
    f_c_inverse,
    riccati_compare,
    riccati_solve,
    slope,
    solve_h,
    sturm_verify,
)
from lorentz_compare.errors import (
    AlignmentError,
    ContractError,
    DomainError,
    ProfileDomainError,
    ResolutionError,
    SeedingError,
)

# coth(1) evaluated independently (mpmath, 30 digits), frozen
COTH_1 = 1.3130352854993313036


# --- profiles ---------------------------------------------------------------


def test_profile_evenness_is_structural():
    G = CurvatureProfile.even_polynomial([1.0, -0.5, 0.25])
    t = np.linspace(-3, 3, 41)
    assert np.array_equal(G.value(t), G.value(-t))


def test_polynomial_with_odd_term_is_rejected():
    with pytest.raises(ProfileDomainError, match="even"):
        CurvatureProfile.polynomial([1.0, 0.3])
    G = CurvatureProfile.polynomial([1.0, 0.0, 2.0])
    assert G.value(2.0) == pytest.approx(9.0)


def test_tabulated_profile_is_c1_and_bounded():
    t = np.linspace(0, 2, 21)
    G = CurvatureProfile.tabulated(t, np.cos(t))
    assert G.value(0.5) == pytest.approx(math.cos(0.5), abs=1e-3)
    # symmetric extension: zero slope at the origin
    eps = 1e-6
    assert abs(G.value(eps) - G.value(-eps)) < 1e-15
    with pytest.raises(ProfileDomainError):
        G.value(2.5)


def test_profile_json_roundtrip():
    for G in (CurvatureProfile.constant(-1), CurvatureProfile.even_polynomial([0.5, 1.0])):
        obj = G.to_json()
        flat = {"kind": obj["kind"], **obj["params"]}
        assert CurvatureProfile.from_json(flat) == G


# --- solve_h ----------------------------------------------------------------


def test_zero_curvature_is_linear():
    sol = solve_h(CurvatureProfile.constant(0.0), 4.0, 1e-3)
    assert np.max(np.abs(sol.h - sol.t)) < 1e-12
    assert math.isinf(sol.r0)
    assert sol.h[0] == 0.0 and sol.h_prime[0] == 1.0


def test_negative_curvature_sine_and_first_zero():
    sol = solve_h(CurvatureProfile.constant(-1.0), 4.0, 1e-3)
    assert abs(sol.r0 - math.pi) < 1e-6
    m = sol.t <= 3.0
    assert np.max(np.abs(sol.h[m] - np.sin(sol.t[m]))) < 1e-8
    # nodes past r0 are kept and flagged
    assert sol.t[-1] == pytest.approx(4.0)
    assert not sol.inside[-1]
    assert np.all(sol.h[(sol.t > 0) & sol.inside] > 0)


def test_positive_curvature_sinh():
    sol = solve_h(CurvatureProfile.constant(1.0), 3.0, 1e-3)
    assert np.max(np.abs(sol.h - np.sinh(sol.t))) < 1e-7
    assert math.isinf(sol.r0)


@pytest.mark.parametrize("c", [-2.5, -1.0, -0.3, 0.0, 0.4, 1.0])
def test_closed_forms_sup_norm(c):
    T = 3.0 if c >= 0 else min(3.0, 0.9 * math.pi / math.sqrt(-c))
    sol = solve_h(CurvatureProfile.constant(c), T + 0.5, 1e-3)
    m = sol.t <= T
    if c > 0:
        exact = np.sinh(math.sqrt(c) * sol.t) / math.sqrt(c)
    elif c == 0:
        exact = sol.t
    else:
        exact = np.sin(math.sqrt(-c) * sol.t) / math.sqrt(-c)
    assert np.max(np.abs(sol.h[m] - exact[m])) <= 1e-8


def test_order_four_refinement():
    G = CurvatureProfile.even_polynomial([-1.0, -0.2])
    r = [solve_h(G, 4.0, s).r0 for s in (4e-2, 2e-2, 1e-2)]
    d1, d2 = abs(r[0] - r[1]), abs(r[1] - r[2])
    assert d2 <= d1 / 8
    # halving the step changes h by O(dt^4)
    a = solve_h(G, 2.0, 2e-2)
    b = solve_h(G, 2.0, 1e-2)
    diff = np.max(np.abs(a.h - b.h[::2]))
    assert diff < 1e-7


def test_solve_h_preconditions():
    G = CurvatureProfile.constant(0.0)
    with pytest.raises(DomainError):
        solve_h(G, 1.0, 0.2)
    with pytest.raises(DomainError):
        solve_h(G, -1.0, 0.01)


def test_resolution_error_on_coarse_step():
    # h = sin(10 t)/10 crosses zero twice inside one step of 0.5
    G = CurvatureProfile.constant(-100.0)
    with pytest.raises(ResolutionError):
        solve_h(G, 5.0, 0.5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_profile_is_a_domain_error():
    G = CurvatureProfile.even_polynomial([1e308, 1e308])
    with pytest.raises(ProfileDomainError):
        solve_h(G, 10.0, 1.0)


# --- slope / f_c ------------------------------------------------------------


def test_slope_examples():
    assert slope(solve_h(CurvatureProfile.constant(0.0), 4.0, 1e-3), 2.0) == pytest.approx(0.5, abs=1e-12)
    s = solve_h(CurvatureProfile.constant(-1.0), 4.0, 1e-3)
    assert abs(slope(s, math.pi / 2)) < 1e-9
    s1 = solve_h(CurvatureProfile.constant(1.0), 4.0, 1e-3)
    assert slope(s1, 1.0) == pytest.approx(COTH_1, abs=1e-9)
    # series branch near the vertex
    assert slope(s1, 5e-4) == pytest.approx(1 / 5e-4 + 5e-4 / 3, rel=1e-12)


def test_slope_domain():
    s = solve_h(CurvatureProfile.constant(-1.0), 4.0, 1e-3)
    with pytest.raises(DomainError):
        slope(s, 0.0)
    with pytest.raises(DomainError):
        slope(s, 3.2)


def test_slope_decreasing_for_constant_profiles():
    for c in (-1.0, 0.0, 1.0):
        s = solve_h(CurvatureProfile.constant(c), 3.0, 1e-3)
        t = s.t[(s.t > 0) & (s.t < min(s.r0, 3.0) - 1e-3)]
        v = slope(s, t)
        assert np.all(np.diff(v) < 0)


def test_f_c_examples():
    assert f_c(0.0, 2.0) == 0.5
    assert abs(f_c(-1.0, math.pi / 2)) < 1e-15
    assert f_c(1.0, 1.0) == pytest.approx(COTH_1, rel=1e-14)
    with pytest.raises(DomainError, match="pi/sqrt"):
        f_c(-1.0, 3.2)
    with pytest.raises(DomainError):
        f_c(1.0, 0.0)


@given(c=st.floats(-2.0, 2.0), t=st.floats(0.05, 1.0))
@settings(max_examples=60, deadline=None)
def test_f_c_inverse_roundtrip(c, t):
    y = f_c(c, t)
    assert f_c_inverse(c, y) == pytest.approx(t, abs=1e-10)


# --- Sturm ------------------------------------------------------------------


def _pair(f, df, g, dg, T=math.pi, n=2001):
    t = np.linspace(0, T, n)
    return Sampled.from_functions(f, df, t), Sampled.from_functions(g, dg, t)


def test_sturm_holds_for_sin_sinh():
    phi, psi = _pair(np.sin, np.cos, np.sinh, np.cosh)
    v = sturm_verify(phi, psi)
    assert v.holds and v.min_margin >= 0


def test_sturm_equality_case():
    phi, psi = _pair(lambda t: t, np.ones_like, lambda t: t, np.ones_like, T=3.0)
    v = sturm_verify(phi, psi)
    assert v.holds and abs(v.min_margin) < 1e-12


def test_sturm_fails_on_swapped_pair():
    phi, psi = _pair(np.sinh, np.cosh, np.sin, np.cos)
    v = sturm_verify(phi, psi)
    assert not v.holds and v.min_margin < 0


def test_sturm_alignment():
    a = Sampled.from_functions(np.sin, np.cos, np.linspace(0, 3, 11))
    b = Sampled.from_functions(np.sin, np.cos, np.linspace(0, 3, 12))
    with pytest.raises(AlignmentError):
        sturm_verify(a, b)


# --- Riccati ----------------------------------------------------------------


def test_riccati_flat_upper_is_one_over_t():
    g = riccati_solve(CurvatureProfile.constant(0.0), 1.0, "upper", 3.0, 1e-2)
    assert np.max(np.abs(g.g - 1 / g.t)) < 1e-6
    assert g.blow_up_time is None
    # vertex asymptote g t -> alpha
    assert g.g_start * g.t_start == pytest.approx(1.0, rel=1e-6)


def test_riccati_upper_matches_cot_and_blows_up_at_pi():
    g = riccati_solve(CurvatureProfile.constant(-1.0), 1.0, "upper", 4.0, 1e-3)
    assert abs(g.blow_up_time - math.pi) < 1e-4
    m = g.t < 3.0
    assert np.max(np.abs(g.g[m] - 1 / np.tan(g.t[m]))) < 1e-6


def test_riccati_alpha_scaling():
    g = riccati_solve(CurvatureProfile.constant(1.0), 2.0, "upper", 3.0, 1e-2)
    assert np.max(np.abs(g.g - 2.0 / np.tanh(g.t))) < 1e-6


def test_riccati_upper_equals_alpha_times_slope():
    G = CurvatureProfile.even_polynomial([-0.5, 0.1])
    sol = solve_h(G, 3.0, 1e-3)
    g = riccati_solve(G, 1.5, "upper", 3.0, 1e-2)
    m = g.t < min(sol.r0, 3.0) - 0.05
    assert np.max(np.abs(g.g[m] - 1.5 * slope(sol, g.t[m]))) < 1e-6


def test_riccati_compare_families():
    G0 = CurvatureProfile.constant(0.0)
    v = riccati_compare(riccati_solve(G0, 1.0, "lower", 3.0, 1e-2),
                        riccati_solve(G0, 1.0, "upper", 3.0, 1e-2))
    assert v.holds
    Gm = CurvatureProfile.constant(-1.0)
    g1 = riccati_solve(Gm, 1.0, "lower", 4.0, 1e-2)
    g2 = riccati_solve(Gm, 1.0, "upper", 4.0, 1e-2)
    v = riccati_compare(g1, g2)
    assert v.holds and v.min_margin >= -1e-6
    assert abs(g1.blow_up_time - math.pi) < 1e-4 and abs(g2.blow_up_time - math.pi) < 1e-4


def test_riccati_compare_detects_perturbation():
    G0 = CurvatureProfile.constant(0.0)
    g1 = riccati_solve(G0, 1.0, "lower", 3.0, 1e-2)
    g2 = riccati_solve(G0, 1.0, "upper", 3.0, 1e-2)
    from dataclasses import replace

    bad = replace(g2, g=g2.g - 3.0)
    assert not riccati_compare(g1, bad).holds


def test_riccati_contracts():
    G = CurvatureProfile.constant(0.0)
    with pytest.raises(ContractError):
        riccati_compare(riccati_solve(G, 1.0, "lower", 1.0, 0.1), riccati_solve(G, 2.0, "upper", 1.0, 0.1))
    with pytest.raises(ContractError):
        riccati_solve(G, -1.0, "upper", 1.0, 0.1)
    with pytest.raises(SeedingError):
        riccati_solve(CurvatureProfile.constant(-1e12), 1.0, "upper", 1.0, 0.1)


def test_solution_json_shape():
    sol = solve_h(CurvatureProfile.constant(-1.0), 4.0, 0.1)
    obj = sol.to_json()
    assert obj["grid"] == {"t0": 0.0, "dt": 0.1, "n": sol.t.size}
    assert len(obj["values"]) == sol.t.size

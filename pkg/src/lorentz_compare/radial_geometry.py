"""Lorentzian distance from a vertex p in space forms and its derivatives.

Sign conventions: the Hessian operator is X -> D_X grad r with grad r the
past-directed unit gradient, so Minkowski gives Hess r = -(1/r) Id on the
orthogonal complement of grad r and 0 along it.  The Jacobi route returns
-A'(r) A(r)^{-1}, which reproduces the same calibration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .comparison_ode import CurvatureProfile, solve_h
from .errors import ConjugatePointError, ConvergenceError, DomainError, HypothesisError, ModelError
from .reports import VerificationReport
from .spacetime import (
    SpaceForm,
    SpacetimeModel,
    curvature_apply,
    inner,
    orthonormal_frame,
    random_unit_timelike,
    ricci_timelike,
    sample_timelike_plane,
    sectional_timelike,
    stream,
    TimelikePlane,
)

FD_STEP = 1e-5
EXCLUDE_BAND = 1e-3
DEFAULT_TOL = 1e-4


@dataclass(frozen=True)
class ChronologyCheck:
    related: bool
    reason: str  # chronological | not_chronological | outside_domain


@dataclass(frozen=True)
class TimelikeGeodesic:
    p: np.ndarray
    v: np.ndarray
    t: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    truncated: bool = False


@dataclass(frozen=True)
class RadialData:
    """Radial quantities at q; ``hess`` is the operator in ``frame`` components.

    ``frame`` columns are grad r followed by an orthonormal basis of its
    orthogonal complement (chart components).
    """

    p: np.ndarray
    q: np.ndarray
    r: float
    grad: np.ndarray
    frame: np.ndarray
    hess: np.ndarray | None = None
    laplacian: float | None = None

    @property
    def hess_chart(self) -> np.ndarray:
        return self.frame @ self.hess @ np.linalg.inv(self.frame)

    def hess_form(self, model: SpacetimeModel, X, Y=None) -> float:
        """Hess r(X, Y) = <D_X grad r, Y> for chart vectors X, Y."""
        Y = X if Y is None else Y
        g = model.metric(self.q)
        return float(inner(g, self.hess_chart @ X, Y))

    @property
    def transverse_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.hess[1:, 1:] + self.hess[1:, 1:].T))


def _require_space_form(model):
    if not isinstance(model, SpaceForm):
        raise ModelError("the Lorentzian distance is only available in space forms")


def _radial_functions(model: SpaceForm):
    """(C, S, C', S') with exp_p(t v) = C(t) P + S(t) V in the ambient space."""
    if model.c == 0:
        return (lambda t: np.ones_like(t), lambda t: t, lambda t: np.zeros_like(t),
                lambda t: np.ones_like(t))
    a = model.a
    if model.c > 0:
        return (lambda t: np.cosh(t / a), lambda t: a * np.sinh(t / a),
                lambda t: np.sinh(t / a) / a, lambda t: np.cosh(t / a))
    return (lambda t: np.cos(t / a), lambda t: a * np.sin(t / a),
            lambda t: -np.sin(t / a) / a, lambda t: np.cos(t / a))


def ambient_distance(model: SpaceForm, P, Q, dtau=None):
    """Closed-form distance data for ambient points, vectorized over Q.

    Returns (status, r, grad) where status is 0 chronological,
    1 not chronological, 2 outside the domain (c < 0 and r >= pi a), and
    grad is the ambient past-directed unit gradient of d_p at Q.  For
    c < 0 the chart time difference ``dtau`` separates points whose
    ambient images coincide; without it the wrapped ambient angle is used.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    shape = Q.shape[:-1]
    status = np.ones(shape, dtype=int)
    r = np.zeros(shape)
    grad = np.full(Q.shape, np.nan)
    if model.c == 0:
        D = Q - P
        s = model.ambient_inner(D, D)
        ok = (s < 0) & (D[..., 0] > 0)
        rr = np.sqrt(np.where(ok, -s, 1.0))
        status = np.where(ok, 0, 1)
        r = np.where(ok, rr, 0.0)
        grad = np.where(ok[..., None], -D / rr[..., None], np.nan)
        return status, r, grad
    a = model.a
    pq = model.ambient_inner(np.broadcast_to(P, Q.shape), Q)
    if model.c > 0:
        S = pq / a**2
        ok = (S > 1) & (Q[..., 0] > P[0])
        Ssafe = np.where(ok, S, 2.0)
        rr = a * np.arccosh(Ssafe)
        den = a * np.sqrt(Ssafe**2 - 1)
    else:
        S = -pq / a**2
        timelike = (S > -1) & (S < 1)
        Ssafe = np.where(timelike, S, 0.0)
        rr = a * np.arccos(Ssafe)
        V = (Q - Ssafe[..., None] * P) / (a * np.sin(rr / a))[..., None]
        K = model.time_vector_ambient(P)
        future = model.ambient_inner(V, np.broadcast_to(K, V.shape)) < 0
        if dtau is None:
            dtau = a * (np.arctan2(Q[..., 0], Q[..., 1]) - math.atan2(P[0], P[1]))
        dtau = np.asarray(dtau, dtype=float)
        ok = timelike & future & (dtau > 0) & (dtau < math.pi * a)
        # every future timelike geodesic refocuses at chart time pi a
        beyond = (dtau > 0) & ((S <= -1) | (dtau >= math.pi * a) | (timelike & ~future))
        status = np.where(beyond, 2, status)
        den = a * np.sqrt(1 - Ssafe**2)
    status = np.where(ok, 0, status)
    r = np.where(ok, rr, 0.0)
    G = (P - Ssafe[..., None] * Q) / den[..., None]
    grad = np.where(ok[..., None], G, np.nan)
    return status, r, grad


_REASONS = {0: "chronological", 1: "not_chronological", 2: "outside_domain"}


def lorentz_distance(model: SpaceForm, p, q) -> tuple[ChronologyCheck, float]:
    _require_space_form(model)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    st, r, _ = ambient_distance(model, model.embed(p), model.embed(q), q[0] - p[0])
    st = int(st)
    return ChronologyCheck(st == 0, _REASONS[st]), float(r)


def distance_gradient(model: SpaceForm, p, x):
    """Chart components of grad d_p at chart points x (vectorized)."""
    x = np.asarray(x, dtype=float)
    st, r, G = ambient_distance(model, model.embed(p), model.embed(x), x[..., 0] - np.asarray(p, float)[0])
    J = model.embed_jacobian(x)
    dr = np.einsum("...ai,a,...a->...i", J, model.eta, G)
    return np.linalg.solve(model.metric(x), dr[..., None])[..., 0], r, st


def exp_map(model: SpaceForm, p, v, t):
    """Closed-form exp_p(t v) and its velocity, chart components."""
    p = np.asarray(p, dtype=float)
    P = model.embed(p)
    V = model.embed_jacobian(p) @ np.asarray(v, dtype=float)
    C, S, dC, dS = _radial_functions(model)
    t = np.asarray(t, dtype=float)
    Q = C(t)[..., None] * P + S(t)[..., None] * V
    W = dC(t)[..., None] * P + dS(t)[..., None] * V
    x = model.chart(Q)
    J = model.embed_jacobian(x)
    vel = np.linalg.lstsq(J, W, rcond=None)[0] if x.ndim == 1 else np.stack(
        [np.linalg.lstsq(Ji, Wi, rcond=None)[0] for Ji, Wi in zip(J, W)])
    return x, vel


def initial_velocity(model: SpaceForm, p, q):
    """Unit initial velocity at p of the radial geodesic through q, and r."""
    chk, r = lorentz_distance(model, p, q)
    if not chk.related:
        raise DomainError(f"q={q} is not chronologically related to p ({chk.reason})")
    P, Q = model.embed(p), model.embed(q)
    C, S, _, _ = _radial_functions(model)
    V = (Q - C(np.float64(r)) * P) / S(np.float64(r))
    w = np.linalg.lstsq(model.embed_jacobian(p), V, rcond=None)[0]
    return w, r


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_geodesic(model: SpacetimeModel, p, v, T: float, step: float) -> TimelikeGeodesic:
    """RK4 integration of the geodesic equation from (p, v) over [0, T]."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    d = model.dim
    n = max(1, int(math.ceil(T / step - 1e-9)))
    dt = T / n

    def f(y):
        x, u = y[..., :d], y[..., d:]
        return np.concatenate([u, model.geodesic_acceleration(x, u)], axis=-1)

    y = np.concatenate([p, v])
    ts, xs, vs = [0.0], [p.copy()], [v.copy()]
    truncated = False
    for k in range(n):
        y_new = _rk4(f, y, dt)
        if not model.in_domain(y_new[:d]) or not np.all(np.isfinite(y_new)):
            truncated = True
            break
        y = y_new
        ts.append((k + 1) * dt)
        xs.append(y[:d].copy())
        vs.append(y[d:].copy())
    return TimelikeGeodesic(p, v, np.array(ts), np.array(xs), np.array(vs), truncated)


def shoot(model: SpaceForm, p, q, steps: int = 200, tol: float = 1e-10, cap: int = 50):
    """Damped Newton on the initial velocity so that the RK4 geodesic hits q at parameter 1."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w, r = initial_velocity(model, p, q)
    w = w * r
    d = model.dim

    def endpoint(W):
        def f(y):
            x, u = y[..., :d], y[..., d:]
            return np.concatenate([u, model.geodesic_acceleration(x, u)], axis=-1)

        y = np.concatenate([np.broadcast_to(p, W.shape), W], axis=-1)
        for _ in range(steps):
            y = _rk4(f, y, 1.0 / steps)
        return y[..., :d], y[..., d:]

    eps = 1e-7
    for it in range(cap):
        batch = np.vstack([w, w + eps * np.eye(d)])
        X, U = endpoint(batch)
        res = X[0] - q
        if np.linalg.norm(res) <= tol:
            return w / r, U[0] / r, r, it
        Jac = (X[1:] - X[0]).T / eps
        delta = np.linalg.solve(Jac, -res)
        lam = 1.0
        while lam > 1e-4:
            Xt, _ = endpoint((w + lam * delta)[None])
            if np.linalg.norm(Xt[0] - q) < np.linalg.norm(res):
                break
            lam *= 0.5
        w = w + lam * delta
    raise ConvergenceError(f"shooting to q={q} did not reach residual {tol} in {cap} iterations")


def radial_frame(model: SpaceForm, p, q, method: str = "closed") -> RadialData:
    """grad r at q (past-directed unit timelike) and an orthonormal frame adapted to it."""
    _require_space_form(model)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if method == "closed":
        grad, r, st = distance_gradient(model, p, q)
        if int(st) != 0:
            raise DomainError(f"q={q} is not chronologically related to p ({_REASONS[int(st)]})")
        r = float(r)
    elif method == "shooting":
        _, u_end, r, _ = shoot(model, p, q)
        grad = -u_end
    else:
        raise ValueError(f"unknown radial_frame method {method!r}")
    g = model.metric(q)
    frame = orthonormal_frame(g, first=grad)
    return RadialData(p, q, r, grad, frame)


def _hess_fd(model: SpaceForm, rd: RadialData, step: float = FD_STEP) -> np.ndarray:
    F = rd.frame
    Gam = model.christoffel(rd.q)
    cols = []
    for b in range(model.dim):
        e = F[:, b]
        plus, _, _ = distance_gradient(model, rd.p, rd.q + step * e)
        minus, _, _ = distance_gradient(model, rd.p, rd.q - step * e)
        cols.append((plus - minus) / (2 * step) + np.einsum("kij,i,j->k", Gam, e, rd.grad))
    H_chart = np.stack(cols, axis=1) @ np.linalg.inv(F)
    return np.linalg.solve(F, H_chart @ F)


def jacobi_transport(model: SpacetimeModel, p, v, r: float, steps: int = 200):
    """Integrate geodesic, parallel frame and Jacobi matrix A'' = -R_gamma A to time r.

    Returns (x, u, E, A, dA) at t = r; E columns are the transported
    orthonormal frame of the orthogonal complement of u.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    d, n = model.dim, model.n
    E0 = orthonormal_frame(model.metric(p), first=v)[:, 1:]
    sizes = [d, d, d * n, n * n, n * n]
    offs = np.cumsum([0] + sizes)

    def unpack(y):
        x, u = y[offs[0]:offs[1]], y[offs[1]:offs[2]]
        E = y[offs[2]:offs[3]].reshape(d, n)
        A = y[offs[3]:offs[4]].reshape(n, n)
        B = y[offs[4]:offs[5]].reshape(n, n)
        return x, u, E, A, B

    def f(y):
        x, u, E, A, B = unpack(y)
        Gam = model.christoffel(x)
        R = model.curvature(x)
        g = model.metric(x)
        du = -np.einsum("kij,i,j->k", Gam, u, u)
        dE = -np.einsum("kij,i,ja->ka", Gam, u, E)
        RE = np.einsum("lkij,k,ic,j->lc", R, u, E, u)  # R(E_c, u) u
        Rg = np.einsum("la,lm,mc->ac", E, g, RE)
        dB = -Rg @ A
        return np.concatenate([u, du, dE.ravel(), B.ravel(), dB.ravel()])

    y = np.concatenate([p, v, E0.ravel(), np.zeros(n * n), np.eye(n).ravel()])
    dt = r / steps
    sign0 = None
    for k in range(steps):
        y = _rk4(f, y, dt)
        det = np.linalg.det(unpack(y)[3])
        if sign0 is None:
            sign0 = np.sign(det)
        elif np.sign(det) != sign0 or det == 0:
            raise ConjugatePointError(f"Jacobi matrix singular near t={(k + 1) * dt:.6g} < r={r:.6g}")
    return unpack(y)


def hess_r(model: SpaceForm, p, q, method: str = "finite_difference") -> RadialData:
    """Full radial data at q with the Hessian operator and the Laplacian."""
    _require_space_form(model)
    if method == "finite_difference":
        rd = radial_frame(model, p, q)
        M = _hess_fd(model, rd)
    elif method == "jacobi":
        w, r = initial_velocity(model, p, q)
        steps = max(200, int(math.ceil(r / 0.01)))
        x, u, E, A, B = jacobi_transport(model, p, w, r, steps)
        grad = -u
        frame = np.column_stack([grad, E])
        Hm = -B @ np.linalg.inv(A)
        M = np.zeros((model.dim, model.dim))
        M[1:, 1:] = 0.5 * (Hm + Hm.T)
        rd = RadialData(np.asarray(p, float), np.asarray(q, float), r, grad, frame)
    else:
        raise ValueError(f"unknown hess_r method {method!r}")
    return RadialData(rd.p, rd.q, rd.r, rd.grad, rd.frame, M, float(np.trace(M)))


def laplacian_r(model: SpaceForm, p, q, method: str = "finite_difference") -> float:
    """Lorentzian trace of the Hessian operator (the radial direction contributes 0)."""
    return hess_r(model, p, q, method).laplacian


def bochner_residual(model: SpaceForm, p, q, delta: float = 1e-3) -> float:
    """||hess r||^2 + Ric(grad r, grad r) + <grad Lap r, grad r>; vanishes identically."""
    rd = hess_r(model, p, q)
    hess2 = float(np.trace(rd.hess @ rd.hess))
    ric = ricci_timelike(model, rd.q, rd.grad)
    delta = delta * min(1.0, rd.r)

    def dlap(hh):
        plus = laplacian_r(model, p, rd.q + hh * rd.grad)
        minus = laplacian_r(model, p, rd.q - hh * rd.grad)
        return (plus - minus) / (2 * hh)

    deriv = (4 * dlap(delta / 2) - dlap(delta)) / 3
    return hess2 + ric + deriv


def sample_chronological(model: SpaceForm, p, count: int, seed: int,
                         r_range=(0.2, 2.0), max_rapidity: float = 1.0):
    """Deterministic chronological samples q = exp_p(r v); one stream per index."""
    p = np.asarray(p, dtype=float)
    out = []
    for i in range(count):
        rng = stream(seed, i)
        r = rng.uniform(*r_range)
        v = random_unit_timelike(model, p, rng, max_rapidity)
        q, _ = exp_map(model, p, v, r)
        out.append(q)
    return out


def spacelike_test_vectors(rd: RadialData, count: int, rng: np.random.Generator):
    """Random unit spacelike vectors orthogonal to grad r."""
    n = rd.frame.shape[1] - 1
    w = rng.normal(size=(count, n))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return (rd.frame[:, 1:] @ w.T).T


def _G_label(G: CurvatureProfile) -> str:
    return G.describe()


def _filter(r, r0, excluded, idx):
    if r < EXCLUDE_BAND or r >= r0 - EXCLUDE_BAND:
        excluded.append({"sample": idx, "r": r, "reason": "r0_band" if r >= r0 - EXCLUDE_BAND else "vertex_band"})
        return True
    return False


def _solve_for(G, qs_r):
    t_max = max(4.0, 1.2 * max(qs_r)) if qs_r else 4.0
    return solve_h(G, t_max, 1e-3)


def verify_hessian_comparison(model: SpaceForm, G: CurvatureProfile, samples, bound_side: str,
                              p=None, n_vectors: int = 8, seed: int = 0, tol: float = DEFAULT_TOL,
                              method: str = "finite_difference") -> VerificationReport:
    """Margins Hess r(X,X) + (h'/h)(r) <X,X> for unit spacelike X orthogonal to grad r.

    ``upper_G`` (curvature bounded above by G) requires margin >= -tol,
    ``lower_G`` requires margin <= tol; rows carry the margin oriented so
    that >= -tol always means the inequality holds, plus the raw value.
    """
    if bound_side not in ("upper_G", "lower_G"):
        raise ValueError("bound_side must be 'upper_G' or 'lower_G'")
    p = np.zeros(model.dim) if p is None else np.asarray(p, dtype=float)
    qs = [np.asarray(q, dtype=float) for q in samples]
    rs = [lorentz_distance(model, p, q)[1] for q in qs]
    sol = _solve_for(G, rs)
    rep = VerificationReport("radial-hessian", model.describe(), _G_label(G), tol,
                             "default 1e-4: finite-difference Hessian error budget")
    orient = 1.0 if bound_side == "upper_G" else -1.0
    hyp_ok = True
    for i, q in enumerate(qs):
        r = rs[i]
        if r <= 0:
            rep.excluded.append({"sample": i, "r": r, "reason": "not_chronological"})
            continue
        if _filter(r, sol.r0, rep.excluded, i):
            continue
        rng = stream(seed, 10_000 + i)
        K = sectional_timelike(model, sample_timelike_plane(model, q, rng))
        Gr = G.value(r)
        if (bound_side == "upper_G" and K > Gr + 1e-9) or (bound_side == "lower_G" and K < Gr - 1e-9):
            hyp_ok = False
            rep.excluded.append({"sample": i, "r": r, "reason": f"curvature_bound_violated K={K:.6g} G={Gr:.6g}"})
            continue
        rd = hess_r(model, p, q, method)
        slope_r = float(sol.slope(r))
        g = model.metric(q)
        for j, X in enumerate(spacelike_test_vectors(rd, n_vectors, rng)):
            raw = rd.hess_form(model, X) + slope_r * inner(g, X, X)
            rep.rows.append({"sample": i, "plane": j, "r": r, "raw_margin": float(raw),
                             "margin": float(orient * raw)})
    rep.n_excluded = len(rep.excluded)
    rep.hypotheses = {"curvature_bound": hyp_ok, "bound_side": bound_side, "r0": sol.r0}
    if not hyp_ok:
        raise HypothesisError(
            f"sectional curvature bound ({bound_side}) fails at some sample; see excluded list",
        )
    return rep


def verify_laplacian_comparison(model: SpaceForm, G: CurvatureProfile, samples, p=None,
                                tol: float = DEFAULT_TOL,
                                method: str = "finite_difference") -> VerificationReport:
    """Margins Lap r + n (h'/h)(r), required >= -tol when Ric(grad, grad) >= -n G(r)."""
    p = np.zeros(model.dim) if p is None else np.asarray(p, dtype=float)
    qs = [np.asarray(q, dtype=float) for q in samples]
    rs = [lorentz_distance(model, p, q)[1] for q in qs]
    sol = _solve_for(G, rs)
    rep = VerificationReport("radial-laplacian", model.describe(), _G_label(G), tol,
                             "default 1e-4: finite-difference Hessian error budget")
    n = model.n
    for i, q in enumerate(qs):
        r = rs[i]
        if r <= 0:
            rep.excluded.append({"sample": i, "r": r, "reason": "not_chronological"})
            continue
        if _filter(r, sol.r0, rep.excluded, i):
            continue
        rd = hess_r(model, p, q, method)
        ric = ricci_timelike(model, q, rd.grad)
        if ric < -n * G.value(r) - 1e-9:
            raise HypothesisError(f"Ric(grad r, grad r)={ric:.6g} < -n G(r) at sample {i}")
        raw = rd.laplacian + n * float(sol.slope(r))
        rep.rows.append({"sample": i, "plane": -1, "r": r, "raw_margin": float(raw), "margin": float(raw)})
    rep.n_excluded = len(rep.excluded)
    rep.hypotheses = {"ricci_bound": True, "r0": sol.r0}
    return rep

"""Spacelike hypersurfaces of space forms sampled on a uniform parameter grid.

Everything is computed in the flat ambient space of the embedding
(R^{1,n} for c = 0, R^{1,n+1} for c > 0, R^{2,n} for c < 0).  The shape
operator is A X = -D_X nu for the future unit normal nu, so spheres about a
vertex have A = -f_c(t) Id and H_k = f_c(t)^k.
"""
from __future__ import annotations

import csv
import io
import math
from functools import lru_cache
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .comparison_ode import CurvatureProfile, f_c, solve_h
from .errors import (
    AlgebraError,
    ConstructionError,
    DomainError,
    FrameError,
    HypothesisError,
    StencilError,
)
from .radial_geometry import _radial_functions, ambient_distance
from .reports import VerificationReport
from .spacetime import SpaceForm, orthonormal_frame, stream

DEFAULT_NX = 33
DEFAULT_HALF_WIDTH = 0.5
STENCIL_MARGIN = 3
PROP_TOL = 1e-5
GAUSS_TOL = 1e-4
FD_SYMMETRY_TOL = 1e-3

# ---------------------------------------------------------------------------
# finite differences on the grid (sixth order, one-sided windows near the edges)

FD_ORDER = 6


@lru_cache(maxsize=None)
def _weights(offsets: tuple) -> np.ndarray:
    """First-derivative weights on integer ``offsets`` (Vandermonde solve)."""
    o = np.array(offsets, dtype=float)
    V = np.vander(o, increasing=True).T
    rhs = np.zeros(len(o))
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs)


def grid_derivative(f: np.ndarray, axis: int, dx: float, order: int = FD_ORDER) -> np.ndarray:
    """First derivative of ``f`` along grid ``axis`` with ``order + 1`` point stencils."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    m = f.shape[0]
    w = order + 1
    if m < w:
        raise StencilError(f"need at least {w} nodes along axis {axis}, got {m}")
    half = order // 2
    out = np.empty_like(f)
    cw = _weights(tuple(range(-half, half + 1)))
    out[half:m - half] = sum(c * f[k:m - 2 * half + k] for k, c in enumerate(cw) if c != 0.0)
    for i in list(range(half)) + list(range(m - half, m)):
        start = min(max(i - half, 0), m - w)
        ww = _weights(tuple(range(start - i, start - i + w)))
        out[i] = np.tensordot(ww, f[start:start + w], axes=1)
    return np.moveaxis(out / dx, 0, axis)


def _gradient_stack(f, dx, n):
    """Stack d_i f along a new axis placed after the grid axes."""
    return np.stack([grid_derivative(f, i, dx[i]) for i in range(n)], axis=n)


# ---------------------------------------------------------------------------
# builtin graph functions: each returns (phi, grad phi, hess phi)

_PHI: dict[str, Callable] = {}


def _phi(name):
    def deco(fn):
        _PHI[name] = fn
        return fn
    return deco


def builtin_phi_names() -> list[str]:
    return sorted(_PHI)


@_phi("flat")
def _phi_flat(x, value=2.0):
    n = x.shape[-1]
    return (np.full(x.shape[:-1], float(value)), np.zeros_like(x),
            np.zeros(x.shape[:-1] + (n, n)))


@_phi("hyperboloid")
def _phi_hyperboloid(x, R=1.0):
    n = x.shape[-1]
    w = np.sqrt(R * R + np.sum(x * x, axis=-1))
    grad = x / w[..., None]
    hess = (np.eye(n) - grad[..., :, None] * grad[..., None, :]) / w[..., None, None]
    return w, grad, hess


@_phi("sine")
def _phi_sine(x, base=2.0, amplitude=0.1, frequency=1.0):
    n = x.shape[-1]
    s = np.sin(frequency * x[..., 0])
    grad = np.zeros_like(x)
    grad[..., 0] = amplitude * frequency * np.cos(frequency * x[..., 0])
    hess = np.zeros(x.shape[:-1] + (n, n))
    hess[..., 0, 0] = -amplitude * frequency**2 * s
    return base + amplitude * s, grad, hess


@_phi("perturbed_hyperboloid")
def _phi_perturbed(x, R=1.0, epsilon=0.05, frequency=1.0):
    w, gw, hw = _phi_hyperboloid(x, R)
    s, gs, hs = _phi_sine(x, 0.0, epsilon, frequency)
    return w + s, gw + gs, hw + hs


@_phi("bump")
def _phi_bump(x, base="hyperboloid", value=2.0, R=1.0, amplitude=0.05, width=0.3, center=None):
    """Flat slice or hyperboloid plus a Gaussian bump (an interior maximum of u)."""
    n = x.shape[-1]
    phi, grad, hess = _phi_flat(x, value) if base == "flat" else _phi_hyperboloid(x, R)
    x0 = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    d = x - x0
    e = amplitude * np.exp(-np.sum(d * d, axis=-1) / (2 * width**2))
    g = -(e / width**2)[..., None] * d
    H = (e / width**4)[..., None, None] * (d[..., :, None] * d[..., None, :]) \
        - (e / width**2)[..., None, None] * np.eye(n)
    return phi + e, grad + g, hess + H


@_phi("random")
def _phi_random(x, seed=0, base="flat", value=2.0, R=1.0, amplitude=0.1, modes=3):
    """Smooth random graph: a flat slice or hyperboloid plus a few plane waves.

    Wave slopes sum to at most ``amplitude``, which keeps flat-based graphs
    spacelike whenever amplitude < 1.
    """
    n = x.shape[-1]
    rng = stream(int(seed), 0)
    if base == "flat":
        phi, grad, hess = _phi_flat(x, value)
    elif base == "hyperboloid":
        phi, grad, hess = _phi_hyperboloid(x, R)
    else:
        raise ConstructionError(f"unknown random graph base {base!r}")
    weights = rng.dirichlet(np.ones(modes))
    for m in range(modes):
        k = rng.normal(size=n)
        k *= rng.uniform(0.5, 1.5) / np.linalg.norm(k)
        theta = rng.uniform(0, 2 * np.pi)
        a = amplitude * weights[m] / np.linalg.norm(k)
        arg = x @ k + theta
        phi = phi + a * np.sin(arg)
        grad = grad + (a * np.cos(arg))[..., None] * k
        hess = hess - (a * np.sin(arg))[..., None, None] * np.outer(k, k)
    return phi, grad, hess


def phi_from_name(name: str, params: dict | None = None) -> Callable:
    key = name[len("builtin:"):] if name.startswith("builtin:") else name
    if key not in _PHI:
        raise ConstructionError(f"unknown graph function {name!r}; builtins: {builtin_phi_names()}")
    fn = _PHI[key]
    params = dict(params or {})
    return lambda x: fn(x, **params)


# ---------------------------------------------------------------------------


@dataclass
class Hypersurface:
    """Node caches of a spacelike hypersurface on an n-dimensional grid.

    Arrays carry the grid axes first.  ``dpsi[..., i, :]`` is the ambient
    tangent d_i psi, ``g`` the induced metric, ``b`` the second fundamental
    form b_ij = <nu, d_i d_j psi> and ``chol`` the Cholesky factor of ``g``.
    """

    kind: str
    model: SpaceForm
    spec: dict
    mode: str
    axes: list
    dx: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    nu: np.ndarray
    b: np.ndarray
    chol: np.ndarray
    vertex: np.ndarray
    interior: np.ndarray
    radius: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[-1]

    @property
    def grid_shape(self) -> tuple:
        return self.x.shape[:-1]

    @property
    def c(self) -> float:
        return self.model.c

    @property
    def A_on(self) -> np.ndarray:
        """Shape operator matrix in the Cholesky orthonormal tangent frame."""
        if "A_on" not in self._cache:
            Linv = np.linalg.inv(self.chol)
            self._cache["A_on"] = Linv @ self.b @ np.swapaxes(Linv, -1, -2)
        return self._cache["A_on"]

    def christoffel(self) -> np.ndarray:
        """Induced Christoffel symbols G[..., k, i, j] from the metric derivatives."""
        if "gamma" not in self._cache:
            dg = self.dg  # dg[..., m, i, j] = d_m g_ij
            low = 0.5 * (np.einsum("...ijk->...kij", dg) + np.einsum("...jik->...kij", dg)
                         - dg)
            # low[..., k, i, j] = 1/2 (d_i g_jk + d_j g_ik - d_k g_ij)
            ginv = np.linalg.inv(self.g)
            self._cache["gamma"] = np.einsum("...lk,...kij->...lij", ginv, low)
        return self._cache["gamma"]

    def node(self, flat_index: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(flat_index, self.grid_shape))


def _grid(spec: dict, n: int):
    box = spec.get("box", {})
    lo = np.broadcast_to(np.asarray(box.get("lo", -DEFAULT_HALF_WIDTH), dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(box.get("hi", DEFAULT_HALF_WIDTH), dtype=float), (n,))
    nx = int(spec.get("nx", DEFAULT_NX))
    if nx < 2 * STENCIL_MARGIN + 1:
        raise StencilError(f"grid needs nx >= {2 * STENCIL_MARGIN + 1} for the difference stencils, got {nx}")
    if np.any(hi <= lo):
        raise ConstructionError("grid box needs lo < hi on every axis")
    axes = [np.linspace(lo[i], hi[i], nx) for i in range(n)]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    dx = np.array([(hi[i] - lo[i]) / (nx - 1) for i in range(n)])
    return axes, x, dx


def _graph_embedding(model: SpaceForm, phi_fn, x):
    phi, dphi, ddphi = phi_fn(x)
    n = x.shape[-1]
    chart = np.concatenate([phi[..., None], x], axis=-1)
    if model.c > 0 and np.any(np.linalg.norm(x, axis=-1) >= model.a):
        raise ConstructionError(f"graph box leaves the chart |y| < {model.a}")
    if model.c < 0 and np.any(np.abs(phi) >= math.pi * model.a):
        raise ConstructionError(f"graph leaves the chart |t| < {math.pi * model.a}")
    psi = model.embed(chart)
    J = model.embed_jacobian(chart)
    H = model.embed_hessian(chart)
    Jt, Jx = J[..., 0], J[..., 1:]  # (..., D), (..., D, n)
    dpsi = dphi[..., :, None] * Jt[..., None, :] + np.swapaxes(Jx, -1, -2)
    Htt = H[..., :, 0, 0]
    Htx = H[..., :, 0, 1:]  # (..., D, n)
    Hxx = H[..., :, 1:, 1:]  # (..., D, n, n)
    ddpsi = (np.einsum("...i,...j,...a->...ija", dphi, dphi, Htt)
             + np.einsum("...i,...aj->...ija", dphi, Htx)
             + np.einsum("...j,...ai->...ija", dphi, Htx)
             + np.moveaxis(Hxx, -3, -1)
             + ddphi[..., None] * Jt[..., None, None, :])
    return psi, dpsi, ddpsi, n


def _sphere_embedding(model: SpaceForm, t: float, vertex, x):
    C, S, _, _ = _radial_functions(model)
    Ct, St = float(C(np.float64(t))), float(S(np.float64(t)))
    P = model.embed(vertex)
    F = orthonormal_frame(model.metric(vertex))
    E = (model.embed_jacobian(vertex) @ F).T  # rows: ambient images of the frame
    y = x / St
    w = np.sqrt(1.0 + np.sum(y * y, axis=-1))
    V = w[..., None] * E[0] + y @ E[1:]
    psi = Ct * P + St * V
    dpsi = (y / w[..., None])[..., :, None] * E[0] + E[1:]
    n = x.shape[-1]
    ddV = (np.eye(n) / w[..., None, None]
           - y[..., :, None] * y[..., None, :] / (w**3)[..., None, None])
    ddpsi = (ddV / St)[..., None] * E[0]
    return psi, dpsi, ddpsi


def _normals(model: SpaceForm, psi, dpsi):
    eta = model.eta
    rows = dpsi * eta
    if model.c != 0:
        rows = np.concatenate([rows, (psi * eta)[..., None, :]], axis=-2)
    _, s, vh = np.linalg.svd(rows)
    nu = vh[..., -1, :]
    nn = model.ambient_inner(nu, nu)
    if np.any(nn >= -1e-14):
        idx = int(np.argmax(nn.ravel()))
        raise ConstructionError(f"normal is not timelike at node {np.unravel_index(idx, nn.shape)}")
    nu = nu / np.sqrt(-nn)[..., None]
    future = model.ambient_inner(nu, model.time_vector_ambient(psi)) < 0
    return np.where(future[..., None], nu, -nu)


def construct_hypersurface(spec: dict, model: SpaceForm | None = None, vertex=None,
                           mode: str | None = None) -> Hypersurface:
    """Build a graph or Lorentzian sphere with its node caches.

    ``spec`` follows the JSON form ``{"kind": "graph", "phi": "builtin:<name>",
    "params": {...}, "box": {"lo", "hi"}, "nx": int}`` or ``{"kind": "sphere",
    "t": float}``; optional keys are ``mode`` (``analytic`` or ``fd``) and
    ``radius`` (declared bound on u).  Sphere grids are aligned with graph
    grids: the node at x lies over spatial chart position x when c = 0.
    """
    if model is None:
        from .spacetime import model_from_json
        model = model_from_json(spec["model"])
    if not isinstance(model, SpaceForm):
        raise ConstructionError("hypersurfaces are only supported in space forms")
    n = model.n
    mode = mode or spec.get("mode", "analytic")
    if mode not in ("analytic", "fd"):
        raise ValueError(f"unknown hypersurface mode {mode!r}")
    vertex = np.zeros(n + 1) if vertex is None else np.asarray(vertex, dtype=float)
    axes, x, dx = _grid(spec, n)
    kind = spec.get("kind")
    if kind == "graph":
        phi_fn = phi_from_name(spec.get("phi", "builtin:flat"), spec.get("params"))
        psi, dpsi, ddpsi, _ = _graph_embedding(model, phi_fn, x)
    elif kind == "sphere":
        t = float(spec["t"])
        if t <= 0:
            raise ConstructionError("sphere radius must be positive")
        if model.c < 0 and t >= math.pi * model.a:
            raise ConstructionError(f"sphere radius must stay below {math.pi * model.a}")
        psi, dpsi, ddpsi = _sphere_embedding(model, t, vertex, x)
    else:
        raise ConstructionError(f"unknown hypersurface kind {kind!r}")

    if mode == "fd":
        dpsi = _gradient_stack(psi, dx, n)

    g = np.einsum("...ia,a,...ja->...ij", dpsi, model.eta, dpsi)
    ev = np.linalg.eigvalsh(g)
    if np.any(ev[..., 0] <= 0):
        idx = int(np.argmin(ev[..., 0].ravel()))
        node = np.unravel_index(idx, ev.shape[:-1])
        raise ConstructionError(
            f"induced metric not positive definite at node {tuple(int(v) for v in node)}"
            f" x={x[node].tolist()} (smallest eigenvalue {ev[node][0]:.3g})")
    nu = _normals(model, psi, dpsi)

    if mode == "analytic":
        b = np.einsum("...a,a,...ija->...ij", nu, model.eta, ddpsi)
        dg = (np.einsum("...mia,a,...ja->...mij", ddpsi, model.eta, dpsi)
              + np.einsum("...ia,a,...mja->...mij", dpsi, model.eta, ddpsi))
    else:
        dnu = _gradient_stack(nu, dx, n)  # dnu[..., i, a]
        b = -np.einsum("...ia,a,...ja->...ij", dnu, model.eta, dpsi)
        dg = _gradient_stack(g, dx, n)
    interior = np.zeros(x.shape[:-1], dtype=bool)
    interior[(slice(STENCIL_MARGIN, -STENCIL_MARGIN),) * n] = True
    asym = np.abs(b - np.swapaxes(b, -1, -2))[interior]
    # difference quotients of nu are only symmetric up to truncation error
    sym_tol = 1e-6 if mode == "analytic" else FD_SYMMETRY_TOL
    if asym.size and asym.max() > sym_tol:
        raise FrameError(f"second fundamental form not symmetric (defect {asym.max():.3g})")
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    chol = np.linalg.cholesky(g)
    radius = spec.get("radius")
    return Hypersurface(kind, model, dict(spec), mode, axes, dx, x, psi, dpsi, g, dg, nu, b,
                        chol, vertex, interior, None if radius is None else float(radius))


# ---------------------------------------------------------------------------


def elementary_symmetric(lam: np.ndarray) -> np.ndarray:
    """S_0..S_n of the last axis, by the product recurrence."""
    n = lam.shape[-1]
    S = np.zeros(lam.shape[:-1] + (n + 1,))
    S[..., 0] = 1.0
    for i in range(n):
        S[..., 1:i + 2] = S[..., 1:i + 2] + lam[..., i, None] * S[..., 0:i + 1]
    return S


@dataclass
class ShapeData:
    A: np.ndarray
    kappa: np.ndarray
    S: np.ndarray
    H: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    @property
    def c_k(self) -> np.ndarray:
        n = self.n
        return np.array([(n - k) * comb(n, k) for k in range(n)], dtype=float)

    def H_ext(self, k: int) -> np.ndarray:
        """H_k with H_k = 0 beyond n."""
        return self.H[..., k] if k <= self.n else np.zeros(self.H.shape[:-1])


def shape_from_matrices(A) -> ShapeData:
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    if asym > 1e-6:
        raise FrameError(f"shape operator not symmetric in the orthonormal frame (defect {asym:.3g})")
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    kappa = np.linalg.eigvalsh(A)
    S = elementary_symmetric(kappa)
    signs = np.array([(-1.0) ** k / comb(n, k) for k in range(n + 1)])
    return ShapeData(A, kappa, S, S * signs)


def shape_data(h: Hypersurface) -> ShapeData:
    return shape_from_matrices(h.A_on)


@dataclass
class NewtonFamily:
    P: list
    residuals: dict

    def __getitem__(self, k):
        return self.P[k]


def newton_family(sd: ShapeData, rtol: float = 1e-8) -> NewtonFamily:
    """P_0..P_{n-1} by recursion, with the three trace identities checked."""
    n = sd.n
    A = sd.A
    eye = np.broadcast_to(np.eye(n), A.shape)
    P = [eye.copy()]
    for k in range(1, n):
        P.append(comb(n, k) * sd.H[..., k, None, None] * eye + A @ P[-1])
    rho = np.max(np.abs(sd.kappa), axis=-1) if sd.kappa.size else np.array(0.0)
    worst = {"trace": 0.0, "trace_A": 0.0, "trace_A2": 0.0}
    A2 = A @ A
    for k in range(n):
        ck = (n - k) * comb(n, k)
        checks = {
            "trace": (np.trace(P[k], axis1=-2, axis2=-1), ck * sd.H_ext(k), k),
            "trace_A": (np.einsum("...ij,...ji->...", A, P[k]), -ck * sd.H_ext(k + 1), k + 1),
            "trace_A2": (np.einsum("...ij,...ji->...", A2, P[k]),
                         comb(n, k + 1) * (n * sd.H[..., 1] * sd.H_ext(k + 1)
                                           - (n - k - 1) * sd.H_ext(k + 2)), k + 2),
        }
        for name, (lhs, rhs, deg) in checks.items():
            scale = np.maximum.reduce([np.abs(lhs), np.abs(rhs),
                                       n * comb(n, min(k + 1, n)) * rho**deg, np.full_like(lhs, 1e-300)])
            rel = float(np.max(np.abs(lhs - rhs) / scale))
            worst[name] = max(worst[name], rel)
    if max(worst.values()) > rtol:
        raise AlgebraError(f"Newton trace identity residual {worst} exceeds {rtol}")
    return NewtonFamily(P, worst)


@dataclass
class EllipticityCertificate:
    k: int
    positive_definite: dict
    global_positive_definite: bool
    witness: dict | None
    elliptic_point_found: bool
    elliptic_node: int | None
    lemmas: dict

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "positive_definite": {str(j): bool(np.all(v)) for j, v in self.positive_definite.items()},
            "global_positive_definite": self.global_positive_definite,
            "witness": self.witness,
            "elliptic_point_found": self.elliptic_point_found,
            "elliptic_node": self.elliptic_node,
            "lemmas": self.lemmas,
        }


def ellipticity_check(sd: ShapeData, nf: NewtonFamily, k: int, mask=None) -> EllipticityCertificate:
    """Positive definiteness of P_1..P_{k-1} and existence of an elliptic point."""
    if k < 1:
        raise ValueError("ellipticity_check needs k >= 1")
    mask = np.ones(sd.A.shape[:-2], dtype=bool) if mask is None else mask
    pd = {}
    witness = None
    ok = True
    for j in range(1, min(k, sd.n)):
        ev = np.linalg.eigvalsh(nf.P[j])[..., 0]
        pd[j] = (ev > 0) & mask
        bad = mask & ~(ev > 0)
        if np.any(bad):
            ok = False
            if witness is None:
                vals = np.where(mask, ev, np.inf).ravel()
                idx = int(np.argmin(vals))
                witness = {"j": j, "node": idx, "smallest_eigenvalue": float(vals[idx])}
    neg = (np.linalg.eigvalsh(sd.A)[..., -1] < 0) & mask
    found = bool(np.any(neg))
    node = int(np.argmax(neg.ravel())) if found else None
    H2_pos = bool(np.all(sd.H[..., 2][mask] > 0)) if sd.n >= 2 else False
    lemmas = {
        "h2_positive": H2_pos,
        "elliptic_point": found,
        "L1_elliptic_from_h2": bool(H2_pos and (sd.n < 2 or k < 2 or ok)),
        "Lj_elliptic": ok,
    }
    return EllipticityCertificate(k, pd, ok, witness, found, node, lemmas)


# ---------------------------------------------------------------------------


@dataclass
class DistanceRestriction:
    u: np.ndarray
    grad: np.ndarray  # coordinate components of the intrinsic gradient
    grad_ambient: np.ndarray
    grad_norm2: np.ndarray
    normal_component: np.ndarray

    @property
    def decomposition_residual(self) -> np.ndarray:
        return self.normal_component**2 - self.grad_norm2 - 1.0


def distance_restriction(h: Hypersurface, p=None) -> DistanceRestriction:
    """u = d_p on the hypersurface, its intrinsic gradient and <grad r, nu>."""
    p = h.vertex if p is None else np.asarray(p, dtype=float)
    key = ("u", tuple(p))
    if key in h._cache:
        return h._cache[key]
    model = h.model
    st, r, G = ambient_distance(model, model.embed(p), h.psi)
    if np.any(st != 0):
        idx = int(np.argmax((st != 0).ravel()))
        node = h.node(idx)
        reason = {1: "not chronological", 2: "outside the domain"}[int(st.ravel()[idx])]
        raise DomainError(f"hypersurface node {node} x={h.x[node].tolist()} is {reason} from the vertex")
    if h.radius is not None and np.any(r >= h.radius):
        raise DomainError(f"hypersurface leaves the declared ball of radius {h.radius}")
    N = model.ambient_inner(G, h.nu)
    Gt = G + N[..., None] * h.nu
    dr = np.einsum("...ia,a,...a->...i", h.dpsi, model.eta, G)
    xi = np.linalg.solve(h.g, dr[..., None])[..., 0]
    out = DistanceRestriction(r, xi, Gt, np.einsum("...i,...i->...", xi, dr), N)
    h._cache[key] = out
    return out


def lk_apply(h: Hypersurface, nf: NewtonFamily, k: int, f: np.ndarray) -> np.ndarray:
    """Tr(P_k o hess f) at interior nodes; NaN on the stencil margin."""
    n = h.n
    f = np.asarray(f, dtype=float)
    if f.shape != h.grid_shape:
        raise ValueError(f"field shape {f.shape} does not match grid {h.grid_shape}")
    df = _gradient_stack(f, h.dx, n)
    ddf = np.stack([_gradient_stack(df[..., j], h.dx, n) for j in range(n)], axis=-1)
    ddf = 0.5 * (ddf + np.swapaxes(ddf, -1, -2))
    hess = ddf - np.einsum("...mij,...m->...ij", h.christoffel(), df)
    Linv = np.linalg.inv(h.chol)
    hess_on = Linv @ hess @ np.swapaxes(Linv, -1, -2)
    out = np.einsum("...ij,...ji->...", nf.P[k], hess_on)
    return np.where(h.interior, out, np.nan)


def _slope_function(G: CurvatureProfile, t_max: float):
    if G.is_constant:
        c = G.value(0.0)
        return lambda t: f_c(c, t), (math.pi / math.sqrt(-c) if c < 0 else math.inf)
    sol = solve_h(G, max(2.0 * t_max, 1.0), 1e-3)
    return sol.slope, sol.r0


def _bound_holds(c: float, G: CurvatureProfile, u: np.ndarray, side: str) -> bool:
    vals = np.asarray(G.value(np.unique(np.round(u, 12))), dtype=float)
    if side == "lower":
        return bool(np.all(c <= vals + 1e-12))
    return bool(np.all(c >= vals - 1e-12))


def verify_prop_lk(h: Hypersurface, p, G: CurvatureProfile, k: int, side: str,
                   tol: float = PROP_TOL, sd: ShapeData | None = None,
                   nf: NewtonFamily | None = None) -> VerificationReport:
    """Pointwise L_k u inequality at interior nodes.

    side ``lower`` (sectional curvature at most G) needs margin >= -tol,
    ``upper`` (at least G) needs margin <= tol; stored margins are oriented
    so that >= -tol always means the inequality holds.
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    n = h.n
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in 0..{n - 1}")
    sd = shape_data(h) if sd is None else sd
    nf = newton_family(sd) if nf is None else nf
    dr = distance_restriction(h, p)
    m = h.interior
    u = dr.u
    c = h.c
    if not _bound_holds(c, G, u[m], side):
        raise HypothesisError(
            f"curvature bound for side={side} fails: c={c} versus G on u in [{u[m].min():.6g}, {u[m].max():.6g}]")
    slope_fn, r0 = _slope_function(G, float(u.max()))
    if np.any(u[m] >= r0):
        raise HypothesisError(f"hypersurface leaves B+(p, r0) with r0={r0:.6g}")
    equal = bool(G.is_constant and G.value(0.0) == c)
    pk_psd = bool(np.all(np.linalg.eigvalsh(nf.P[k][m])[..., 0] >= -1e-12))
    if not equal and not pk_psd:
        raise HypothesisError(f"P_{k} is not positive semidefinite on the grid, needed when G differs from c")
    ck = (n - k) * comb(n, k)
    w = np.einsum("...ji,...j->...i", h.chol, dr.grad)  # orthonormal-frame components
    quad = np.einsum("...i,...ij,...j->...", w, nf.P[k], w)
    lhs = lk_apply(h, nf, k, u)
    f = np.full(u.shape, np.nan)
    f[m] = slope_fn(u[m])
    rhs = -f * (ck * sd.H_ext(k) + quad) + dr.normal_component * ck * sd.H_ext(k + 1)
    raw = lhs - rhs
    orient = 1.0 if side == "lower" else -1.0
    rep = VerificationReport("hypersurface-props", h.model.describe(), G.describe(), tol,
                             "default 1e-5: fourth-order grid stencils")
    for idx in np.flatnonzero(m.ravel()):
        node = h.node(idx)
        rep.rows.append({"node": int(idx), "x": [float(v) for v in h.x[node]], "u": float(u[node]),
                         "lk_u": float(lhs[node]), "rhs": float(rhs[node]),
                         "raw_margin": float(raw[node]), "margin": float(orient * raw[node])})
    rep.n_excluded = int(m.size - m.sum())
    rep.hypotheses = {"curvature_bound": True, "side": side, "k": k, "pk_semidefinite": pk_psd,
                      "equality_case": equal, "r0": None if math.isinf(r0) else r0}
    return rep


def intrinsic_curvature(h: Hypersurface) -> np.ndarray:
    """R[..., l, k, i, j] of the induced metric (same convention as the ambient tensor)."""
    Gam = h.christoffel()
    dG = _gradient_stack(Gam, h.dx, h.n)  # dG[..., m, l, i, j] = d_m Gamma^l_ij
    R = (np.einsum("...iljk->...lkij", dG) - np.einsum("...jlik->...lkij", dG)
         + np.einsum("...lim,...mjk->...lkij", Gam, Gam)
         - np.einsum("...ljm,...mik->...lkij", Gam, Gam))
    return R


def gauss_residual(h: Hypersurface, planes: int = 2, seed: int = 0, tol: float = GAUSS_TOL,
                   sd: ShapeData | None = None) -> VerificationReport:
    """Intrinsic sectional curvature versus c - b(X,X) b(Y,Y) + b(X,Y)^2.

    Also records the bound K >= c - n^2 H_1^2, which relies on H_2 >= 0
    when n >= 3; nodes failing that hypothesis are reported separately.
    """
    n = h.n
    if n < 2:
        raise ValueError("the Gauss equation needs n >= 2")
    sd = shape_data(h) if sd is None else sd
    R = intrinsic_curvature(h)
    m = h.interior
    idxs = np.flatnonzero(m.ravel())
    rng = stream(seed, 0)
    g = h.g.reshape(-1, n, n)[idxs]
    b = h.b.reshape(-1, n, n)[idxs]
    Rf = R.reshape((-1,) + (n,) * 4)[idxs]
    H1 = sd.H[..., 1].reshape(-1)[idxs]
    H2 = sd.H[..., 2].reshape(-1)[idxs] if n >= 2 else np.zeros_like(H1)
    rep = VerificationReport("gauss", h.model.describe(), "-", tol,
                             "default 1e-4: fourth-order differences of the induced connection")
    bound_min = math.inf
    hyp_nodes = 0
    for pl in range(planes):
        X = rng.normal(size=(idxs.size, n))
        Y = rng.normal(size=(idxs.size, n))
        ip = lambda U, V, M=g: np.einsum("ni,nij,nj->n", U, M, V)
        X = X / np.sqrt(ip(X, X))[:, None]
        Y = Y - ip(X, Y)[:, None] * X
        Y = Y / np.sqrt(ip(Y, Y))[:, None]
        RYY = np.einsum("nlkij,ni,nj,nk->nl", Rf, X, Y, Y)  # R(X,Y)Y
        K = ip(RYY, X)
        bXX, bYY, bXY = ip(X, X, b), ip(Y, Y, b), ip(X, Y, b)
        rhs = h.c - bXX * bYY + bXY**2
        bound = K - (h.c - n * n * H1**2)
        ok_hyp = (H2 >= -1e-12) | (n == 2)
        for j, idx in enumerate(idxs):
            row = {"node": int(idx), "plane": pl, "K": float(K[j]), "gauss_rhs": float(rhs[j]),
                   "residual": float(K[j] - rhs[j]), "bound_margin": float(bound[j]),
                   "margin": float(-abs(K[j] - rhs[j]))}
            rep.rows.append(row)
        if np.any(ok_hyp):
            bound_min = min(bound_min, float(bound[ok_hyp].min()))
        hyp_nodes += int((~ok_hyp).sum())
    rep.n_excluded = int(m.size - m.sum())
    rep.hypotheses = {"h2_nonnegative_for_bound": hyp_nodes == 0}
    rep.extra = {"bound_min_margin": bound_min, "bound_nodes_without_h2": hyp_nodes}
    return rep


def node_dump_csv(h: Hypersurface, sd: ShapeData | None = None, margins: np.ndarray | None = None,
                  p=None) -> str:
    """Plot-ready CSV of node coordinates, u, H_1..H_n and optional margins."""
    sd = shape_data(h) if sd is None else sd
    dr = distance_restriction(h, p)
    n = h.n
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = [f"x{i + 1}" for i in range(n)] + ["u"] + [f"H{k}" for k in range(1, n + 1)]
    if margins is not None:
        head.append("margin")
    w.writerow(head)
    for idx in np.flatnonzero(h.interior.ravel()):
        node = h.node(idx)
        row = [repr(float(v)) for v in h.x[node]] + [repr(float(dr.u[node]))]
        row += [repr(float(sd.H[node][k])) for k in range(1, n + 1)]
        if margins is not None:
            row.append(repr(float(margins[node])))
        w.writerow(row)
    return buf.getvalue()

"""Curvature estimates for spacelike hypersurfaces via exact grid extrema.

On a compact grid the Omori-Yau sequences are replaced by the node where u
attains its maximum (or minimum); the estimate is only asserted when that
node lies in the stencil interior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .comparison_ode import CurvatureProfile, f_c, f_c_inverse
from .errors import HypothesisError
from .hypersurface import (
    Hypersurface,
    NewtonFamily,
    ShapeData,
    _bound_holds,
    _gradient_stack,
    _slope_function,
    distance_restriction,
    ellipticity_check,
    lk_apply,
    newton_family,
    shape_data,
)

ESTIMATE_TOL = 1e-6
CONSTANCY_TOL = 1e-8
BERNSTEIN_TOL = 1e-6


@dataclass
class ExtremumSurrogate:
    index: int
    node: tuple
    value: float
    kind: str  # "max" or "min"
    grad_norm: float
    fd_tolerance: float
    operator_value: float | None = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "index": self.index, "node": list(self.node), "value": self.value,
                "grad_norm": self.grad_norm, "fd_tolerance": self.fd_tolerance,
                "operator_value": self.operator_value}


def _intrinsic_hessian_norm(h: Hypersurface, nf: NewtonFamily, u: np.ndarray, node) -> float:
    """Largest |eigenvalue| of the intrinsic Hessian of u at ``node``."""
    n = h.n
    df = _gradient_stack(u, h.dx, n)
    ddf = np.stack([_gradient_stack(df[..., j], h.dx, n) for j in range(n)], axis=-1)
    hess = ddf[node] - np.einsum("mij,m->ij", h.christoffel()[node], df[node])
    Linv = np.linalg.inv(h.chol[node])
    H = Linv @ (0.5 * (hess + hess.T)) @ Linv.T
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def find_extremum(h: Hypersurface, u: np.ndarray, kind: str, nf: NewtonFamily | None = None,
                  grad_norm2: np.ndarray | None = None) -> ExtremumSurrogate:
    """Interior node attaining the global max/min of u; rejects boundary extrema."""
    sign = 1.0 if kind == "max" else -1.0
    su = sign * u
    best_all = float(su.max())
    inner = np.where(h.interior, su, -np.inf)
    idx = int(np.argmax(inner.ravel()))
    best_in = float(inner.ravel()[idx])
    if best_in < best_all - 1e-12 * max(1.0, abs(best_all)):
        raise HypothesisError(
            f"the {kind} of u is attained on the grid margin, not in the interior; "
            "the compact extremum surrogate does not apply")
    node = h.node(idx)
    gn = float(math.sqrt(max(grad_norm2[node], 0.0))) if grad_norm2 is not None else float("nan")
    hnorm = _intrinsic_hessian_norm(h, nf, u, node) if nf is not None else 0.0
    fd_tol = 0.5 * math.sqrt(h.n) * float(np.max(h.dx)) * max(hnorm, 1e-12)
    return ExtremumSurrogate(idx, node, float(u[node]), kind, gn, fd_tol)


def proof_operator_eval(h: Hypersurface, nf: NewtonFamily, k: int, mode: str, p=None,
                        G: CurvatureProfile | None = None, sd: ShapeData | None = None,
                        check_ellipticity: bool = True) -> np.ndarray:
    """The weighted combination sum_j w_j L_j u used at the extremum of u."""
    if k < 1:
        raise ValueError("proof operator needs k >= 1")
    if mode not in ("sup_side", "inf_side"):
        raise ValueError("mode must be 'sup_side' or 'inf_side'")
    n = h.n
    G = CurvatureProfile.constant(h.c) if G is None else G
    sd = shape_data(h) if sd is None else sd
    if check_ellipticity and k >= 2:
        cert = ellipticity_check(sd, nf, k, h.interior)
        if not cert.global_positive_definite:
            raise HypothesisError(f"P_j not positive definite for some j < {k}: witness {cert.witness}")
    dr = distance_restriction(h, p)
    m = h.interior
    slope_fn, _ = _slope_function(G, float(dr.u.max()))
    if mode == "sup_side":
        base = np.full(dr.u.shape, np.nan)
        base[m] = np.abs(slope_fn(dr.u[m]))
    else:
        base = np.full(dr.u.shape, float(slope_fn(float(dr.u[m].min()))))
    one = 1.0 + dr.grad_norm2
    ck = [(n - j) * comb(n, j) for j in range(n)]
    total = np.zeros(dr.u.shape)
    for j in range(k):
        e = k - 1 - j
        w = one ** (-e / 2.0) * base**e * ck[k - 1] / ck[j]
        total = total + w * lk_apply(h, nf, j, dr.u)
    return np.where(m, total, np.nan)


@dataclass
class EstimateReport:
    k: int
    direction: str
    lhs: float
    rhs: float
    slack: float
    tol: float
    hypotheses_met: list = field(default_factory=list)
    surrogate: ExtremumSurrogate | None = None
    model: dict = field(default_factory=dict)
    G: str = ""

    @property
    def passed(self) -> bool:
        return self.slack >= -self.tol

    def to_json(self) -> dict:
        return {"k": self.k, "direction": self.direction, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "tol": self.tol, "pass": self.passed,
                "hypotheses_met": list(self.hypotheses_met), "model": self.model, "G": self.G,
                "surrogate": None if self.surrogate is None else self.surrogate.to_json()}

    def table_row(self) -> str:
        return (f"{self.k:>2}  {self.direction:<7}  {self.lhs:>14.8g}  {self.rhs:>14.8g}  "
                f"{self.slack:>12.4e}  {','.join(self.hypotheses_met)}")


TABLE_HEADER = f"{'k':>2}  {'dir':<7}  {'lhs':>14}  {'rhs':>14}  {'slack':>12}  hypotheses"


def estimate_table(reports) -> str:
    return "\n".join([TABLE_HEADER] + [r.table_row() for r in reports]) + "\n"


def check_estimate(h: Hypersurface, p, G: CurvatureProfile, k: int, direction: str,
                   tol: float = ESTIMATE_TOL, sd: ShapeData | None = None,
                   nf: NewtonFamily | None = None) -> EstimateReport:
    """inf H_k^{1/k} <= |h'/h|(sup u) (``inf_le``) or sup H_k^{1/k} >= h'/h(inf u) (``sup_ge``).

    For k = 1 the inf_le bound is h'/h(sup u) without absolute value.
    Hypothesis failures raise :class:`HypothesisError`; no verdict is given.
    """
    if direction not in ("inf_le", "sup_ge"):
        raise ValueError("direction must be 'inf_le' or 'sup_ge'")
    n = h.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    sd = shape_data(h) if sd is None else sd
    nf = newton_family(sd) if nf is None else nf
    dr = distance_restriction(h, p)
    m = h.interior
    u = dr.u
    c = h.c
    met = []
    side = "lower" if direction == "inf_le" else "upper"
    if not _bound_holds(c, G, u[m], side):
        rel = "<=" if side == "lower" else ">="
        raise HypothesisError(f"{direction} needs c {rel} G on the u-range; c={c}, G={G.describe()}")
    met.append("curvature_bound")
    if k == 1:
        met.append("ricci_bound")
    slope_fn, r0 = _slope_function(G, float(u.max()))
    if float(u[m].max()) >= r0:
        raise HypothesisError(f"u reaches r0={r0:.12g}; the bound h'/h is undefined there")
    met.append("inside_r0")
    Hk = sd.H[..., k][m]
    if k >= 2:
        if np.any(Hk <= 0):
            raise HypothesisError(f"H_{k} is not positive on the grid (min {Hk.min():.3g})")
        met.append(f"H{k}_positive")
        met.append("sup_H1_finite")
        cert = ellipticity_check(sd, nf, k, m)
        if k >= 3:
            if not cert.elliptic_point_found:
                raise HypothesisError("no elliptic point on the grid")
            met.append("elliptic_point")
        if not cert.global_positive_definite:
            raise HypothesisError(f"Newton transformations not positive definite: {cert.witness}")
        met.append("Pj_positive_definite")
    root = np.sign(Hk) * np.abs(Hk) ** (1.0 / k)
    kind = "max" if direction == "inf_le" else "min"
    sur = find_extremum(h, u, kind, nf, dr.grad_norm2)
    met.append(f"interior_{kind}")
    mode = "sup_side" if direction == "inf_le" else "inf_side"
    op = proof_operator_eval(h, nf, k, mode, p, G, sd, check_ellipticity=False)
    sur.operator_value = float(op[sur.node])
    if direction == "inf_le":
        lhs = float(root.min())
        f_at = float(slope_fn(float(u[m].max())))
        rhs = f_at if k == 1 else abs(f_at)
        slack = rhs - lhs
    else:
        lhs = float(root.max())
        rhs = float(slope_fn(float(u[m].min())))
        slack = lhs - rhs
    return EstimateReport(k, direction, lhs, rhs, slack, tol, met, sur, h.model.describe(), G.describe())


@dataclass
class BernsteinVerdict:
    level_set: bool
    k: int
    H: float
    radius: float
    sup_u: float
    inf_u: float
    squeeze_upper: float
    squeeze_lower: float
    band_width: float
    allowed_width: float
    tol: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def bernstein_check(h: Hypersurface, p, c: float | None = None, k: int = 2,
                    tol: float = BERNSTEIN_TOL, sd: ShapeData | None = None) -> BernsteinVerdict:
    """Squeeze f_c(sup u) >= H_k^{1/k} >= f_c(inf u) and locate u inside the level band."""
    c = h.c if c is None else float(c)
    sd = shape_data(h) if sd is None else sd
    m = h.interior
    Hk = sd.H[..., k][m]
    spread = float(Hk.max() - Hk.min())
    if spread > CONSTANCY_TOL:
        raise HypothesisError(f"H_{k} is not constant (variation {spread:.3g} > {CONSTANCY_TOL})")
    H = float(Hk.mean())
    if H <= 0:
        raise HypothesisError(f"H_{k} must be a positive constant, got {H:.6g}")
    if k >= 3:
        nf = newton_family(sd)
        if not ellipticity_check(sd, nf, k, m).elliptic_point_found:
            raise HypothesisError("no elliptic point on the grid")
    dr = distance_restriction(h, p)
    su, iu = float(dr.u[m].max()), float(dr.u[m].min())
    y = H ** (1.0 / k)
    rho = f_c_inverse(c, y)
    up = float(f_c(c, su)) - y
    lo = y - float(f_c(c, iu))
    hi_r = f_c_inverse(c, y - tol) if (c <= 0 and y - tol > 0) or (c > 0 and y - tol > math.sqrt(c)) else math.inf
    lo_r = f_c_inverse(c, y + tol)
    allowed = hi_r - lo_r
    width = max(su, rho) - min(iu, rho)
    ok = up >= -tol and lo >= -tol and width <= allowed
    return BernsteinVerdict(bool(ok), k, H, rho, su, iu, up, lo, width, allowed, tol)

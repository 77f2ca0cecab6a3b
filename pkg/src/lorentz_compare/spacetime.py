"""Model spacetimes: metric, Levi-Civita connection and curvature in a chart.

Signature is (-, +, ..., +), chart coordinate 0 is time and its positive
direction is future.  Curvature follows R(X,Y)Z = D_X D_Y Z - D_Y D_X Z -
D_[X,Y] Z, stored as ``R[l, k, i, j]`` = l-component of R(d_i, d_j) d_k, so a
space form of curvature c has R(X,Y)Z = c(<Y,Z>X - <X,Z>Y).

Space forms are realised as explicit hypersurfaces of a flat ambient space:

* c = 0: Minkowski space, chart = ambient coordinates.
* c > 0: de Sitter space <X,X> = a^2 in R^{1,n+1},
  X(t, y) = (a sinh(t/a), cosh(t/a) sqrt(a^2-|y|^2), cosh(t/a) y), |y| < a.
* c < 0: anti-de Sitter space <X,X> = -a^2 in R^{2,n} (static chart),
  X(tau, y) = (rho sin(tau/a), rho cos(tau/a), y), rho = sqrt(a^2+|y|^2).

with a = 1/sqrt(|c|).  Closed-form connection coefficients come from the
embedding, Gamma^k_ij = g^kl <d_l X, d_i d_j X>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DomainError, ModelError, StencilError

FD_STEP = 1e-4
FD_STEP_CURVATURE = 1e-3


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent random stream for sample ``index`` under ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def inner(g, u, v):
    return np.einsum("...i,...ij,...j->...", u, g, v)


def curvature_apply(R, x, y, z):
    """R(x, y) z for a component array R[l, k, i, j]."""
    return np.einsum("...lkij,...k,...i,...j->...l", R, z, x, y)


def orthonormal_frame(g: np.ndarray, first: np.ndarray | None = None) -> np.ndarray:
    """Gram-Schmidt in the metric g; columns e_0 (timelike), e_1..e_n.

    ``first`` seeds e_0 (it must be timelike); otherwise the coordinate
    basis is used in order, so e_0 is the normalised time direction.
    """
    dim = g.shape[0]
    basis = [np.eye(dim)[:, i] for i in range(dim)]
    if first is not None:
        basis = [np.asarray(first, dtype=float)] + basis
    frame, signs = [], []
    for w in basis:
        v = w.copy()
        for e, s in zip(frame, signs):
            v = v - s * inner(g, v, e) * e
        nv = inner(g, v, v)
        if abs(nv) < 1e-10:
            continue
        frame.append(v / math.sqrt(abs(nv)))
        signs.append(-1.0 if nv < 0 else 1.0)
        if len(frame) == dim:
            break
    if len(frame) != dim or signs.count(-1.0) != 1 or signs[0] != -1.0:
        raise ModelError("metric sample is not Lorentzian; frame completion failed")
    return np.stack(frame, axis=1)


class SpacetimeModel:
    """Common interface.  Subclasses provide ``metric`` and ``domain`` data."""

    n: int
    lo: np.ndarray
    hi: np.ndarray

    @property
    def dim(self) -> int:
        return self.n + 1

    def metric(self, x):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def in_domain(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lo + margin) and np.all(x < self.hi - margin))

    def check_metric(self, x) -> None:
        g = self.metric(x)
        if not np.allclose(g, g.T, atol=1e-12):
            raise ModelError("metric is not symmetric")
        ev = np.linalg.eigvalsh(g)
        if np.min(np.abs(ev)) < 1e-12 or np.sum(ev < 0) != 1:
            raise ModelError(f"metric at {x} is not Lorentzian (eigenvalues {ev})")

    def _require_stencil(self, x, width):
        if not self.in_domain(x, margin=width):
            raise StencilError(f"point {x} is within the stencil width {width} of the chart boundary")

    def christoffel_fd(self, x, step: float = FD_STEP):
        """Central differences of the metric with one Richardson step."""
        x = np.asarray(x, dtype=float)
        self._require_stencil(x, step)

        def gamma(hh):
            d = self.dim
            dg = np.empty((d, d, d))  # dg[m] = d_m g
            for m in range(d):
                e = np.zeros(d)
                e[m] = hh
                dg[m] = (self.metric(x + e) - self.metric(x - e)) / (2 * hh)
            # Gamma_{l,ij} = (d_i g_lj + d_j g_li - d_l g_ij) / 2
            low = 0.5 * (np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - dg)
            ginv = np.linalg.inv(self.metric(x))
            return np.einsum("kl,lij->kij", ginv, low)

        coarse = gamma(step)
        fine = gamma(step / 2)
        return (4 * fine - coarse) / 3

    def curvature_fd(self, x, step: float = FD_STEP_CURVATURE):
        """R[l,k,i,j] from central differences of the connection coefficients."""
        x = np.asarray(x, dtype=float)
        self._require_stencil(x, step + FD_STEP)
        d = self.dim

        def dgamma(hh):
            out = np.empty((d, d, d, d))  # out[m] = d_m Gamma
            for m in range(d):
                e = np.zeros(d)
                e[m] = hh
                out[m] = (self.christoffel(x + e) - self.christoffel(x - e)) / (2 * hh)
            return out

        dG = (4 * dgamma(step / 2) - dgamma(step)) / 3
        G = self.christoffel(x)
        # R^l_{kij} = d_i G^l_{jk} - d_j G^l_{ik} + G^l_{im} G^m_{jk} - G^l_{jm} G^m_{ik}
        R = (
            np.einsum("iljk->lkij", dG)
            - np.einsum("jlik->lkij", dG)
            + np.einsum("lim,mjk->lkij", G, G)
            - np.einsum("ljm,mik->lkij", G, G)
        )
        return R

    def christoffel(self, x):
        return self.christoffel_fd(x)

    def curvature(self, x):
        return self.curvature_fd(x)

    def geodesic_acceleration(self, x, v):
        return -np.einsum("...kij,...i,...j->...k", self.christoffel(x), v, v)


class SpaceForm(SpacetimeModel):
    """Lorentzian space form of constant sectional curvature c and dimension n+1."""

    def __init__(self, c: float, n: int):
        if n < 1:
            raise ModelError("space form needs n >= 1")
        self.c = float(c)
        self.n = int(n)
        self.a = math.inf if self.c == 0 else 1.0 / math.sqrt(abs(self.c))
        d = self.n + 1
        if self.c == 0:
            self.eta = np.array([-1.0] + [1.0] * self.n)
            self.lo = np.full(d, -np.inf)
            self.hi = np.full(d, np.inf)
        elif self.c > 0:
            self.eta = np.array([-1.0] + [1.0] * (self.n + 1))
            self.lo = np.array([-np.inf] + [-self.a] * self.n)
            self.hi = np.array([np.inf] + [self.a] * self.n)
        else:
            self.eta = np.array([-1.0, -1.0] + [1.0] * self.n)
            self.lo = np.array([-math.pi * self.a] + [-np.inf] * self.n)
            self.hi = np.array([math.pi * self.a] + [np.inf] * self.n)

    def __repr__(self):
        return f"SpaceForm(c={self.c:g}, n={self.n})"

    def describe(self) -> dict:
        return {"kind": "space_form", "c": self.c, "n": self.n}

    @property
    def ambient_dim(self) -> int:
        return self.eta.size

    def in_domain(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if self.c > 0:
            return bool(np.linalg.norm(x[1:]) < self.a - margin)
        return super().in_domain(x, margin)

    def ambient_inner(self, u, v):
        return np.einsum("...a,a,...a->...", u, self.eta, v)

    # embedding and its derivatives, vectorized over leading axes

    def embed(self, x):
        x = np.asarray(x, dtype=float)
        if self.c == 0:
            return x.copy()
        a = self.a
        t, y = x[..., 0], x[..., 1:]
        yy = np.sum(y * y, axis=-1)
        if self.c > 0:
            w = np.sqrt(a * a - yy)
            ch = np.cosh(t / a)
            return np.concatenate(
                [(a * np.sinh(t / a))[..., None], (ch * w)[..., None], ch[..., None] * y], axis=-1
            )
        rho = np.sqrt(a * a + yy)
        return np.concatenate(
            [(rho * np.sin(t / a))[..., None], (rho * np.cos(t / a))[..., None], y], axis=-1
        )

    def chart(self, X):
        """Inverse of :meth:`embed` on the chart's image."""
        X = np.asarray(X, dtype=float)
        if self.c == 0:
            return X.copy()
        a = self.a
        if self.c > 0:
            t = a * np.arcsinh(X[..., 0] / a)
            y = X[..., 2:] / np.cosh(t / a)[..., None]
            return np.concatenate([t[..., None], y], axis=-1)
        t = a * np.arctan2(X[..., 0], X[..., 1])
        return np.concatenate([t[..., None], X[..., 2:]], axis=-1)

    def embed_jacobian(self, x):
        """J[..., A, i] = d_i X^A."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        if self.c == 0:
            return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()
        a = self.a
        t, y = x[..., 0], x[..., 1:]
        yy = np.sum(y * y, axis=-1)
        J = np.zeros(x.shape[:-1] + (d + 1, d))
        eye = np.eye(self.n)
        if self.c > 0:
            w = np.sqrt(a * a - yy)
            ch, sh = np.cosh(t / a), np.sinh(t / a)
            J[..., 0, 0] = ch
            J[..., 1, 0] = sh * w / a
            J[..., 1, 1:] = -(ch / w)[..., None] * y
            J[..., 2:, 0] = (sh / a)[..., None] * y
            J[..., 2:, 1:] = ch[..., None, None] * eye
        else:
            rho = np.sqrt(a * a + yy)
            s, co = np.sin(t / a), np.cos(t / a)
            J[..., 0, 0] = rho * co / a
            J[..., 0, 1:] = (s / rho)[..., None] * y
            J[..., 1, 0] = -rho * s / a
            J[..., 1, 1:] = (co / rho)[..., None] * y
            J[..., 2:, 1:] = eye
        return J

    def embed_hessian(self, x):
        """H[..., A, i, j] = d_i d_j X^A."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        if self.c == 0:
            return np.zeros(x.shape[:-1] + (d, d, d))
        a = self.a
        t, y = x[..., 0], x[..., 1:]
        yy = np.sum(y * y, axis=-1)
        yyT = y[..., :, None] * y[..., None, :]
        eye = np.eye(self.n)
        H = np.zeros(x.shape[:-1] + (d + 1, d, d))
        if self.c > 0:
            w = np.sqrt(a * a - yy)
            ch, sh = np.cosh(t / a), np.sinh(t / a)
            H[..., 0, 0, 0] = sh / a
            H[..., 1, 0, 0] = ch * w / (a * a)
            mixed = -(sh / (a * w))[..., None] * y
            H[..., 1, 0, 1:] = mixed
            H[..., 1, 1:, 0] = mixed
            H[..., 1, 1:, 1:] = -ch[..., None, None] * (
                eye / w[..., None, None] + yyT / (w**3)[..., None, None]
            )
            H[..., 2:, 0, 0] = (ch / (a * a))[..., None] * y
            H[..., 2:, 0, 1:] = (sh / a)[..., None, None] * eye
            H[..., 2:, 1:, 0] = (sh / a)[..., None, None] * eye
        else:
            rho = np.sqrt(a * a + yy)
            s, co = np.sin(t / a), np.cos(t / a)
            hyy = eye / rho[..., None, None] - yyT / (rho**3)[..., None, None]
            H[..., 0, 0, 0] = -rho * s / (a * a)
            m0 = (co / (a * rho))[..., None] * y
            H[..., 0, 0, 1:] = m0
            H[..., 0, 1:, 0] = m0
            H[..., 0, 1:, 1:] = s[..., None, None] * hyy
            H[..., 1, 0, 0] = -rho * co / (a * a)
            m1 = -(s / (a * rho))[..., None] * y
            H[..., 1, 0, 1:] = m1
            H[..., 1, 1:, 0] = m1
            H[..., 1, 1:, 1:] = co[..., None, None] * hyy
        return H

    def metric(self, x):
        J = self.embed_jacobian(x)
        return np.einsum("...ai,a,...aj->...ij", J, self.eta, J)

    def christoffel(self, x):
        J = self.embed_jacobian(x)
        if self.c == 0:
            d = self.dim
            return np.zeros(J.shape[:-2] + (d, d, d))
        H = self.embed_hessian(x)
        g = np.einsum("...ai,a,...aj->...ij", J, self.eta, J)
        low = np.einsum("...al,a,...aij->...lij", J, self.eta, H)
        shp = low.shape
        sol = np.linalg.solve(g, low.reshape(shp[:-2] + (shp[-2] * shp[-1],)))
        return sol.reshape(shp)

    def curvature(self, x):
        g = self.metric(x)
        eye = np.eye(self.dim)
        # R^l_{kij} = c (g_jk delta^l_i - g_ik delta^l_j)
        return self.c * (
            np.einsum("...jk,li->...lkij", g, eye) - np.einsum("...ik,lj->...lkij", g, eye)
        )

    def time_vector_ambient(self, X):
        """A future-directed timelike ambient vector field tangent to the model at X."""
        X = np.asarray(X, dtype=float)
        if self.c < 0:
            K = np.zeros_like(X)
            K[..., 0] = X[..., 1] / self.a
            K[..., 1] = -X[..., 0] / self.a
            return K
        e = np.zeros_like(X)
        e[..., 0] = 1.0
        if self.c > 0:
            # tangential projection of the ambient time axis
            e = e + (X[..., 0] / self.a**2)[..., None] * X
        return e


_BUILTIN_METRICS = {}


def _builtin(name, lo, hi):
    def deco(fn):
        _BUILTIN_METRICS[name] = (fn, lo, hi)
        return fn

    return deco


@_builtin("minkowski", -10.0, 10.0)
def _minkowski(x):
    return np.diag([-1.0] + [1.0] * (x.size - 1))


@_builtin("de_sitter_flat", -2.0, 2.0)
def _de_sitter_flat(x):
    # -dt^2 + exp(2t)|dx|^2, constant curvature 1
    return np.diag([-1.0] + [math.exp(2 * x[0])] * (x.size - 1))


@_builtin("frw_quadratic", -2.0, 2.0)
def _frw_quadratic(x):
    # -dt^2 + w(t)^2 |dx|^2 with w = 1 + t^2/4; K(d_t, X) = w''/w
    w = 1.0 + 0.25 * x[0] ** 2
    return np.diag([-1.0] + [w * w] * (x.size - 1))


def builtin_metric_names() -> list[str]:
    return sorted(_BUILTIN_METRICS)


class CoordinateMetric(SpacetimeModel):
    """Metric given by component functions on a coordinate box; FD curvature."""

    def __init__(self, n: int, components: str, lo=None, hi=None):
        name = components.split(":", 1)[1] if components.startswith("builtin:") else components
        if name not in _BUILTIN_METRICS:
            raise ModelError(f"unknown builtin metric {components!r}; known: {builtin_metric_names()}")
        fn, dlo, dhi = _BUILTIN_METRICS[name]
        self.name = name
        self.n = int(n)
        self._fn = fn
        d = self.n + 1
        self.lo = np.full(d, dlo, dtype=float) if lo is None else np.asarray(lo, dtype=float)
        self.hi = np.full(d, dhi, dtype=float) if hi is None else np.asarray(hi, dtype=float)
        if self.lo.shape != (d,) or self.hi.shape != (d,) or np.any(self.lo >= self.hi):
            raise ModelError("domain box must have lo < hi with n+1 entries each")

    def __repr__(self):
        return f"CoordinateMetric({self.name!r}, n={self.n})"

    def describe(self) -> dict:
        return {
            "kind": "coordinate_metric",
            "n": self.n,
            "components": f"builtin:{self.name}",
            "domain": {"lo": self.lo.tolist(), "hi": self.hi.tolist()},
        }

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            return np.stack([self.metric(xi) for xi in x.reshape(-1, self.dim)]).reshape(
                x.shape[:-1] + (self.dim, self.dim)
            )
        return self._fn(x)

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            d = self.dim
            return np.stack([self.christoffel_fd(xi) for xi in x.reshape(-1, d)]).reshape(
                x.shape[:-1] + (d, d, d)
            )
        return self.christoffel_fd(x)


def model_from_json(obj: dict) -> SpacetimeModel:
    kind = obj.get("kind")
    if kind == "space_form":
        return SpaceForm(obj["c"], obj["n"])
    if kind == "coordinate_metric":
        dom = obj.get("domain") or {}
        return CoordinateMetric(obj["n"], obj["components"], dom.get("lo"), dom.get("hi"))
    raise ModelError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class TangentVector:
    model: SpacetimeModel
    point: np.ndarray
    components: np.ndarray

    @property
    def norm2(self) -> float:
        return float(inner(self.model.metric(self.point), self.components, self.components))

    @property
    def causal_type(self) -> str:
        q = self.norm2
        if q < -1e-12:
            return "timelike"
        if q > 1e-12:
            return "spacelike"
        return "null"

    @property
    def future(self) -> bool:
        """Future-directed: pairs negatively with the chart time direction."""
        g = self.model.metric(self.point)
        return float(inner(g, self.components, np.eye(self.model.dim)[0])) < 0


@dataclass(frozen=True)
class TimelikePlane:
    model: SpacetimeModel
    point: np.ndarray
    V: np.ndarray
    X: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        g = self.model.metric(self.point)
        vv, xx, vx = inner(g, self.V, self.V), inner(g, self.X, self.X), inner(g, self.V, self.X)
        if abs(vv + 1) > tol or abs(xx - 1) > tol or abs(vx) > tol:
            raise ModelError(
                f"plane is not an orthonormal timelike pair: <V,V>={vv}, <X,X>={xx}, <V,X>={vx}"
            )


def connection_coefficients(model: SpacetimeModel, point, method: str = "auto"):
    if method == "fd":
        return model.christoffel_fd(point)
    point = np.asarray(point, dtype=float)
    if not model.in_domain(point):
        raise DomainError(f"point {point} outside the chart domain")
    return model.christoffel(point)


def curvature_tensor(model: SpacetimeModel, point, method: str = "auto"):
    if method == "fd":
        return model.curvature_fd(point)
    return model.curvature(point)


def sectional_timelike(model: SpacetimeModel, plane: TimelikePlane, method: str = "auto") -> float:
    """K(V, X) = <R(V,X)X, V> / (<V,V><X,X> - <V,X>^2)."""
    g = model.metric(plane.point)
    V, X = plane.V, plane.X
    gram = inner(g, V, V) * inner(g, X, X) - inner(g, V, X) ** 2
    if abs(gram) < 1e-10:
        raise DegeneracyError("degenerate plane: Gram determinant vanishes")
    R = curvature_tensor(model, plane.point, method)
    return float(inner(g, curvature_apply(R, V, X, X), V) / gram)


def ricci_timelike(model: SpacetimeModel, point, V, method: str = "auto") -> float:
    """Ric(V, V) traced over an orthonormal frame completing V."""
    point = np.asarray(point, dtype=float)
    V = np.asarray(V, dtype=float)
    g = model.metric(point)
    if abs(inner(g, V, V) + 1) > 1e-8:
        raise ModelError("ricci_timelike needs a unit timelike vector")
    frame = orthonormal_frame(g, first=V)
    R = curvature_tensor(model, point, method)
    total = 0.0
    for a in range(model.dim):
        e = frame[:, a]
        eps = float(np.sign(inner(g, e, e)))
        total += eps * inner(g, curvature_apply(R, e, V, V), e)
    return float(total)


def random_unit_timelike(model: SpacetimeModel, point, rng: np.random.Generator,
                         max_rapidity: float = 1.0) -> np.ndarray:
    g = model.metric(point)
    frame = orthonormal_frame(g)
    beta = rng.uniform(0.0, max_rapidity)
    w = rng.normal(size=model.n)
    w /= np.linalg.norm(w)
    return frame[:, 0] * math.cosh(beta) + frame[:, 1:] @ w * math.sinh(beta)


def sample_timelike_plane(model: SpacetimeModel, point, rng) -> TimelikePlane:
    """Random orthonormal (future unit timelike V, unit spacelike X) pair at point."""
    if not isinstance(rng, np.random.Generator):
        rng = stream(*rng) if isinstance(rng, tuple) else stream(int(rng))
    point = np.asarray(point, dtype=float)
    g = model.metric(point)
    V = random_unit_timelike(model, point, rng)
    X = rng.normal(size=model.dim)
    X = X + inner(g, X, V) * V
    X = X / math.sqrt(inner(g, X, X))
    return TimelikePlane(model, point, V, X)

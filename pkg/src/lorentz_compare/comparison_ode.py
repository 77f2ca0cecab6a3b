"""Comparison ODE engine.

Solves h'' = G h, h(0) = 0, h'(0) = 1 for an even curvature profile G,
locates the first positive zero r0 of h, integrates the two Riccati
families seeded at the singular vertex, and checks the Sturm and Riccati
comparison statements nodewise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    AlignmentError,
    ContractError,
    DomainError,
    ProfileDomainError,
    ResolutionError,
    SeedingError,
)

DEFAULT_TOL = 1e-6
T_SERIES = 1e-3
T_SEED = 1e-4
BLOWUP_CAP = 1e8
SUBSTEP_RATIO = 128.0
MAX_STEP_CURVATURE = 1.0


@dataclass(frozen=True)
class CurvatureProfile:
    """Even function G(t), evaluated through |t| only.

    kind is one of ``constant``, ``even-polynomial`` (coefficients of
    powers of t**2) or ``tabulated-even`` (samples on t >= 0, mirrored and
    interpolated with a monotone cubic).
    """

    kind: str
    params: tuple
    _interp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def constant(cls, value: float) -> "CurvatureProfile":
        return cls("constant", (float(value),))

    @classmethod
    def even_polynomial(cls, coefficients: Sequence[float]) -> "CurvatureProfile":
        coeffs = tuple(float(a) for a in coefficients)
        if not coeffs:
            raise ProfileDomainError("even polynomial needs at least one coefficient")
        return cls("even-polynomial", coeffs)

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "CurvatureProfile":
        """Profile from coefficients of plain powers of t; odd terms must vanish."""
        coeffs = [float(a) for a in coefficients]
        odd = [i for i, a in enumerate(coeffs) if i % 2 == 1 and a != 0.0]
        if odd:
            raise ProfileDomainError(
                f"G must be even: nonzero odd-power coefficients at powers {odd}"
            )
        return cls.even_polynomial(coeffs[::2])

    @classmethod
    def tabulated(cls, t: Sequence[float], values: Sequence[float]) -> "CurvatureProfile":
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != values.shape or t.size < 2:
            raise ProfileDomainError("tabulated profile needs matching 1-d arrays of length >= 2")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ProfileDomainError("tabulated profile must start at t=0 and be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ProfileDomainError("tabulated profile has non-finite values")
        # mirrored data makes the interpolant's slope vanish at 0, so G is C^1 and even
        tt = np.concatenate([-t[:0:-1], t])
        vv = np.concatenate([values[:0:-1], values])
        interp = PchipInterpolator(tt, vv, extrapolate=False)
        return cls("tabulated-even", (tuple(t), tuple(values)), interp)

    @classmethod
    def from_json(cls, obj: dict) -> "CurvatureProfile":
        kind = obj.get("kind")
        if kind == "constant":
            return cls.constant(obj["value"])
        if kind == "even-polynomial":
            return cls.even_polynomial(obj["coefficients"])
        if kind == "polynomial":
            return cls.polynomial(obj["coefficients"])
        if kind == "tabulated-even":
            return cls.tabulated(obj["t"], obj["values"])
        raise ProfileDomainError(f"unknown profile kind {kind!r}")

    def to_json(self, grid: tuple[float, float, int] | None = None) -> dict:
        if self.kind == "constant":
            params = {"value": self.params[0]}
        elif self.kind == "even-polynomial":
            params = {"coefficients": list(self.params)}
        else:
            params = {"t": list(self.params[0]), "values": list(self.params[1])}
        out = {"kind": self.kind, "params": params}
        if grid is not None:
            t0, dt, n = grid
            out["grid"] = {"t0": t0, "dt": dt, "n": n}
            out["values"] = [float(v) for v in self.value(t0 + dt * np.arange(n))]
        return out

    @property
    def t_max(self) -> float:
        if self.kind == "tabulated-even":
            return self.params[0][-1]
        return math.inf

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def value(self, t):
        s = np.abs(np.asarray(t, dtype=float))
        if self.kind == "constant":
            out = np.full_like(s, self.params[0])
        elif self.kind == "even-polynomial":
            out = np.polynomial.polynomial.polyval(s * s, self.params)
        else:
            if np.any(s > self.t_max):
                raise ProfileDomainError(
                    f"tabulated profile evaluated beyond its table end t={self.t_max}"
                )
            out = self._interp(s)
        if not np.all(np.isfinite(out)):
            raise ProfileDomainError("non-finite curvature profile value")
        return out if np.ndim(t) else float(out)

    __call__ = value

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.params[0]:g})"
        if self.kind == "even-polynomial":
            return "even-polynomial(" + ",".join(f"{a:g}" for a in self.params) + ")"
        return f"tabulated-even({len(self.params[0])} samples)"


def _hermite(y0, d0, y1, d1, s, h):
    """Cubic Hermite interpolant on [0, h] at fraction s."""
    s2 = s * s
    s3 = s2 * s
    return (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * d0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * d1
    )


def _rk4_linear(g0, gm, g1, h, y, yp, dt):
    """One classical RK4 step for y'' = G y given G at the start, middle and end."""
    k1y, k1p = yp, g0 * y
    k2y, k2p = yp + 0.5 * dt * k1p, gm * (y + 0.5 * dt * k1y)
    k3y, k3p = yp + 0.5 * dt * k2p, gm * (y + 0.5 * dt * k2y)
    k4y, k4p = yp + dt * k3p, g1 * (y + dt * k3y)
    return (
        y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y),
        yp + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
    )


@dataclass(frozen=True)
class ComparisonSolution:
    """Samples of h and h' on the uniform grid t_k = k * step."""

    t: np.ndarray
    h: np.ndarray
    h_prime: np.ndarray
    r0: float
    profile: CurvatureProfile
    step: float

    @property
    def inside(self) -> np.ndarray:
        """Mask of nodes inside the positivity interval [0, r0)."""
        return self.t < self.r0

    def slope(self, t):
        return slope(self, t)

    def to_json(self) -> dict:
        return {
            "kind": "comparison_solution",
            "params": {
                "profile": self.profile.to_json(),
                "r0": None if math.isinf(self.r0) else self.r0,
            },
            "grid": {"t0": 0.0, "dt": self.step, "n": int(self.t.size)},
            "values": [float(v) for v in self.h],
            "h_prime": [float(v) for v in self.h_prime],
        }


@dataclass(frozen=True)
class Sampled:
    """Any sampled function with derivative, accepted by :func:`sturm_verify`."""

    t: np.ndarray
    h: np.ndarray
    h_prime: np.ndarray

    @classmethod
    def from_functions(cls, f: Callable, df: Callable, t) -> "Sampled":
        t = np.asarray(t, dtype=float)
        return cls(t, np.asarray(f(t), dtype=float), np.asarray(df(t), dtype=float))


def _check_resolution(t, h, hp, G, step, stop):
    """Raise when h dips through zero and back inside a single step.

    Steps with step^2 |G| > 1 are rejected outright: there the oscillation
    period is under-resolved and RK4 node values can hide a double crossing.
    """
    g_abs = np.abs(np.asarray(G.value(t[: stop + 2]), dtype=float))
    if g_abs.size and step * step * float(g_abs.max()) > MAX_STEP_CURVATURE:
        k = int(np.argmax(g_abs))
        raise ResolutionError(
            f"step {step:g} under-resolves |G|={g_abs[k]:.6g} near t={t[k]:.6g} "
            f"(step^2 |G| > {MAX_STEP_CURVATURE:g}); reduce the step"
        )
    for k in range(stop):
        if hp[k] * hp[k + 1] >= 0 or h[k] * h[k + 1] <= 0:
            continue
        # turning point inside the step: minimize |Hermite cubic| over it
        s = np.linspace(0.0, 1.0, 65)
        vals = _hermite(h[k], hp[k], h[k + 1], hp[k + 1], s, step)
        if np.any(np.sign(vals) != np.sign(h[k])):
            raise ResolutionError(
                f"h changes sign twice within the step [{t[k]:.6g}, {t[k + 1]:.6g}]; "
                "reduce the step"
            )


def solve_h(G: CurvatureProfile, t_max: float, step: float) -> ComparisonSolution:
    """Integrate h'' = G h, h(0)=0, h'(0)=1 with fixed-step RK4 and certify r0."""
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    if not (0 < step <= t_max / 10):
        raise DomainError("step must satisfy 0 < step <= t_max/10")
    n = int(math.ceil(t_max / step - 1e-9))
    t = step * np.arange(n + 1)
    g_nodes = np.asarray(G.value(t), dtype=float)
    g_mid = np.asarray(G.value(t[:-1] + 0.5 * step), dtype=float)

    h = np.empty(n + 1)
    hp = np.empty(n + 1)
    h[0], hp[0] = 0.0, 1.0
    y, yp = 0.0, 1.0
    for k in range(n):
        y, yp = _rk4_linear(g_nodes[k], g_mid[k], g_nodes[k + 1], step, y, yp, step)
        h[k + 1], hp[k + 1] = y, yp

    first = None
    for k in range(1, n + 1):
        if h[k] <= 0.0:
            first = k
            break
    _check_resolution(t, h, hp, G, step, (first if first is not None else n + 1) - 1)

    if first is None:
        r0 = math.inf
    elif h[first] == 0.0:
        r0 = float(t[first])
    else:
        r0 = _bisect_zero(G, t[first - 1], h[first - 1], hp[first - 1], step)
    return ComparisonSolution(t, h, hp, r0, G, step)


def _bisect_zero(G, t0, y0, yp0, step):
    """Bisection on the one-step RK4 dense output starting at node t0."""

    def h_at(s):
        g0 = G.value(t0)
        gm = G.value(t0 + 0.5 * s)
        g1 = G.value(t0 + s)
        return _rk4_linear(g0, gm, g1, s, y0, yp0, s)[0]

    lo, hi = 0.0, step
    while hi - lo > step * 1e-6:
        mid = 0.5 * (lo + hi)
        if h_at(mid) > 0:
            lo = mid
        else:
            hi = mid
    return float(t0 + 0.5 * (lo + hi))


def slope(sol: ComparisonSolution, t, t_series: float = T_SERIES):
    """h'/h at t in (0, r0), from the series near 0 and Hermite interpolation beyond."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts <= 0) or np.any(ts >= sol.r0):
        raise DomainError(f"slope needs 0 < t < r0 = {sol.r0}")
    if np.any(ts > sol.t[-1]):
        raise DomainError(f"slope requested beyond the solved grid end {sol.t[-1]}")
    g0 = sol.profile.value(0.0)
    series = 1.0 / np.maximum(ts, 1e-300) + g0 * ts / 3.0

    step = sol.step
    k = np.clip(np.floor(ts / step).astype(int), 0, sol.t.size - 2)
    s = ts / step - k
    gk = sol.profile.value(sol.t[k])
    gk1 = sol.profile.value(sol.t[k + 1])
    hv = _hermite(sol.h[k], sol.h_prime[k], sol.h[k + 1], sol.h_prime[k + 1], s, step)
    hpv = _hermite(
        sol.h_prime[k], gk * sol.h[k], sol.h_prime[k + 1], gk1 * sol.h[k + 1], s, step
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        interp = hpv / hv
    out = np.where(ts < t_series, series, interp)
    return out if np.ndim(t) else float(out)


def f_c(c: float, t):
    """Closed-form h'/h for constant G = c."""
    ts = np.asarray(t, dtype=float)
    if np.any(ts <= 0):
        raise DomainError("f_c needs t > 0")
    if c > 0:
        sc = math.sqrt(c)
        out = sc / np.tanh(sc * ts)
    elif c == 0:
        out = 1.0 / ts
    else:
        sc = math.sqrt(-c)
        bound = math.pi / sc
        if np.any(ts >= bound):
            raise DomainError(f"f_c with c={c} needs t < pi/sqrt(-c) = {bound:.12g}")
        out = sc / np.tan(sc * ts)
    return out if np.ndim(t) else float(out)


def f_c_inverse(c: float, y: float, iterations: int = 80) -> float:
    """Invert the decreasing branch of f_c by bisection."""
    if c > 0 and y <= math.sqrt(c):
        raise DomainError(f"f_c with c={c} only takes values above sqrt(c)={math.sqrt(c):.12g}")
    if c == 0 and y <= 0:
        raise DomainError("f_0 only takes positive values")
    lo = 0.0
    bound = math.pi / math.sqrt(-c) if c < 0 else math.inf
    hi = 1.0
    while hi < bound and f_c(c, hi) > y:
        hi *= 2.0
    hi = min(hi, bound)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0 or f_c(c, mid) > y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ComparisonVerdict:
    holds: bool
    min_margin: float
    argmin_t: float
    tol: float = DEFAULT_TOL
    detail: dict = field(default_factory=dict)


def _verdict(margins: dict[str, tuple[np.ndarray, np.ndarray]], tol: float) -> ComparisonVerdict:
    best, where, fam = math.inf, math.nan, None
    detail = {}
    for name, (tt, m) in margins.items():
        m = np.where(np.isnan(m), -np.inf, m)
        if m.size == 0:
            continue
        i = int(np.argmin(m))
        detail[name] = float(m[i])
        if m[i] < best:
            best, where, fam = float(m[i]), float(tt[i]), name
    detail["worst_family"] = fam
    return ComparisonVerdict(best >= -tol, best, where, tol, detail)


def sturm_verify(phi, psi, interval: tuple[float, float] | None = None,
                 tol: float = DEFAULT_TOL) -> ComparisonVerdict:
    """Check phi'/phi <= psi'/psi and psi >= phi at the interior nodes of (0, T)."""
    if phi.t.shape != psi.t.shape or not np.allclose(phi.t, psi.t, rtol=0, atol=1e-12):
        raise AlignmentError("phi and psi must be sampled on a common grid")
    t = phi.t
    lo, hi = interval if interval is not None else (0.0, t[-1])
    mask = (t > lo) & (t < hi)
    if np.any(phi.h[mask] <= 0):
        raise DomainError("phi must be positive on the open interval")
    if psi.h_prime[0] < phi.h_prime[0]:
        raise DomainError("Sturm comparison needs psi'(0) >= phi'(0)")
    tt = t[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_gap = psi.h_prime[mask] / psi.h[mask] - phi.h_prime[mask] / phi.h[mask]
    value_gap = psi.h[mask] - phi.h[mask]
    return _verdict({"log_derivative": (tt, log_gap), "value": (tt, value_gap)}, tol)


@dataclass(frozen=True)
class RiccatiSolution:
    """Riccati family sampled at the uniform nodes k * step below the blow-up."""

    alpha: float
    sign: str
    t: np.ndarray
    g: np.ndarray
    blow_up_time: float | None
    t_start: float
    g_start: float
    step: float
    profile: CurvatureProfile

    @property
    def horizon(self) -> float:
        return math.inf if self.blow_up_time is None else self.blow_up_time


def riccati_solve(G: CurvatureProfile, alpha: float, sign: str, t_max: float, step: float,
                  t_seed: float = T_SEED, cap: float = BLOWUP_CAP) -> RiccatiSolution:
    """Integrate one Riccati family from its vertex series.

    ``upper`` is g' = -g^2/alpha + alpha*G seeded with alpha/t + alpha*G(0)*t/3
    (the h'/h family); ``lower`` is g' = g^2/alpha - alpha*G seeded with the
    negated series, the branch along which g + alpha/t stays integrable.
    RK4 substeps are capped at alpha/(128|g|) near the vertex and near blow-up.
    """
    if not alpha > 0:
        raise ContractError("alpha must be positive")
    if sign not in ("lower", "upper"):
        raise ContractError("sign must be 'lower' or 'upper'")
    if not (0 < step <= t_max / 10):
        raise DomainError("step must satisfy 0 < step <= t_max/10")
    if not (0 < t_seed < step):
        raise DomainError("t_seed must lie in (0, step)")

    s = 1.0 if sign == "upper" else -1.0
    g0 = G.value(0.0)

    def rhs(tt, gg):
        return s * (-gg * gg / alpha + alpha * G.value(tt))

    g = s * (alpha / t_seed + alpha * g0 * t_seed / 3.0)
    tcur = t_seed
    g_start = g
    limit = cap * max(1.0, alpha)
    n = int(math.ceil(t_max / step - 1e-9))
    nodes, values = [], []
    blow = None
    for k in range(1, n + 1):
        target = k * step
        while tcur < target:
            dt = min(target - tcur, alpha / (SUBSTEP_RATIO * abs(g)))
            k1 = rhs(tcur, g)
            k2 = rhs(tcur + 0.5 * dt, g + 0.5 * dt * k1)
            k3 = rhs(tcur + 0.5 * dt, g + 0.5 * dt * k2)
            k4 = rhs(tcur + dt, g + dt * k3)
            g = g + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            tcur = tcur + dt if tcur + dt < target else target
            if not math.isfinite(g) or abs(g) > limit:
                blow = tcur
                break
        if blow is not None:
            break
        nodes.append(target)
        values.append(g)
    if blow is not None and blow < t_seed + 10 * step:
        raise SeedingError(
            f"{sign} Riccati family blew up at t={blow:.3g}, within 10 steps of the seed"
        )
    return RiccatiSolution(alpha, sign, np.asarray(nodes), np.asarray(values), blow,
                           t_seed, g_start, step, G)


def riccati_compare(g1: RiccatiSolution, g2: RiccatiSolution, tol: float = DEFAULT_TOL,
                    branch: str = "ge") -> ComparisonVerdict:
    """Check T1 <= T2 and -g1 <= g2 on (0, T1) (``branch='le'``: T1 >= T2, -g2 <= g1)."""
    if g1.alpha != g2.alpha:
        raise ContractError("riccati_compare needs equal alpha")
    if not math.isclose(g1.step, g2.step, rel_tol=1e-12):
        raise AlignmentError("riccati_compare needs a common node spacing")
    m = min(g1.t.size, g2.t.size)
    if m == 0:
        raise AlignmentError("the two solutions share no nodes")
    tt = g1.t[:m]
    T1, T2 = g1.horizon, g2.horizon
    if branch == "ge":
        blow_gap = T2 - T1 if not (math.isinf(T1) and math.isinf(T2)) else 0.0
        mask = tt < T1
        gap = g2.g[:m] + g1.g[:m]
    elif branch == "le":
        blow_gap = T1 - T2 if not (math.isinf(T1) and math.isinf(T2)) else 0.0
        mask = tt < T2
        gap = g1.g[:m] + g2.g[:m]
    else:
        raise ContractError("branch must be 'ge' or 'le'")
    if math.isnan(blow_gap):
        blow_gap = 0.0
    margins = {
        "pointwise": (tt[mask], gap[mask]),
        "blow_up_order": (np.array([min(T1, T2)]), np.array([blow_gap])),
    }
    v = _verdict(margins, tol)
    v.detail.update({"T1": T1, "T2": T2})
    return v

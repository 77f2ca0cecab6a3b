"""Command line runner: ``lorentz-compare run --config exp.json`` and ``lorentz-compare list``.

Exit status: 0 all margins pass, 1 a verified violation, 2 a precondition
or hypothesis rejection (including invalid configs), 3 a numerical failure
or an I/O error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from math import comb

import jsonschema
import numpy as np

from . import estimates as est
from . import hypersurface as hs
from . import radial_geometry as rg
from .comparison_ode import CurvatureProfile, f_c, solve_h
from .errors import ModelError, NumericalError, PreconditionError
from .reports import VerificationReport, emit_report
from .spacetime import SpaceForm, model_from_json, stream

EXPERIMENTS = {
    "ode": "solve h'' = G h, report r0 and the closed-form error for constant G",
    "radial-hessian": "Hessian comparison margins at sampled chronological points",
    "radial-laplacian": "Laplacian comparison margins at sampled chronological points",
    "bochner": "Bochner identity residual for the distance function",
    "hypersurface-props": "pointwise L_k u inequalities and the Gauss equation on a hypersurface",
    "newton-identities": "trace identities of the Newton transformations on random matrices",
    "estimates": "curvature estimates at the extremum of u on a compact hypersurface piece",
    "sphere-sharpness": "estimate slack and H_k = f_c(t)^k on Lorentzian spheres",
    "bernstein": "squeeze argument for constant H_k hypersurfaces",
}

_PROFILE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["constant", "even-polynomial", "polynomial", "tabulated-even"]},
        "value": {"type": "number"},
        "coefficients": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "t": {"type": "array", "items": {"type": "number"}},
        "values": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_MODEL = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["space_form", "coordinate_metric"]},
        "c": {"type": "number"},
        "n": {"type": "integer", "minimum": 1},
        "components": {"type": "string"},
        "domain": {
            "type": "object",
            "properties": {"lo": {"type": ["number", "array"]}, "hi": {"type": ["number", "array"]}},
            "additionalProperties": False,
        },
    },
    "required": ["n"],
    "additionalProperties": False,
}

_HYPERSURFACE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["graph", "sphere"]},
        "phi": {"type": "string"},
        "params": {"type": "object"},
        "box": {
            "type": "object",
            "properties": {"lo": {"type": ["number", "array"]}, "hi": {"type": ["number", "array"]}},
            "additionalProperties": False,
        },
        "nx": {"type": "integer", "minimum": 7},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["analytic", "fd"]},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_INT_OR_LIST = {"oneOf": [{"type": "integer", "minimum": 0},
                          {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}]}
_NUM_OR_LIST = {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                          {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                           "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": sorted(EXPERIMENTS)},
        "model": _MODEL,
        "G": _PROFILE,
        "hypersurface": _HYPERSURFACE,
        "t": _NUM_OR_LIST,
        "k": _INT_OR_LIST,
        "direction": {"enum": ["inf_le", "sup_ge", "both"]},
        "side": {"enum": ["lower", "upper"]},
        "bound_side": {"enum": ["upper_G", "lower_G"]},
        "method": {"enum": ["finite_difference", "jacobi"]},
        "vertex": {"type": "array", "items": {"type": "number"}},
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "step": {"type": "number", "exclusiveMinimum": 0},
        "max_n": {"type": "integer", "minimum": 1, "maximum": 12},
        "sampling": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "r_range": {"type": "array", "items": {"type": "number", "minimum": 0},
                            "minItems": 2, "maxItems": 2},
                "vectors": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {"tol": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"format": {"enum": ["csv", "json"]}, "path": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["experiment"],
    "additionalProperties": False,
}


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise PreconditionError(f"invalid config at {where}: {exc.message}") from None


def _model(cfg) -> SpaceForm:
    obj = dict(cfg.get("model", {"kind": "space_form", "c": 0.0, "n": 3}))
    obj.setdefault("kind", "space_form")
    if obj["kind"] == "space_form":
        obj.setdefault("c", 0.0)
    return model_from_json(obj)


def _profile(cfg, model=None) -> CurvatureProfile:
    if "G" in cfg:
        return CurvatureProfile.from_json(cfg["G"])
    c = getattr(model, "c", 0.0)
    return CurvatureProfile.constant(c)


def _tol(cfg, default):
    return float(cfg.get("tolerances", {}).get("tol", default))


def _list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _vertex(cfg, model):
    return np.asarray(cfg["vertex"], dtype=float) if "vertex" in cfg else np.zeros(model.dim)


def _sampling(cfg):
    s = cfg.get("sampling", {})
    return int(s.get("count", 20)), int(s.get("seed", 0)), tuple(s.get("r_range", (0.2, 2.0))), int(
        s.get("vectors", 8))


def _samples(cfg, model):
    count, seed, r_range, _ = _sampling(cfg)
    if not isinstance(model, SpaceForm):
        raise ModelError("distance-based experiments need a space_form model")
    if model.c < 0:
        cap = math.pi * model.a * (1 - 1e-3)
        r_range = (r_range[0], min(r_range[1], cap))
    return rg.sample_chronological(model, _vertex(cfg, model), count, seed, r_range)


# ---------------------------------------------------------------------------
# experiment runners; each returns (report, extra files as {suffix: text})


def _run_ode(cfg):
    G = _profile(cfg)
    t_max = float(cfg.get("t_max", 5.0))
    step = float(cfg.get("step", 1e-3))
    tol = _tol(cfg, 1e-8)
    sol = solve_h(G, t_max, step)
    rep = VerificationReport("ode", {}, G.describe(), tol,
                             "default 1e-8: RK4 at step 1e-3 against closed forms")
    stride = max(1, int(round(0.05 / step)))
    exact = None
    if G.is_constant:
        c = G.value(0.0)
        if c > 0:
            exact = lambda t: np.sinh(math.sqrt(c) * t) / math.sqrt(c)
        elif c == 0:
            exact = lambda t: t
        else:
            exact = lambda t: np.sin(math.sqrt(-c) * t) / math.sqrt(-c)
    for i in range(0, sol.t.size, stride):
        t = float(sol.t[i])
        row = {"t": t, "h": float(sol.h[i]), "h_prime": float(sol.h_prime[i])}
        if exact is not None:
            err = abs(float(sol.h[i]) - float(exact(t)))
            row["abs_error"] = err
            row["margin"] = -err
        else:
            row["margin"] = 0.0
        rep.rows.append(row)
    r0 = None if math.isinf(sol.r0) else sol.r0
    rep.extra = {"r0": r0, "step": step, "t_max": t_max}
    if exact is not None and G.value(0.0) < 0:
        rep.extra["r0_error"] = abs(sol.r0 - math.pi / math.sqrt(-G.value(0.0)))
    return rep, {}


def _run_radial(cfg, kind):
    model = _model(cfg)
    G = _profile(cfg, model)
    p = _vertex(cfg, model)
    qs = _samples(cfg, model)
    method = cfg.get("method", "finite_difference")
    if kind == "hessian":
        _, seed, _, vectors = _sampling(cfg)
        return rg.verify_hessian_comparison(model, G, qs, cfg.get("bound_side", "upper_G"), p=p,
                                            n_vectors=vectors, seed=seed,
                                            tol=_tol(cfg, rg.DEFAULT_TOL), method=method), {}
    return rg.verify_laplacian_comparison(model, G, qs, p=p, tol=_tol(cfg, rg.DEFAULT_TOL),
                                          method=method), {}


def _run_bochner(cfg):
    model = _model(cfg)
    p = _vertex(cfg, model)
    tol = _tol(cfg, 1e-3)
    rep = VerificationReport("bochner", model.describe(), "-", tol,
                             "default 1e-3: nested finite differences of the Laplacian")
    for i, q in enumerate(_samples(cfg, model)):
        _, r = rg.lorentz_distance(model, p, q)
        res = rg.bochner_residual(model, p, q)
        rep.rows.append({"sample": i, "r": r, "residual": float(res), "margin": -abs(float(res))})
    return rep, {}


def _hypersurface(cfg, model):
    spec = cfg.get("hypersurface")
    if spec is None:
        if "t" not in cfg:
            raise PreconditionError("config needs a 'hypersurface' spec")
        spec = {"kind": "sphere", "t": _list(cfg["t"])[0]}
    return hs.construct_hypersurface(spec, model, _vertex(cfg, model))


def _ks(cfg, default):
    return [int(k) for k in _list(cfg.get("k", default))]


def _run_props(cfg):
    model = _model(cfg)
    G = _profile(cfg, model)
    h = _hypersurface(cfg, model)
    sd = hs.shape_data(h)
    nf = hs.newton_family(sd)
    tol = _tol(cfg, hs.PROP_TOL)
    rep = None
    for k in _ks(cfg, 0):
        r = hs.verify_prop_lk(h, None, G, k, cfg.get("side", "lower"), tol=tol, sd=sd, nf=nf)
        for row in r.rows:
            row["k"] = k
        rep = r if rep is None else rep.merge(r)
    g = hs.gauss_residual(h, sd=sd) if h.n >= 2 else None
    if g is not None:
        rep.extra["gauss_max_residual"] = -g.min_margin
        rep.extra["gauss_tol"] = g.tol
        rep.extra["gauss_pass"] = g.passed
        rep.extra["gauss_bound_min_margin"] = g.extra["bound_min_margin"]
        rep.hypotheses["h2_nonnegative_for_bound"] = g.hypotheses["h2_nonnegative_for_bound"]
    return rep, {"nodes.csv": hs.node_dump_csv(h, sd)}


def newton_oracle_residual(A: np.ndarray) -> float:
    """Worst relative residual of the three trace identities against a brute-force oracle.

    The oracle diagonalizes A and forms S_k from explicit products over
    index subsets, with P_k acting on the i-th eigenvector by
    (-1)^k S_k(eigenvalues without the i-th).
    """
    n = A.shape[0]
    lam = np.linalg.eigvalsh(A)

    def S(vals, k):
        if k == 0:
            return 1.0
        if k > len(vals):
            return 0.0
        return float(sum(np.prod(c) for c in itertools.combinations(vals, k)))

    H = [(-1) ** k * S(lam, k) / comb(n, k) if k <= n else 0.0 for k in range(n + 3)]
    sd = hs.shape_from_matrices(A)
    nf = hs.newton_family(sd, rtol=math.inf)
    worst = 0.0
    for k in range(n):
        ck = (n - k) * comb(n, k)
        pk = np.array([(-1) ** k * S(np.delete(lam, i), k) for i in range(n)])
        oracle = {
            "trace": (float(pk.sum()), ck * H[k]),
            "trace_A": (float((lam * pk).sum()), -ck * H[k + 1]),
            "trace_A2": (float((lam**2 * pk).sum()),
                         comb(n, k + 1) * (n * H[1] * H[k + 1] - (n - k - 1) * H[k + 2])),
        }
        computed = {
            "trace": float(np.trace(nf.P[k])),
            "trace_A": float(np.trace(sd.A @ nf.P[k])),
            "trace_A2": float(np.trace(sd.A @ sd.A @ nf.P[k])),
        }
        rho = float(np.max(np.abs(lam)))
        for deg, name in zip((k, k + 1, k + 2), ("trace", "trace_A", "trace_A2")):
            lhs_oracle, rhs = oracle[name]
            scale = max(abs(lhs_oracle), abs(rhs), n * comb(n, min(k + 1, n)) * rho**deg, 1e-300)
            worst = max(worst, abs(computed[name] - rhs) / scale, abs(lhs_oracle - rhs) / scale)
    return worst


def _run_newton(cfg):
    count, seed, _, _ = _sampling(cfg)
    max_n = int(cfg.get("max_n", 8))
    tol = _tol(cfg, 1e-9)
    rep = VerificationReport("newton-identities", {}, "-", tol,
                             "default 1e-9 relative: double precision trace identities")
    for i in range(count):
        rng = stream(seed, i)
        n = int(rng.integers(1, max_n + 1))
        M = rng.normal(size=(n, n))
        A = 0.5 * (M + M.T)
        res = newton_oracle_residual(A)
        rep.rows.append({"sample": i, "n": n, "relative_residual": res, "margin": -res})
    return rep, {}


def _estimate_rows(reports):
    return [{"k": r.k, "direction": r.direction, "lhs": r.lhs, "rhs": r.rhs, "slack": r.slack,
             "margin": r.slack, "hypotheses": ";".join(r.hypotheses_met)} for r in reports]


def _directions(cfg, default="inf_le"):
    d = cfg.get("direction", default)
    return ["inf_le", "sup_ge"] if d == "both" else [d]


def _run_estimates(cfg):
    model = _model(cfg)
    G = _profile(cfg, model)
    h = _hypersurface(cfg, model)
    sd = hs.shape_data(h)
    nf = hs.newton_family(sd)
    tol = _tol(cfg, est.ESTIMATE_TOL)
    reports = [est.check_estimate(h, None, G, k, d, tol=tol, sd=sd, nf=nf)
               for k in _ks(cfg, 1) for d in _directions(cfg)]
    rep = VerificationReport("estimates", model.describe(), G.describe(), tol,
                             "default 1e-6: extremum values are exact node values",
                             rows=_estimate_rows(reports))
    rep.extra = {"surrogates": [r.surrogate.to_json() for r in reports]}
    return rep, {"table.txt": est.estimate_table(reports)}


def _run_sphere_sharpness(cfg):
    model = _model(cfg)
    ts = [float(t) for t in _list(cfg.get("t", [0.3, 0.6, 0.9, 1.2, 1.5]))]
    ks = _ks(cfg, list(range(1, model.n + 1)))
    G = _profile(cfg, model)
    tol = _tol(cfg, 1e-5)
    base = dict(cfg.get("hypersurface", {"kind": "sphere", "nx": 9}))
    rep = VerificationReport("sphere-sharpness", model.describe(), G.describe(), tol,
                             "default 1e-5: sphere nodes are exact up to rounding")
    reports = []
    for t in ts:
        spec = {**base, "kind": "sphere", "t": t}
        h = hs.construct_hypersurface(spec, model, _vertex(cfg, model))
        sd = hs.shape_data(h)
        nf = hs.newton_family(sd)
        fc = f_c(model.c, t)
        for k in ks:
            hk_err = float(np.max(np.abs(sd.H[..., k][h.interior] - fc**k)))
            for d in _directions(cfg, "both"):
                r = est.check_estimate(h, None, G, k, d, tol=tol, sd=sd, nf=nf)
                reports.append(r)
                rep.rows.append({"t": t, "k": k, "direction": d, "lhs": r.lhs, "rhs": r.rhs,
                                 "slack": r.slack, "hk_error": hk_err,
                                 "margin": -max(abs(r.slack), hk_err)})
    return rep, {"table.txt": est.estimate_table(reports)}


def _run_bernstein(cfg):
    model = _model(cfg)
    h = _hypersurface(cfg, model)
    tol = _tol(cfg, est.BERNSTEIN_TOL)
    rep = VerificationReport("bernstein", model.describe(), f"constant({model.c:g})", tol,
                             "default 1e-6: squeeze tolerance on H_k^(1/k)")
    for k in _ks(cfg, 2):
        v = est.bernstein_check(h, None, model.c, k, tol=tol)
        row = v.to_json()
        row["margin"] = min(v.squeeze_upper, v.squeeze_lower, v.allowed_width - v.band_width)
        rep.rows.append(row)
    return rep, {}


RUNNERS = {
    "ode": _run_ode,
    "radial-hessian": lambda cfg: _run_radial(cfg, "hessian"),
    "radial-laplacian": lambda cfg: _run_radial(cfg, "laplacian"),
    "bochner": _run_bochner,
    "hypersurface-props": _run_props,
    "newton-identities": _run_newton,
    "estimates": _run_estimates,
    "sphere-sharpness": _run_sphere_sharpness,
    "bernstein": _run_bernstein,
}


def run_config(cfg: dict, out_dir: str | None = None, seed: int | None = None,
               tol: float | None = None) -> tuple[int, VerificationReport | None, list[str]]:
    """Validate, dispatch and write reports; returns (exit status, report, written paths)."""
    cfg = json.loads(json.dumps(cfg))
    if seed is not None:
        cfg.setdefault("sampling", {})["seed"] = int(seed)
    if tol is not None:
        cfg.setdefault("tolerances", {})["tol"] = float(tol)
    validate_config(cfg)
    rep, extra_files = RUNNERS[cfg["experiment"]](cfg)
    out = cfg.get("output", {})
    fmt = out.get("format", "csv")
    path = out.get("path", cfg["experiment"])
    if out_dir is not None:
        path = os.path.join(out_dir, os.path.basename(path))
    written = emit_report(rep, fmt, path)
    base = os.path.splitext(written[0])[0]
    for suffix, text in extra_files.items():
        with open(f"{base}.{suffix}", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(f"{base}.{suffix}")
    passed = rep.passed and rep.extra.get("gauss_pass", True)
    return (0 if passed else 1), rep, written


def _cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        status, rep, written = run_config(cfg, args.out, args.seed, args.tol)
    except PreconditionError as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    s = rep.summary()
    print(f"{s['experiment']}: {'PASS' if status == 0 else 'VIOLATION'} "
          f"n_samples={s['n_samples']} min_margin={s['min_margin']} tol={s['tol']}")
    for path in written:
        print(f"  wrote {path}")
    return status


def _cmd_list(args) -> int:
    for name in sorted(EXPERIMENTS):
        print(f"{name:<20} {EXPERIMENTS[name]}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lorentz-compare",
                                     description="Numerical checks of Lorentzian comparison theorems.")
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run one experiment from a JSON config")
    pr.add_argument("--config", required=True, help="experiment config (JSON)")
    pr.add_argument("--seed", type=int, default=None, help="override sampling.seed")
    pr.add_argument("--out", default=None, help="directory for report files")
    pr.add_argument("--tol", type=float, default=None, help="override the pass tolerance")
    pr.set_defaults(func=_cmd_run)
    pl = sub.add_parser("list", help="list available experiments")
    pl.set_defaults(func=_cmd_list)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
